#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use ifcf_core::arw::{ArwConstants, ArwModel, WarpFunction, WarpKind};
use ifcf_core::curvature::{CurvatureFunction, CurvatureKind};
use ifcf_core::diagnostics::{self, fit_rate};
use ifcf_core::hypersurface::{assemble_geometry, Grid};
use ifcf_core::oracle;
use ifcf_core::tensor;
use ifcf_core::transition::{self, lagrange5, TransitionCurve};

fn spd3() -> impl Strategy<Value = [[f64; 3]; 3]> {
    prop::array::uniform9(-1.0..1.0f64).prop_map(|e| {
        let b = [[e[0], e[1], e[2]], [e[3], e[4], e[5]], [e[6], e[7], e[8]]];
        let mut a = tensor::mul(&tensor::transpose(&b), &b);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 0.5;
        }
        a
    })
}

fn kind() -> impl Strategy<Value = CurvatureKind> {
    prop_oneof![Just(CurvatureKind::MeanCurvature), Just(CurvatureKind::NthRootGauss)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inverse_of_spd_matrix(a in spd3()) {
        let inv = tensor::inverse(&a).unwrap();
        let id = tensor::mul(&a, &inv);
        prop_assert!(tensor::max_abs(&tensor::sub(&id, &tensor::identity())) < 1e-10);
    }

    #[test]
    fn eigen_decomposition_reconstructs(a in spd3()) {
        let e = tensor::symmetric_eigen(&a);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let mut rebuilt = tensor::zeros::<3>();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    rebuilt[i][j] += e.values[k] * e.vectors[i][k] * e.vectors[j][k];
                }
            }
        }
        prop_assert!(tensor::max_abs(&tensor::sub(&rebuilt, &a)) < 1e-10);
    }

    #[test]
    fn curvature_is_homogeneous_and_monotone(
        kind in kind(),
        kappa in prop::collection::vec(1e-3..1e3f64, 2..=4),
        lambda in 0.01..100.0f64,
    ) {
        let cf = CurvatureFunction::new(kind, kappa.len());
        let f = cf.value(&kappa).unwrap();
        let scaled: Vec<f64> = kappa.iter().map(|k| k * lambda).collect();
        prop_assert!((cf.value(&scaled).unwrap() / (lambda * f) - 1.0).abs() < 1e-12);
        let grad = cf.gradient(&kappa).unwrap();
        prop_assert!(grad.iter().all(|&g| g > 0.0));
        let euler: f64 = grad.iter().zip(&kappa).map(|(g, k)| g * k).sum();
        prop_assert!((euler / f - 1.0).abs() < 1e-12);
        // normalisation F(1, ..., 1) = n
        let ones = vec![1.0; kappa.len()];
        prop_assert!((cf.value(&ones).unwrap() - kappa.len() as f64).abs() < 1e-14);
    }

    #[test]
    fn kstar_ratio_is_bounded_for_gauss_root(kappa in prop::collection::vec(1e-3..1e3f64, 2..=3)) {
        let cf = CurvatureFunction::new(CurvatureKind::NthRootGauss, kappa.len());
        let r = cf.kstar_ratio(&kappa).unwrap();
        prop_assert!(r > 0.0 && r <= 1.0 + 1e-12);
    }

    #[test]
    fn warp_combination_matches_derivatives(tau in -0.99..-1e-3f64, eps in -1.0..1.0f64, omega in 0.5..6.0f64) {
        let c = ArwConstants::new(2, omega, 1.0, -1.0).unwrap();
        for kind in [WarpKind::ExactPowerLaw, WarpKind::Perturbed { epsilon: eps }, WarpKind::InversePerturbed { epsilon: eps }] {
            let w = WarpFunction::new(kind, c);
            let d = w.eval(tau).unwrap();
            let direct = d.d2f + c.gamma_tilde * d.df * d.df;
            let scale = d.d2f.abs().max(1.0);
            prop_assert!((w.combination(tau).unwrap() - direct).abs() < 1e-9 * scale);
            let h = 1e-5 * tau.abs();
            let fd = (w.combination(tau + h).unwrap() - w.combination(tau - h).unwrap()) / (2.0 * h);
            let exact = w.combination_derivative(tau).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn closed_form_rescaled_graph_is_constant(u0 in -0.099..-1e-3f64, t in 0.0..30.0f64, omega in 0.5..6.0f64) {
        let c = ArwConstants::new(2, omega, 1.0, -1.0).unwrap();
        let s = oracle::homogeneous_closed_form(u0, &c, t);
        prop_assert!((s.u * (c.gamma * t).exp() / u0 - 1.0).abs() < 1e-13);
        prop_assert!(s.u < 0.0 && s.u >= u0);
        // F |u| = n / gamma_tilde
        prop_assert!((s.f_value * s.u.abs() - 2.0 / c.gamma_tilde).abs() < 1e-12 * s.f_value * s.u.abs());
    }

    #[test]
    fn fit_recovers_exponent(lambda in 0.05..5.0f64, amp in 1e-6..1e3f64) {
        let series: Vec<(f64, f64)> = (0..40).map(|k| {
            let t = 0.25 * k as f64;
            (t, amp * (-lambda * t).exp())
        }).collect();
        let fit = fit_rate(&series, [0.0, 10.0]).unwrap();
        prop_assert!((fit.lambda - lambda).abs() < 1e-9 * lambda.max(1.0));
        prop_assert!((fit.intercept - amp.ln()).abs() < 1e-8 * amp.ln().abs().max(1.0));
    }

    #[test]
    fn lagrange_reproduces_quintics(c in prop::array::uniform6(-2.0..2.0f64), t in 0.0..2.0f64) {
        let ts: Vec<f64> = (0..30).map(|k| 0.07 * k as f64).collect();
        let p = |x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
        let ys: Vec<f64> = ts.iter().map(|&x| p(x)).collect();
        prop_assert!((lagrange5(&ts, &ys, t) - p(t)).abs() < 1e-10);
    }

    #[test]
    fn smooth_mirrored_curves_match(a in -1.0..1.0f64, b in -5.0..5.0f64, h in 1e-4..1e-2f64) {
        // odd cubic: the mirrored branch continues it exactly
        let f = move |s: f64| a * s + b * s * s * s;
        let curve = TransitionCurve::synthetic(h, 8, "y0", f, f);
        let report = transition::c3_report(&curve, 10.0).unwrap();
        prop_assert!(report.all_pass, "{:?}", report.rows);
    }

    #[test]
    fn even_part_breaks_second_order(a in 0.1..1.0f64, q in 1.0..10.0f64) {
        // y = a s + q s^2 on the left, mirrored as an odd function: the
        // second derivatives differ by 4 q
        let h = 1e-3;
        let curve = TransitionCurve::synthetic(h, 8, "y0", move |s| a * s + q * s * s, move |s| a * s - q * s * s);
        let report = transition::c3_report(&curve, 10.0).unwrap();
        prop_assert!(report.order_passes(1));
        prop_assert!(!report.order_passes(2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn constant_graphs_are_umbilic(u in -0.09..-0.01f64, t in 0.0..5.0f64, gauss in any::<bool>()) {
        let c = ArwConstants::default();
        let model = ArwModel::exact(c);
        let kind = if gauss { CurvatureKind::NthRootGauss } else { CurvatureKind::MeanCurvature };
        let cf = CurvatureFunction::new(kind, 2);
        let g = Grid::new(2, 16).unwrap();
        let st = assemble_geometry::<2>(vec![u; g.len()], t, &g, &model, &cf).unwrap();
        prop_assert_eq!(diagnostics::umbilicity(&st), 0.0);
        let r0 = st.points[0].rate;
        prop_assert!(st.points.iter().all(|p| p.rate == r0));
        // u_t = 1 / F = gamma_tilde |u| / n
        prop_assert!((r0 / (c.gamma * u.abs()) - 1.0).abs() < 1e-12);
    }
}
