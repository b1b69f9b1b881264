//! Reference solutions for spatially constant data.

use serde::Serialize;

use crate::arw::{ArwConstants, ArwModel};
use crate::curvature::CurvatureFunction;
use crate::error::{Error, Result};
use crate::hypersurface;
use crate::tensor::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneousSample {
    pub t: f64,
    pub u: f64,
    /// `u e^{gamma t}`
    pub u_tilde: f64,
    pub f_value: f64,
}

/// Closed-form flow of a constant graph in the exact power-law model over a
/// static metric: `u = u0 e^{-gamma t}`, `F = n / (gamma_tilde |u|)`.
pub fn homogeneous_closed_form(u0: f64, constants: &ArwConstants, t: f64) -> HomogeneousSample {
    let u = u0 * (-constants.gamma * t).exp();
    HomogeneousSample {
        t,
        u,
        u_tilde: u0,
        f_value: constants.n as f64 / (constants.gamma_tilde * u.abs()),
    }
}

/// `y^0(s) = -gamma u0 s`, the constant-graph transition curve on both sides
/// of the singularity.
pub fn transition_closed_form(u0: f64, constants: &ArwConstants, s: f64) -> f64 {
    -constants.gamma * u0 * s
}

/// `F` of the coordinate slice at time `tau`, with the convexity check.
pub fn slice_curvature(model: &ArwModel, cf: &CurvatureFunction, tau: f64) -> Result<f64> {
    match model.constants.n {
        1 => slice_curvature_n::<1>(model, cf, tau),
        2 => slice_curvature_n::<2>(model, cf, tau),
        3 => slice_curvature_n::<3>(model, cf, tau),
        n => Err(Error::Config(format!("unsupported dimension {n}"))),
    }
}

fn slice_curvature_n<const N: usize>(
    model: &ArwModel,
    cf: &CurvatureFunction,
    tau: f64,
) -> Result<f64> {
    let x = [0.0; N];
    let warp = model.eval_warp(tau)?;
    let s = model.eval_sigma::<N>(tau, &x)?;
    let psi = model.psi.eval::<N>(tau, &x);
    // covariant form of the slice operator: -sigma_dot/2 + shift * sigma
    let shift = -warp.df - psi.psi_tau;
    let cov: Matrix<N> = tensor::add(&tensor::scale(&s.sigma_dot, -0.5), &tensor::scale(&s.sigma, shift));
    let kappa = hypersurface::metric_spectrum(&cov, &s.sigma)?;
    if kappa[0] <= 0.0 {
        return Err(Error::ConvexityLost { tau });
    }
    cf.value(&kappa)
}

/// Tolerance and step limits of the reference integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// relative error per step
    pub tol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            tol: 1e-10,
            h_init: 1e-3,
            max_steps: 1_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau; the equation is autonomous so the nodes
// c_i are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince integration of the scalar equation `y' = rhs(y)`
/// through the increasing output times `times` (the first is the start).
pub fn integrate_scalar(
    rhs: impl Fn(f64) -> Result<f64>,
    y0: f64,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<f64>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("output times must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let Some(&t_start) = times.first() else {
        return Ok(out);
    };
    let mut t = t_start;
    let mut y = y0;
    let mut h = opts.h_init;
    let mut steps = 0usize;
    out.push(y);
    for &target in &times[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Stiffness {
                    t,
                    halvings: 0,
                    cause: "reference integrator exceeded its step budget".into(),
                });
            }
            let hit = h >= target - t;
            let step = if hit { target - t } else { h };
            let mut k = [0.0; 7];
            for s in 0..7 {
                let ys = y + step * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
                k[s] = rhs(ys)?;
            }
            let y5 = y + step * (0..7).map(|j| B5[j] * k[j]).sum::<f64>();
            let y4 = y + step * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
            let scale = opts.tol * y.abs().max(y5.abs()).max(f64::MIN_POSITIVE);
            let err = (y5 - y4).abs() / scale;
            if err <= 1.0 {
                t = if hit { target } else { t + step };
                y = y5;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(hit && err <= 1.0) {
                h = step * factor;
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// Integrates `du/dt = 1 / F(slice operator at u)` for a constant graph.
/// Requires a spatially homogeneous model.
pub fn homogeneous_ode(
    u0: f64,
    model: &ArwModel,
    cf: &CurvatureFunction,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<HomogeneousSample>> {
    if !model.sigma.is_homogeneous() || model.psi.amplitude != 0.0 {
        return Err(Error::Config(
            "the homogeneous reference needs an x-independent metric perturbation and psi = 0"
                .into(),
        ));
    }
    model.constants.check_time(u0)?;
    let us = integrate_scalar(|u| Ok(1.0 / slice_curvature(model, cf, u)?), u0, times, opts)?;
    let gamma = model.constants.gamma;
    times
        .iter()
        .zip(us)
        .map(|(&t, u)| {
            Ok(HomogeneousSample {
                t,
                u,
                u_tilde: u * (gamma * t).exp(),
                f_value: slice_curvature(model, cf, u)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arw::{ConformalCorrection, MetricPerturbation, SpatialMetricField, WarpKind};
    use crate::curvature::CurvatureKind;

    fn gauss() -> CurvatureFunction {
        CurvatureFunction::new(CurvatureKind::NthRootGauss, 2)
    }

    #[test]
    fn closed_form_examples() {
        let c = ArwConstants::default();
        let s = homogeneous_closed_form(-0.5, &c, 2.0);
        assert!((s.u + 0.5 * (-1.0f64).exp()).abs() < 1e-16);
        assert!((s.u + 0.18394).abs() < 1e-5);
        assert_eq!(homogeneous_closed_form(-0.5, &c, 0.0).u, -0.5);
        assert!((homogeneous_closed_form(-0.5, &c, 0.0).f_value * 0.5 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn transition_examples() {
        let c = ArwConstants::default();
        assert_eq!(transition_closed_form(-0.5, &c, 1.0), 0.25);
        assert_eq!(transition_closed_form(-0.5, &c, 0.0), 0.0);
        for s in [0.1, 0.7, 1.9] {
            assert_eq!(transition_closed_form(-0.5, &c, -s), -transition_closed_form(-0.5, &c, s));
        }
    }

    #[test]
    fn integrator_is_fifth_order_on_exponential() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let ys = integrate_scalar(|y| Ok(-0.5 * y), -0.05, &times, &OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(ys) {
            let exact = -0.05 * (-0.5 * t).exp();
            assert!(((y - exact) / exact).abs() < 1e-9);
        }
    }

    #[test]
    fn ode_matches_closed_form_for_exact_model() {
        let c = ArwConstants::default();
        let model = ArwModel::exact(c);
        let times: Vec<f64> = (0..=100).map(|k| 0.1 * k as f64).collect();
        let ode = homogeneous_ode(-0.05, &model, &gauss(), &times, &OdeOptions::default()).unwrap();
        let mean = CurvatureFunction::new(CurvatureKind::MeanCurvature, 2);
        let ode_mean = homogeneous_ode(-0.05, &model, &mean, &times, &OdeOptions::default()).unwrap();
        for ((a, b), &t) in ode.iter().zip(&ode_mean).zip(&times) {
            let exact = homogeneous_closed_form(-0.05, &c, t);
            assert!(((a.u - exact.u) / exact.u).abs() <= 1e-9, "t={t}");
            assert!(((b.u - exact.u) / exact.u).abs() <= 1e-9, "t={t}");
            assert!(((a.f_value - exact.f_value) / exact.f_value).abs() <= 1e-9);
        }
    }

    #[test]
    fn perturbed_warp_limit_profile() {
        // With gamma_tilde = 1, n = 2 and f' = 1/tau + 2 eps tau the equation
        // separates: ln|u| + eps u^2 = ln|u0| + eps u0^2 - t/2, so
        // u e^{t/2} tends to u0 exp(eps u0^2).
        let c = ArwConstants::default();
        let eps = 0.1;
        let model = ArwModel::new(
            c,
            WarpKind::Perturbed { epsilon: eps },
            SpatialMetricField::flat(),
            ConformalCorrection::zero(),
        );
        let times: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let ode = homogeneous_ode(-0.05, &model, &gauss(), &times, &OdeOptions::default()).unwrap();
        for s in &ode {
            let implicit = s.u.abs().ln() + eps * s.u * s.u - ((0.05f64).ln() + eps * 0.0025 - s.t / 2.0);
            assert!(implicit.abs() < 1e-9, "t={} residual {implicit}", s.t);
        }
        let limit = -0.05 * (eps * 0.0025f64).exp();
        let last = ode.last().unwrap();
        assert!((last.u_tilde - limit).abs() < 1e-10);
        // frozen regression value of the limit profile
        assert!((last.u_tilde - (-5.0012501572929365e-2)).abs() < 1e-14, "{:.17e}", last.u_tilde);

        let zero = ArwModel::new(
            c,
            WarpKind::Perturbed { epsilon: 0.0 },
            SpatialMetricField::flat(),
            ConformalCorrection::zero(),
        );
        let a = homogeneous_ode(-0.05, &zero, &gauss(), &times, &OdeOptions::default()).unwrap();
        let b = homogeneous_ode(-0.05, &ArwModel::exact(c), &gauss(), &times, &OdeOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inhomogeneous_model_is_rejected() {
        let model = ArwModel::new(
            ArwConstants::default(),
            WarpKind::ExactPowerLaw,
            SpatialMetricField {
                perturbation: MetricPerturbation::CosineFirstAxis { amplitude: 0.5 },
            },
            ConformalCorrection::zero(),
        );
        assert!(homogeneous_ode(-0.05, &model, &gauss(), &[0.0, 1.0], &OdeOptions::default()).is_err());
    }

    #[test]
    fn convexity_loss_is_reported() {
        // a large constant metric perturbation makes -sigma_dot/2 dominate
        // the warp term at early times
        let model = ArwModel::new(
            ArwConstants::default(),
            WarpKind::ExactPowerLaw,
            SpatialMetricField {
                perturbation: MetricPerturbation::Constant {
                    entries: vec![-0.9, 0.0, 0.0, 0.0],
                },
            },
            ConformalCorrection::zero(),
        );
        let err = slice_curvature(&model, &gauss(), -0.99).unwrap_err();
        assert!(matches!(err, Error::ConvexityLost { .. }), "{err:?}");
    }
}
