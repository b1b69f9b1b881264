//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ifcf_core::commands;
use ifcf_core::config::RunConfig;
use ifcf_core::curvature::{CurvatureFunction, CurvatureKind, KstarSampler};
use ifcf_core::diagnostics::{self, CheckStatus, RatesReport};
use ifcf_core::flow::FlowTrace;
use ifcf_core::oracle::{self, OdeOptions};
use ifcf_core::transition::{self, TransitionCurve};

const ORACLE_REL_TOL: f64 = 1e-6;
const HOMOGENEOUS_RUNTIME: Duration = Duration::from_secs(60);
const BAND_RATIO_MAX: f64 = 1.5;
const RATE_FACTOR_FULL: f64 = 1.6; // times gamma
const BREVE_FACTOR: f64 = 0.8;
const METRIC_DEVIATION_PERTURBED: f64 = 1e-2;
const METRIC_DEVIATION_HOMOGENEOUS: f64 = 1e-8;
const C3_CONSTANT: f64 = 10.0;
const MACHINE_LINEAR: f64 = 1e-12;
const RUN_LINEAR: f64 = 1e-9;
const GRADIENT_FD_TOL: f64 = 1e-6;
const CONE_POINTS: usize = 10_000;
const CURVATURE_RUNTIME: Duration = Duration::from_secs(10);

struct Run {
    config: RunConfig,
    trace: FlowTrace,
    rates: RatesReport,
    elapsed: Duration,
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(name: &str, dir: &Path) -> Run {
    let config = RunConfig::load(&config_path(name)).expect("shipped config loads");
    let start = Instant::now();
    let (_, trace) = commands::simulate_config(&config, &dir.join(name)).expect("shipped config runs");
    let elapsed = start.elapsed();
    let rates = diagnostics::rates_report(&trace, &config.diagnostics).expect("rates report");
    Run {
        config,
        trace,
        rates,
        elapsed,
    }
}

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn report(&mut self, id: usize, title: &str, pass: bool, detail: String) {
        println!("{} [{id}] {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn fitted(r: &RatesReport, name: &str) -> (f64, CheckStatus) {
    let check = r.rate(name).expect("rate present");
    (check.fit.as_ref().map_or(f64::NAN, |f| f.lambda), check.status)
}

fn homogeneous_oracle(out: &mut Outcome, hom: &Run) {
    let setup = hom.config.setup().unwrap();
    let c = setup.model.constants;
    let u0 = hom.config.initial.u0_mean;
    let times = hom.trace.times();
    let ode = oracle::homogeneous_ode(u0, &setup.model, &setup.curvature, &times, &OdeOptions::default()).unwrap();
    let mut worst_closed = 0.0_f64;
    let mut worst_ode = 0.0_f64;
    for (r, o) in hom.trace.records.iter().zip(&ode) {
        let exact = oracle::homogeneous_closed_form(u0, &c, r.t).u;
        for u in [r.u_min, r.u_max] {
            worst_closed = worst_closed.max((u / exact - 1.0).abs());
            worst_ode = worst_ode.max((u / o.u - 1.0).abs());
        }
    }
    let pass = worst_closed <= ORACLE_REL_TOL
        && worst_ode <= ORACLE_REL_TOL
        && hom.elapsed <= HOMOGENEOUS_RUNTIME
        && hom.trace.records.last().unwrap().t >= hom.config.flow.t_max * (1.0 - 1e-12);
    out.report(
        1,
        "homogeneous oracle equivalence",
        pass,
        format!(
            "max rel err vs closed form {worst_closed:.2e}, vs ODE oracle {worst_ode:.2e} (tol {ORACLE_REL_TOL:e}) \
             over {} records; runtime {:.1} s (limit {} s)",
            hom.trace.records.len(),
            hom.elapsed.as_secs_f64(),
            HOMOGENEOUS_RUNTIME.as_secs()
        ),
    );
}

fn f_growth(out: &mut Outcome, pert: &Run) {
    let b = &pert.rates.f_scaled_band;
    let pass = b.min > 0.0 && b.ratio <= BAND_RATIO_MAX;
    out.report(
        2,
        "F growth band",
        pass,
        format!(
            "F e^(-gamma t) in [{:.6}, {:.6}] on [{}, {}], ratio {:.4} (max {BAND_RATIO_MAX})",
            b.min, b.max, pert.rates.window[0], pert.rates.window[1], b.ratio
        ),
    );
}

fn rescaled_pinching(out: &mut Outcome, pert: &Run) {
    let rg = &pert.rates.rescaled_graph;
    let gamma = pert.trace.gamma;
    let (lambda, _) = fitted(&pert.rates, "u_tilde_rate");
    let pass = rg.negative && rg.overall.max < 0.0 && lambda >= RATE_FACTOR_FULL * gamma;
    out.report(
        3,
        "rescaled graph pinching",
        pass,
        format!(
            "u_tilde in [{:.6}, {:.6}]; |d u_tilde/dt| rate {lambda:.4} (min {:.4} = 1.6 gamma)",
            rg.overall.min,
            rg.overall.max,
            RATE_FACTOR_FULL * gamma
        ),
    );
}

fn umbilicality(out: &mut Outcome, pert: &Run, omega4: &Run) {
    let gamma = pert.trace.gamma;
    let (lambda, _) = fitted(&pert.rates, "umbilicity");
    let n = omega4.trace.n as f64;
    let omega = omega4.config.model.omega;
    let breve_min = BREVE_FACTOR * (n + omega - 4.0) / (2.0 * n);
    let (breve, _) = fitted(&omega4.rates, "umbilicity_breve");
    let pass = lambda >= RATE_FACTOR_FULL * gamma && breve >= breve_min && n + omega - 4.0 > 0.0;
    out.report(
        4,
        "umbilicality",
        pass,
        format!(
            "F^-1 |tf h| rate {lambda:.4} (min {:.4}); omega={omega} breve rate {breve:.4} (min {breve_min:.4})",
            RATE_FACTOR_FULL * gamma
        ),
    );
}

fn metric_limit(out: &mut Outcome, pert: &Run, hom: &Run) {
    let md = &pert.rates.metric_deviation;
    let hom_max = hom
        .trace
        .records
        .iter()
        .map(|r| r.metric_deviation)
        .fold(0.0_f64, f64::max);
    let pass = md.monotone_in_window
        && md.final_value <= METRIC_DEVIATION_PERTURBED
        && hom_max <= METRIC_DEVIATION_HOMOGENEOUS;
    out.report(
        5,
        "rescaled metric limit",
        pass,
        format!(
            "perturbed: monotone after t_max/2 = {}, final {:.3e} (max {METRIC_DEVIATION_PERTURBED:e}); \
             homogeneous: max over run {hom_max:.3e} (max {METRIC_DEVIATION_HOMOGENEOUS:e})",
            md.monotone_in_window, md.final_value
        ),
    );
}

fn transition_c3(out: &mut Outcome, pert: &Run, hom: &Run) {
    // closed-form homogeneous curve
    let c = hom.config.setup().unwrap().model.constants;
    let u0 = hom.config.initial.u0_mean;
    let hom_curve = transition::build_transition_curve(&hom.trace).unwrap();
    let closed = TransitionCurve::synthetic(
        hom_curve.h,
        hom_curve.nodes,
        "y0",
        |s| oracle::transition_closed_form(u0, &c, s),
        |s| oracle::transition_closed_form(u0, &c, s),
    );
    let closed_report = transition::c3_report(&closed, C3_CONSTANT).unwrap();
    let closed_mismatch = closed_report.rows.iter().map(|r| r.difference).fold(0.0_f64, f64::max);
    let run_linearity = transition::linearity_residual(&hom_curve);
    let hom_report = transition::c3_report(&hom_curve, C3_CONSTANT).unwrap();

    let curve = transition::build_transition_curve(&pert.trace).unwrap();
    let report = transition::c3_report(&curve, C3_CONSTANT).unwrap();
    let orders = (1..=3).all(|k| report.order_passes(k));
    let worst_margin = report
        .rows
        .iter()
        .filter(|r| r.order >= 1)
        .map(|r| r.difference / r.tolerance)
        .fold(0.0_f64, f64::max);

    let kink = |s: f64| 0.25 * s + s.abs().powi(3);
    let kinked = TransitionCurve::synthetic(curve.h, curve.nodes, "y0", kink, kink);
    let kink_report = transition::c3_report(&kinked, C3_CONSTANT).unwrap();
    let kink_fails = !kink_report.order_passes(3) && kink_report.order_passes(1) && kink_report.order_passes(2);

    let pass = closed_mismatch <= MACHINE_LINEAR
        && run_linearity <= RUN_LINEAR
        && hom_report.all_pass
        && orders
        && report.all_pass
        && kink_fails;
    out.report(
        6,
        "transition C3",
        pass,
        format!(
            "closed-form homogeneous mismatch {closed_mismatch:.1e}, run linearity {run_linearity:.1e}; \
             perturbed h_s={:.3e}, orders 1-3 {} (worst diff/tol {worst_margin:.2e}), vanishing+convergence {}; \
             kink control fails order 3: {kink_fails}",
            curve.h,
            if orders { "pass" } else { "FAIL" },
            report.vanishing.iter().chain(&report.convergence).all(|r| r.pass)
        ),
    );
}

fn invariants(out: &mut Outcome, runs: &[(&str, &Run)]) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in runs {
        let inv = &r.trace.invariants;
        pass &= inv.all_green() && inv.accepted_steps > 0;
        parts.push(format!(
            "{name}: {} steps, spacelike {} convex {} monotone {} inf-F {} metric-inverse {}",
            inv.accepted_steps,
            inv.spacelike(),
            inv.convex(),
            inv.monotone(),
            inv.inf_f_nondecreasing(),
            inv.metric_inverse()
        ));
    }
    out.report(7, "invariant suite", pass, parts.join("; "));
}

fn curvature_properties(out: &mut Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_homogeneity = 0.0_f64;
    let mut worst_euler = 0.0_f64;
    let mut worst_gradient = 0.0_f64;
    let mut points = 0;
    for kind in [CurvatureKind::MeanCurvature, CurvatureKind::NthRootGauss] {
        for n in [2usize, 3] {
            let cf = CurvatureFunction::new(kind, n);
            for _ in 0..CONE_POINTS {
                let kappa: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
                let lambda = 10f64.powf(rng.random_range(-1.0..1.0));
                let f = cf.value(&kappa).unwrap();
                let scaled: Vec<f64> = kappa.iter().map(|k| lambda * k).collect();
                worst_homogeneity = worst_homogeneity.max((cf.value(&scaled).unwrap() / (lambda * f) - 1.0).abs());
                let grad = cf.gradient(&kappa).unwrap();
                let euler: f64 = grad.iter().zip(&kappa).map(|(g, k)| g * k).sum();
                worst_euler = worst_euler.max((euler / f - 1.0).abs());
                for i in 0..n {
                    let h = 1e-5 * kappa[i];
                    let mut plus = kappa.clone();
                    let mut minus = kappa.clone();
                    plus[i] += h;
                    minus[i] -= h;
                    let fd = (cf.value(&plus).unwrap() - cf.value(&minus).unwrap()) / (2.0 * h);
                    worst_gradient = worst_gradient.max((fd - grad[i]).abs() / grad[i].abs().max(1e-300));
                }
                points += 1;
            }
        }
    }
    let cert = CurvatureFunction::new(CurvatureKind::NthRootGauss, 2)
        .certify_kstar(&KstarSampler::default())
        .unwrap();
    let elapsed = start.elapsed();
    let pass = worst_homogeneity <= 1e-12
        && worst_euler <= 1e-12
        && worst_gradient <= GRADIENT_FD_TOL
        && cert.positive
        && cert.epsilon0_estimate > 0.0
        && cert.samples >= CONE_POINTS
        && elapsed <= CURVATURE_RUNTIME;
    out.report(
        8,
        "curvature function properties",
        pass,
        format!(
            "{points} cone points: homogeneity {worst_homogeneity:.1e}, Euler {worst_euler:.1e}, \
             gradient vs FD {worst_gradient:.1e} (tol {GRADIENT_FD_TOL:e}); gauss_root (K*) eps0 {:.4} \
             from {} samples; {:.2} s (limit {} s)",
            cert.epsilon0_estimate,
            cert.samples,
            elapsed.as_secs_f64(),
            CURVATURE_RUNTIME.as_secs()
        ),
    );
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut out = Outcome { failures: 0 };

    let hom = run("homogeneous.cfg", dir.path());
    homogeneous_oracle(&mut out, &hom);
    let pert = run("perturbed.cfg", dir.path());
    f_growth(&mut out, &pert);
    rescaled_pinching(&mut out, &pert);
    let omega4 = run("omega4.cfg", dir.path());
    umbilicality(&mut out, &pert, &omega4);
    metric_limit(&mut out, &pert, &hom);
    transition_c3(&mut out, &pert, &hom);
    invariants(
        &mut out,
        &[("homogeneous.cfg", &hom), ("perturbed.cfg", &pert), ("omega4.cfg", &omega4)],
    );
    curvature_properties(&mut out);

    println!("acceptance: {} of 8 criteria passed", 8 - out.failures);
    if out.failures > 0 {
        std::process::exit(1);
    }
}
