//! ARW model spacetimes in the conformal gauge
//! `-(dx^0)^2 + sigma_ij(x^0, x) dx^i dx^j` with warp `e^{2(f + psi)}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{self, Matrix, Vector};

/// Structural constants of the model: dimension `n`, exponent `omega`, the
/// mass-like limit `m` and the left end `a` of the time interval `[a, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArwConstants {
    pub n: usize,
    pub omega: f64,
    pub gamma_tilde: f64,
    pub gamma: f64,
    pub m: f64,
    pub a: f64,
}

impl ArwConstants {
    pub fn new(n: usize, omega: f64, m: f64, a: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("dimension n must be at least 1".into()));
        }
        let excess = n as f64 + omega - 2.0;
        if !(excess > 0.0) {
            return Err(Error::Config(format!(
                "n + omega - 2 must be positive, got {excess}"
            )));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("m must be positive, got {m}")));
        }
        if !(a < 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("a must be negative, got {a}")));
        }
        let gamma_tilde = excess / 2.0;
        Ok(ArwConstants {
            n,
            omega,
            gamma_tilde,
            gamma: gamma_tilde / n as f64,
            m,
            a,
        })
    }

    pub fn check_time(&self, tau: f64) -> Result<()> {
        if tau < 0.0 && tau >= self.a {
            Ok(())
        } else {
            Err(Error::Domain { tau, a: self.a })
        }
    }
}

impl Default for ArwConstants {
    fn default() -> Self {
        ArwConstants::new(2, 2.0, 1.0, -1.0).expect("default constants are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpKind {
    /// `f = ln(-gamma_tilde sqrt(m) tau) / gamma_tilde`
    ExactPowerLaw,
    /// exact warp plus `epsilon tau^2`
    Perturbed { epsilon: f64 },
    /// exact warp plus `epsilon / tau`; violates the asymptotic conditions
    /// and exists as a negative control for the condition report
    InversePerturbed { epsilon: f64 },
}

/// `f` and its first three derivatives at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WarpDerivatives {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
    pub d3f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WarpFunction {
    pub kind: WarpKind,
    pub constants: ArwConstants,
}

impl WarpFunction {
    pub fn new(kind: WarpKind, constants: ArwConstants) -> Self {
        WarpFunction { kind, constants }
    }

    pub fn eval(&self, tau: f64) -> Result<WarpDerivatives> {
        self.constants.check_time(tau)?;
        let gt = self.constants.gamma_tilde;
        let m = self.constants.m;
        let mut d = WarpDerivatives {
            f: (-gt * m.sqrt() * tau).ln() / gt,
            df: 1.0 / (gt * tau),
            d2f: -1.0 / (gt * tau * tau),
            d3f: 2.0 / (gt * tau * tau * tau),
        };
        match self.kind {
            WarpKind::ExactPowerLaw => {}
            WarpKind::Perturbed { epsilon } => {
                d.f += epsilon * tau * tau;
                d.df += 2.0 * epsilon * tau;
                d.d2f += 2.0 * epsilon;
            }
            WarpKind::InversePerturbed { epsilon } => {
                d.f += epsilon / tau;
                d.df -= epsilon / (tau * tau);
                d.d2f += 2.0 * epsilon / (tau * tau * tau);
                d.d3f -= 6.0 * epsilon / (tau * tau * tau * tau);
            }
        }
        Ok(d)
    }

    /// `f'' + gamma_tilde f'^2`, in a cancellation-free closed form.
    pub fn combination(&self, tau: f64) -> Result<f64> {
        self.constants.check_time(tau)?;
        let gt = self.constants.gamma_tilde;
        Ok(match self.kind {
            WarpKind::ExactPowerLaw => 0.0,
            WarpKind::Perturbed { epsilon } => {
                6.0 * epsilon + 4.0 * gt * epsilon * epsilon * tau * tau
            }
            WarpKind::InversePerturbed { epsilon } => gt * epsilon * epsilon / tau.powi(4),
        })
    }

    /// Time derivative of [`WarpFunction::combination`].
    pub fn combination_derivative(&self, tau: f64) -> Result<f64> {
        self.constants.check_time(tau)?;
        let gt = self.constants.gamma_tilde;
        Ok(match self.kind {
            WarpKind::ExactPowerLaw => 0.0,
            WarpKind::Perturbed { epsilon } => 8.0 * gt * epsilon * epsilon * tau,
            WarpKind::InversePerturbed { epsilon } => {
                -4.0 * gt * epsilon * epsilon / tau.powi(5)
            }
        })
    }

    /// `|f'|^2 e^{2 gamma_tilde f}`, which tends to `m` for admissible warps.
    pub fn mass(&self, tau: f64) -> Result<f64> {
        let d = self.eval(tau)?;
        Ok(d.df * d.df * (2.0 * self.constants.gamma_tilde * d.f).exp())
    }
}

/// Shape of the perturbation `P(x)` in `sigma = I + tau^2 P(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricPerturbation {
    Flat,
    /// `P_11 = amplitude * cos x^1`, all other entries zero.
    CosineFirstAxis { amplitude: f64 },
    /// `x`-independent symmetric matrix, row-major `n x n`.
    Constant { entries: Vec<f64> },
}

/// `sigma`, `d sigma / d tau` and the spatial derivatives `d_k sigma` at one
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSample<const N: usize> {
    pub sigma: Matrix<N>,
    pub sigma_dot: Matrix<N>,
    pub d_sigma: [Matrix<N>; N],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialMetricField {
    pub perturbation: MetricPerturbation,
}

impl SpatialMetricField {
    pub fn flat() -> Self {
        SpatialMetricField {
            perturbation: MetricPerturbation::Flat,
        }
    }

    /// True when `P` does not depend on `x`.
    pub fn is_homogeneous(&self) -> bool {
        match &self.perturbation {
            MetricPerturbation::Flat | MetricPerturbation::Constant { .. } => true,
            MetricPerturbation::CosineFirstAxis { amplitude } => *amplitude == 0.0,
        }
    }

    fn perturbation_at<const N: usize>(&self, x: &Vector<N>) -> (Matrix<N>, [Matrix<N>; N]) {
        let mut p = tensor::zeros::<N>();
        let mut dp = [tensor::zeros::<N>(); N];
        match &self.perturbation {
            MetricPerturbation::Flat => {}
            MetricPerturbation::CosineFirstAxis { amplitude } => {
                if N > 0 {
                    p[0][0] = amplitude * x[0].cos();
                    dp[0][0][0] = -amplitude * x[0].sin();
                }
            }
            MetricPerturbation::Constant { entries } => {
                for i in 0..N {
                    for j in 0..N {
                        p[i][j] = entries.get(i * N + j).copied().unwrap_or(0.0);
                    }
                }
            }
        }
        (p, dp)
    }

    pub fn eval<const N: usize>(&self, tau: f64, x: &Vector<N>) -> Result<SigmaSample<N>> {
        let (p, dp) = self.perturbation_at(x);
        let t2 = tau * tau;
        let sigma = tensor::add(&tensor::identity::<N>(), &tensor::scale(&p, t2));
        let sigma_dot = tensor::scale(&p, 2.0 * tau);
        let mut d_sigma = dp;
        for d in d_sigma.iter_mut() {
            *d = tensor::scale(d, t2);
        }
        if tensor::cholesky(&sigma).is_none() {
            let min_eigenvalue = tensor::symmetric_eigen(&sigma).values[0];
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(SigmaSample {
            sigma,
            sigma_dot,
            d_sigma,
        })
    }
}

/// `psi(tau, x) = amplitude * tau^2 * cos x^1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConformalCorrection {
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSample<const N: usize> {
    pub psi: f64,
    pub psi_tau: f64,
    pub psi_grad: Vector<N>,
}

impl ConformalCorrection {
    pub fn zero() -> Self {
        ConformalCorrection { amplitude: 0.0 }
    }

    pub fn eval<const N: usize>(&self, tau: f64, x: &Vector<N>) -> PsiSample<N> {
        let mut psi_grad = [0.0; N];
        if self.amplitude == 0.0 || N == 0 {
            return PsiSample {
                psi: 0.0,
                psi_tau: 0.0,
                psi_grad,
            };
        }
        let (s, c) = x[0].sin_cos();
        psi_grad[0] = -self.amplitude * tau * tau * s;
        PsiSample {
            psi: self.amplitude * tau * tau * c,
            psi_tau: 2.0 * self.amplitude * tau * c,
            psi_grad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArwModel {
    pub constants: ArwConstants,
    pub warp: WarpFunction,
    pub sigma: SpatialMetricField,
    pub psi: ConformalCorrection,
}

impl ArwModel {
    pub fn new(
        constants: ArwConstants,
        warp: WarpKind,
        sigma: SpatialMetricField,
        psi: ConformalCorrection,
    ) -> Self {
        ArwModel {
            constants,
            warp: WarpFunction::new(warp, constants),
            sigma,
            psi,
        }
    }

    /// Exact power-law warp over a static flat torus.
    pub fn exact(constants: ArwConstants) -> Self {
        ArwModel::new(
            constants,
            WarpKind::ExactPowerLaw,
            SpatialMetricField::flat(),
            ConformalCorrection::zero(),
        )
    }

    pub fn eval_warp(&self, tau: f64) -> Result<WarpDerivatives> {
        self.warp.eval(tau)
    }

    pub fn eval_sigma<const N: usize>(&self, tau: f64, x: &Vector<N>) -> Result<SigmaSample<N>> {
        self.constants.check_time(tau)?;
        self.sigma.eval(tau, x)
    }

    /// Shifted shape operator of the coordinate slice `{x^0 = tau}` at `x`:
    /// `-1/2 sigma^{-1} sigma_dot - f' I - psi_tau I`.
    pub fn slice_shifted_curvature<const N: usize>(
        &self,
        tau: f64,
        x: &Vector<N>,
    ) -> Result<Matrix<N>> {
        let warp = self.eval_warp(tau)?;
        let s = self.sigma.eval(tau, x)?;
        let psi = self.psi.eval(tau, x);
        let sigma_inv = tensor::inverse(&s.sigma).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
        let mut out = tensor::scale(&tensor::mul(&sigma_inv, &s.sigma_dot), -0.5);
        let shift = -warp.df - psi.psi_tau;
        for (i, row) in out.iter_mut().enumerate() {
            row[i] += shift;
        }
        Ok(out)
    }

    /// Tabulates the asymptotic conditions on the warp at the given times.
    pub fn condition_report(&self, tau_samples: &[f64]) -> Result<ConditionReport> {
        condition_report(&self.warp, tau_samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub name: String,
    pub values: Vec<f64>,
    /// Known limit, when the check compares against one.
    pub expected: Option<f64>,
    /// Distance to the expected limit, or between the last two samples for
    /// convergence checks, or the maximum for boundedness checks.
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub tau_samples: Vec<f64>,
    pub rows: Vec<ConditionRow>,
    pub all_pass: bool,
}

/// Bound used for the scale-free derivative ratios `|f^(k)| / |f'|^k`.
pub const DERIVATIVE_RATIO_BOUND: f64 = 1e3;

/// Default sample times `-10^-k`, `k = 1..=6`.
pub fn default_condition_samples() -> Vec<f64> {
    (1..=6).map(|k| -(10f64.powi(-k))).collect()
}

pub fn condition_report(warp: &WarpFunction, tau_samples: &[f64]) -> Result<ConditionReport> {
    if tau_samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            found: tau_samples.len(),
            needed: 2,
        });
    }
    if tau_samples.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "condition samples must increase strictly toward 0".into(),
        ));
    }
    let tau_last = *tau_samples.last().expect("non-empty");
    let tol = 1e-6 + 10.0 * tau_last.abs();
    let m = warp.constants.m;

    let mut mass = Vec::new();
    let mut comb = Vec::new();
    let mut comb_d = Vec::new();
    let mut slope = Vec::new();
    let mut ratio2 = Vec::new();
    let mut ratio3 = Vec::new();
    for &tau in tau_samples {
        let d = warp.eval(tau)?;
        mass.push(warp.mass(tau)?);
        comb.push(warp.combination(tau)?);
        comb_d.push(warp.combination_derivative(tau)? * tau);
        slope.push(d.df);
        ratio2.push((d.d2f / (d.df * d.df)).abs());
        ratio3.push((d.d3f / (d.df * d.df * d.df)).abs());
    }

    let cauchy = |v: &[f64]| {
        let k = v.len();
        (v[k - 1] - v[k - 2]).abs()
    };
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());

    let mut rows = Vec::new();
    let dev = (mass[mass.len() - 1] - m).abs();
    rows.push(ConditionRow {
        name: "mass_limit".into(),
        pass: dev <= tol && finite(&mass),
        values: mass,
        expected: Some(m),
        deviation: dev,
        tolerance: tol,
    });
    let max_slope = slope.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rows.push(ConditionRow {
        name: "negative_slope".into(),
        pass: max_slope < 0.0,
        values: slope,
        expected: None,
        deviation: max_slope,
        tolerance: 0.0,
    });
    for (name, values) in [
        ("combination_limit", comb),
        ("combination_derivative_limit", comb_d),
    ] {
        let dev = cauchy(&values);
        rows.push(ConditionRow {
            name: name.into(),
            pass: dev <= tol && finite(&values),
            values,
            expected: None,
            deviation: dev,
            tolerance: tol,
        });
    }
    for (name, values) in [("second_derivative_ratio", ratio2), ("third_derivative_ratio", ratio3)] {
        let max = values.iter().cloned().fold(0.0_f64, f64::max);
        rows.push(ConditionRow {
            name: name.into(),
            pass: max <= DERIVATIVE_RATIO_BOUND && finite(&values),
            values,
            expected: None,
            deviation: max,
            tolerance: DERIVATIVE_RATIO_BOUND,
        });
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(ConditionReport {
        tau_samples: tau_samples.to_vec(),
        rows,
        all_pass,
    })
}
