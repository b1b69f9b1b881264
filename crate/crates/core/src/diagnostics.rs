//! Asymptotic measurements on graph states and flow traces.

use serde::{Deserialize, Serialize};

use crate::arw::ArwConstants;
use crate::error::{Error, Result};
use crate::flow::{FlowRecord, FlowTrace};
use crate::hypersurface::GraphState;
use crate::tensor::{self, Matrix};

/// Minimum number of samples inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 10;

/// `max_x F^{-1} |trace-free part of the shape operator|`.
pub fn umbilicity<const N: usize>(state: &GraphState<N>) -> f64 {
    state
        .points
        .iter()
        .map(|p| p.trace_free / p.f_value)
        .fold(0.0, f64::max)
}

/// `max_x |trace-free part of the physical-gauge shape operator|`, using
/// `e^{psi_tilde} h_breve = h + psi_tilde_alpha nu^alpha delta`.
pub fn umbilicity_breve<const N: usize>(state: &GraphState<N>) -> f64 {
    state
        .points
        .iter()
        .map(|p| (-p.psi_tilde).exp() * p.trace_free)
        .fold(0.0, f64::max)
}

/// `(gamma_tilde^2 m)^{1/gamma_tilde} (-u_tilde)^{2/gamma_tilde}`.
pub fn metric_limit_factor(u_tilde: f64, c: &ArwConstants) -> f64 {
    (c.gamma_tilde * c.gamma_tilde * c.m).powf(1.0 / c.gamma_tilde)
        * (-u_tilde).powf(2.0 / c.gamma_tilde)
}

/// The same factor written through the warp, `e^{2 f(u) + 2t/n}`; equal to
/// [`metric_limit_factor`] for the exact power law.
pub fn warp_limit_factor(f: f64, t: f64, c: &ArwConstants) -> f64 {
    (2.0 * f + 2.0 * t / c.n as f64).exp()
}

fn deviation_with<const N: usize>(state: &GraphState<N>, limit: impl Fn(usize) -> f64) -> f64 {
    let n = N as f64;
    let mut worst = 0.0_f64;
    for (i, p) in state.points.iter().enumerate() {
        // e^{2t/n} g_breve with g_breve = e^{2 psi_tilde} g
        let factor = (2.0 * state.t / n + 2.0 * p.psi_tilde).exp();
        let scaled: Matrix<N> = tensor::scale(&p.metric.g, factor);
        let diff = tensor::sub(&scaled, &tensor::scaled_identity::<N>(limit(i)));
        worst = worst.max(tensor::symmetric_operator_norm(&diff));
    }
    worst
}

/// `max_x |e^{2t/n} g_breve - limit(u_tilde) sigma_bar|` in the operator norm.
pub fn rescaled_metric_deviation<const N: usize>(state: &GraphState<N>, c: &ArwConstants) -> f64 {
    let grow = (c.gamma * state.t).exp();
    deviation_with(state, |i| metric_limit_factor(state.u[i] * grow, c))
}

/// [`rescaled_metric_deviation`] with the limit written through the warp
/// function of the exact power law.
pub fn rescaled_metric_deviation_warp_path<const N: usize>(
    state: &GraphState<N>,
    c: &ArwConstants,
) -> Result<f64> {
    let exact = crate::arw::WarpFunction::new(crate::arw::WarpKind::ExactPowerLaw, *c);
    let fs: Vec<f64> = state
        .u
        .iter()
        .map(|&u| exact.eval(u).map(|d| d.f))
        .collect::<Result<_>>()?;
    Ok(deviation_with(state, |i| warp_limit_factor(fs[i], state.t, c)))
}

/// Least-squares fit of `ln value = intercept - lambda t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub lambda: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub residual_rms: f64,
    pub samples: usize,
}

pub fn fit_rate(series: &[(f64, f64)], window: [f64; 2]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= window[0] && *t <= window[1])
        .cloned()
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            found: pts.len(),
            needed: MIN_FIT_SAMPLES,
        });
    }
    if let Some(&(t, value)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveSeries { t, value });
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (t, v) in &pts {
        sxx += (t - mt) * (t - mt);
        sxy += (t - mt) * (v.ln() - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mt;
    let rss: f64 = pts
        .iter()
        .map(|(t, v)| {
            let r = v.ln() - (intercept + slope * t);
            r * r
        })
        .sum();
    Ok(RateFit {
        lambda: -slope,
        intercept,
        window,
        residual_rms: (rss / k).sqrt(),
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Fit window; defaults to `[t_max / 2, t_max]`.
    pub fit_window: Option<[f64; 2]>,
    /// Fraction of the predicted exponent a fitted rate must reach.
    pub rate_factor: f64,
    /// Constant `C` of the transition tolerance `C h_s^{4-k}`.
    pub c3_constant: f64,
    /// Largest admissible `max / min` of `F e^{-gamma t}` in the window.
    pub band_ratio_max: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            fit_window: None,
            rate_factor: 0.8,
            c3_constant: 10.0,
            band_ratio_max: 1.5,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_factor > 0.0 && self.rate_factor <= 1.0) {
            return Err(Error::Config(format!(
                "diagnostics.rate_factor must lie in (0, 1], got {}",
                self.rate_factor
            )));
        }
        if !(self.c3_constant > 0.0) {
            return Err(Error::Config("diagnostics.c3_constant must be positive".into()));
        }
        if !(self.band_ratio_max >= 1.0) {
            return Err(Error::Config("diagnostics.band_ratio_max must be at least 1".into()));
        }
        if let Some([a, b]) = self.fit_window {
            if !(a < b) {
                return Err(Error::Config(format!(
                    "diagnostics.fit_window must be increasing, got [{a}, {b}]"
                )));
            }
        }
        Ok(())
    }

    pub fn window(&self, t_max: f64) -> [f64; 2] {
        self.fit_window.unwrap_or([0.5 * t_max, t_max])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// the quantity stays at roundoff level in the window
    Vanishing,
    /// no prediction to compare against
    Informational,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub name: String,
    pub predicted: Option<f64>,
    pub threshold: Option<f64>,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
    pub status: CheckStatus,
}

/// Series whose values stay below this in the fit window are reported as
/// vanishing rather than fitted.
pub const VANISHING_FLOOR: f64 = 1e-14;

fn rate_check(
    name: &str,
    series: Vec<(f64, f64)>,
    window: [f64; 2],
    predicted: Option<f64>,
    factor: f64,
) -> RateCheck {
    let threshold = predicted.map(|p| factor * p);
    let in_window = series.iter().filter(|(t, _)| *t >= window[0] && *t <= window[1]);
    let vanishing = in_window.clone().count() > 0 && in_window.clone().all(|(_, v)| v.abs() <= VANISHING_FLOOR);
    if vanishing {
        return RateCheck {
            name: name.into(),
            predicted,
            threshold,
            fit: None,
            error: None,
            status: CheckStatus::Vanishing,
        };
    }
    match fit_rate(&series, window) {
        Ok(fit) => {
            let status = match threshold {
                Some(th) if fit.lambda >= th => CheckStatus::Pass,
                Some(_) => CheckStatus::Fail,
                None => CheckStatus::Informational,
            };
            RateCheck {
                name: name.into(),
                predicted,
                threshold,
                fit: Some(fit),
                error: None,
                status,
            }
        }
        Err(e) => RateCheck {
            name: name.into(),
            predicted,
            threshold,
            fit: None,
            error: Some(e.to_string()),
            status: CheckStatus::Error,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
}

fn band(records: &[&FlowRecord], lo: impl Fn(&FlowRecord) -> f64, hi: impl Fn(&FlowRecord) -> f64) -> Band {
    let min = records.iter().map(|r| lo(r)).fold(f64::INFINITY, f64::min);
    let max = records.iter().map(|r| hi(r)).fold(f64::NEG_INFINITY, f64::max);
    Band {
        min,
        max,
        ratio: max / min,
    }
}

/// Bounds and contraction of the rescaled graph `u_tilde = u e^{gamma t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledGraphReport {
    /// band over the whole run
    pub overall: Band,
    /// band after `t1`
    pub late: Band,
    pub t1: f64,
    /// `max u_tilde - min u_tilde` over the torus at `t1` and at the end
    pub oscillation_at_t1: f64,
    pub oscillation_final: f64,
    /// summed variation in time of `min u_tilde` and `max u_tilde` after `t1`
    pub temporal_variation: f64,
    /// `u_tilde` stays in a fixed negative interval
    pub negative: bool,
}

pub fn rescaled_graph(trace: &FlowTrace, t1: f64) -> Result<RescaledGraphReport> {
    let all: Vec<&FlowRecord> = trace.records.iter().collect();
    let late: Vec<&FlowRecord> = trace.records.iter().filter(|r| r.t >= t1).collect();
    if late.is_empty() {
        return Err(Error::InsufficientSamples { found: 0, needed: 1 });
    }
    let overall = band(&all, |r| r.u_tilde_min, |r| r.u_tilde_max);
    let late_band = band(&late, |r| r.u_tilde_min, |r| r.u_tilde_max);
    let temporal_variation = late
        .windows(2)
        .map(|w| (w[1].u_tilde_min - w[0].u_tilde_min).abs() + (w[1].u_tilde_max - w[0].u_tilde_max).abs())
        .sum();
    let first = late[0];
    let last = late[late.len() - 1];
    Ok(RescaledGraphReport {
        negative: overall.max < 0.0,
        overall,
        late: late_band,
        t1,
        oscillation_at_t1: first.u_tilde_max - first.u_tilde_min,
        oscillation_final: last.u_tilde_max - last.u_tilde_min,
        temporal_variation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeviationReport {
    pub initial: f64,
    pub at_window_start: f64,
    pub final_value: f64,
    /// nonincreasing between consecutive records inside the window
    pub monotone_in_window: bool,
    /// number of record pairs in the window where the deviation grew
    pub increases: usize,
}

fn metric_deviation_report(trace: &FlowTrace, window: [f64; 2]) -> MetricDeviationReport {
    let late: Vec<&FlowRecord> = trace
        .records
        .iter()
        .filter(|r| r.t >= window[0] && r.t <= window[1])
        .collect();
    let increases = late
        .windows(2)
        .filter(|w| w[1].metric_deviation > w[0].metric_deviation)
        .count();
    MetricDeviationReport {
        initial: trace.records.first().map_or(f64::NAN, |r| r.metric_deviation),
        at_window_start: late.first().map_or(f64::NAN, |r| r.metric_deviation),
        final_value: trace.records.last().map_or(f64::NAN, |r| r.metric_deviation),
        monotone_in_window: increases == 0,
        increases,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub window: [f64; 2],
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub n: usize,
    pub rate_factor: f64,
    pub rates: Vec<RateCheck>,
    /// `F e^{-gamma t}` over the window
    pub f_scaled_band: Band,
    pub f_scaled_band_pass: bool,
    pub rescaled_graph: RescaledGraphReport,
    pub metric_deviation: MetricDeviationReport,
    pub curvature_pinch_final: f64,
    pub invariants_green: bool,
}

impl RatesReport {
    pub fn rate(&self, name: &str) -> Option<&RateCheck> {
        self.rates.iter().find(|r| r.name == name)
    }
}

/// Fits every decay rate the asymptotic theory predicts, over the window
/// of `config` (default `[t_max / 2, t_max]`).
pub fn rates_report(trace: &FlowTrace, config: &DiagnosticsConfig) -> Result<RatesReport> {
    config.validate()?;
    let t_end = trace.records.last().map_or(trace.t_max, |r| r.t);
    let window = config.window(t_end);
    let gamma = trace.gamma;
    let n = trace.n as f64;
    // n + omega - 4 over 2n, from gamma_tilde = (n + omega - 2) / 2
    let breve_exponent = (2.0 * trace.gamma_tilde - 2.0) / (2.0 * n);
    let f = config.rate_factor;
    let rates = vec![
        rate_check("u_tilde_rate", trace.series(|r| r.u_tilde_rate_max), window, Some(2.0 * gamma), f),
        rate_check("umbilicity", trace.series(|r| r.umbilicity), window, Some(2.0 * gamma), f),
        rate_check(
            "umbilicity_breve",
            trace.series(|r| r.umbilicity_breve),
            window,
            (breve_exponent > 0.0).then_some(breve_exponent),
            f,
        ),
        rate_check("gradient", trace.series(|r| r.grad_norm_max), window, Some(gamma), f),
        rate_check("tilt", trace.series(|r| r.tilt_max), window, Some(2.0 * gamma), f),
        rate_check("speed", trace.series(|r| r.speed_max), window, Some(2.0 * gamma), f),
        rate_check("metric_deviation", trace.series(|r| r.metric_deviation), window, None, f),
        rate_check("curvature_pinch", trace.series(|r| r.curvature_pinch), window, None, f),
    ];
    let late: Vec<&FlowRecord> = trace
        .records
        .iter()
        .filter(|r| r.t >= window[0] && r.t <= window[1])
        .collect();
    if late.is_empty() {
        return Err(Error::InsufficientSamples { found: 0, needed: 1 });
    }
    let f_band = band(&late, |r| r.f_scaled_min, |r| r.f_scaled_max);
    Ok(RatesReport {
        window,
        gamma,
        gamma_tilde: trace.gamma_tilde,
        n: trace.n,
        rate_factor: f,
        rates,
        f_scaled_band_pass: f_band.min > 0.0 && f_band.ratio <= config.band_ratio_max,
        f_scaled_band: f_band,
        rescaled_graph: rescaled_graph(trace, window[0])?,
        metric_deviation: metric_deviation_report(trace, window),
        curvature_pinch_final: trace.records.last().map_or(f64::NAN, |r| r.curvature_pinch),
        invariants_green: trace.invariants.all_green(),
    })
}
