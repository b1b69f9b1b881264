//! Subcommand implementations shared by the `ifcf` binary and the tests.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::arw::ArwConstants;
use crate::config::RunConfig;
use crate::curvature::{CurvatureFunction, CurvatureKind, KstarCertificate, KstarSampler};
use crate::diagnostics::{self, DiagnosticsConfig, RatesReport};
use crate::error::{Error, Result};
use crate::flow::{self, FlowTrace, InvariantLog, StopReason};
use crate::io;
use crate::oracle::{self, HomogeneousSample};
use crate::transition::{self, C3Report};

pub const RATES_FILE: &str = "rates.json";
pub const UMBILICALITY_FILE: &str = "umbilicality.csv";
pub const TRANSITION_FILE: &str = "transition.csv";
pub const C3_FILE: &str = "c3_report.json";

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub out: PathBuf,
    pub model_hash: String,
    pub steps: usize,
    pub t_final: f64,
    pub stop: Option<StopReason>,
    pub invariants: InvariantLog,
}

/// Runs the flow described by `config` and writes its trace into `out`
/// (or `output.directory`). On failure the partial trace and the last field
/// are written before the error is returned.
pub fn simulate(config_path: &Path, out: Option<&Path>) -> Result<(SimulateSummary, FlowTrace)> {
    let config = RunConfig::load(config_path)?;
    let out = match (out, &config.output.directory) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => {
            return Err(Error::Config(
                "no output directory: pass --out or set output.directory".into(),
            ))
        }
    };
    simulate_config(&config, &out)
}

pub fn simulate_config(config: &RunConfig, out: &Path) -> Result<(SimulateSummary, FlowTrace)> {
    let setup = config.setup()?;
    let hash = config.model_hash();
    match flow::run(setup.u0, &setup.grid, &setup.model, &setup.curvature, &config.flow) {
        Ok(trace) => {
            io::write_trace(out, &trace, &hash)?;
            let last = trace.records.last();
            let summary = SimulateSummary {
                out: out.to_path_buf(),
                model_hash: hash,
                steps: trace.invariants.accepted_steps,
                t_final: last.map_or(0.0, |r| r.t),
                stop: trace.stop,
                invariants: trace.invariants.clone(),
            };
            Ok((summary, trace))
        }
        Err(abort) => {
            // best effort: the flow error is what the caller needs to see
            let _ = io::write_trace(out, &abort.trace, &hash);
            if let Some(snap) = &abort.snapshot {
                let mut trace = abort.trace.clone();
                trace.snapshots = vec![snap.clone()];
                let _ = io::write_trace(&out.join("abort"), &trace, &hash);
            }
            Err(abort.error)
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleArgs {
    pub u0: f64,
    pub t_max: f64,
    pub dt: f64,
    pub n: usize,
    pub omega: f64,
    pub m: f64,
}

impl Default for OracleArgs {
    fn default() -> Self {
        OracleArgs {
            u0: -0.5,
            t_max: 10.0,
            dt: 0.1,
            n: 2,
            omega: 2.0,
            m: 1.0,
        }
    }
}

/// Closed-form constant-graph solution of the exact model on `t = k dt`.
pub fn oracle_samples(args: &OracleArgs) -> Result<Vec<HomogeneousSample>> {
    let c = ArwConstants::new(args.n, args.omega, args.m, -1.0)?;
    if !(args.u0 < 0.0 && args.u0 > c.a) {
        return Err(Error::Config(format!("--u0 must lie in ({}, 0), got {}", c.a, args.u0)));
    }
    if !(args.dt > 0.0 && args.t_max >= 0.0 && args.t_max.is_finite()) {
        return Err(Error::Config("--dt must be positive and --t-max non-negative".into()));
    }
    let steps = (args.t_max / args.dt + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|k| oracle::homogeneous_closed_form(args.u0, &c, k as f64 * args.dt))
        .collect())
}

pub fn check_curvature(kind: &str, n: usize, sampler: &KstarSampler) -> Result<KstarCertificate> {
    let kind = CurvatureKind::parse(kind)?;
    if n < 1 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    CurvatureFunction::new(kind, n).certify_kstar(sampler)
}

/// Builds the transition curve of a stored trace and writes
/// `transition.csv` and `c3_report.json` next to it.
pub fn transition(trace_dir: &Path, c3_constant: f64) -> Result<C3Report> {
    let (trace, _) = io::read_trace(trace_dir)?;
    transition_for(&trace, trace_dir, c3_constant)
}

fn transition_for(trace: &FlowTrace, dir: &Path, c3_constant: f64) -> Result<C3Report> {
    let curve = transition::build_transition_curve(trace)?;
    let report = transition::c3_report(&curve, c3_constant)?;
    io::write_transition_csv(&dir.join(TRANSITION_FILE), &curve)?;
    io::write_json(&dir.join(C3_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub rates: RatesReport,
    /// absent when the trace holds no trajectories
    pub c3: Option<C3Report>,
}

/// Writes `rates.json`, `umbilicality.csv` and, when trajectories were
/// tracked, `transition.csv` and `c3_report.json`.
pub fn report(trace_dir: &Path, config: &DiagnosticsConfig) -> Result<ReportSummary> {
    config.validate()?;
    let (trace, _) = io::read_trace(trace_dir)?;
    let rates = diagnostics::rates_report(&trace, config)?;
    io::write_json(&trace_dir.join(RATES_FILE), &rates)?;
    io::write_umbilicality_csv(&trace_dir.join(UMBILICALITY_FILE), &trace)?;
    let c3 = if trace.trajectories.is_empty() {
        None
    } else {
        Some(transition_for(&trace, trace_dir, config.c3_constant)?)
    };
    Ok(ReportSummary { rates, c3 })
}
