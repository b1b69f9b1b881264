//! C interface to `ifcf-core`.
//!
//! Every function returns an [`IfcfStatus`]; on failure the message is
//! available from [`ifcf_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ifcf_core::arw::{ArwConstants, ArwModel, ConformalCorrection, MetricPerturbation, SpatialMetricField, WarpKind};
use ifcf_core::config::RunConfig;
use ifcf_core::curvature::{CurvatureFunction, CurvatureKind};
use ifcf_core::flow::{self, FlowTrace};
use ifcf_core::{io, oracle, Error};

/// Result codes. Values 2 to 9 match the exit codes of the `ifcf` binary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfcfStatus {
    Ok = 0,
    Config = 2,
    NotSpacelike = 3,
    NotConvex = 4,
    Stiffness = 5,
    Io = 6,
    Domain = 7,
    Numerical = 8,
    Series = 9,
    NullPointer = 10,
    Panic = 11,
}

impl From<&Error> for IfcfStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => IfcfStatus::Config,
            3 => IfcfStatus::NotSpacelike,
            4 => IfcfStatus::NotConvex,
            5 => IfcfStatus::Stiffness,
            6 => IfcfStatus::Io,
            7 => IfcfStatus::Domain,
            8 => IfcfStatus::Numerical,
            _ => IfcfStatus::Series,
        }
    }
}

/// Warp kinds accepted by [`ifcf_model_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfcfWarp {
    Exact = 0,
    Perturbed = 1,
    InversePerturbed = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IfcfCurvature {
    Mean = 0,
    GaussRoot = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IfcfWarpDerivatives {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
    pub d3f: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IfcfHomogeneousSample {
    pub t: f64,
    pub u: f64,
    pub u_tilde: f64,
    pub f_value: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IfcfRecord {
    pub t: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub umbilicity: f64,
    pub metric_deviation: f64,
}

/// Opaque ARW model.
pub struct IfcfModel {
    model: ArwModel,
}

/// Opaque flow run built from a TOML config.
pub struct IfcfSimulation {
    config: RunConfig,
    trace: Option<FlowTrace>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), (IfcfStatus, String)>) -> IfcfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IfcfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside ifcf".into());
            IfcfStatus::Panic
        }
    }
}

fn core(e: Error) -> (IfcfStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (IfcfStatus, String) {
    (IfcfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (IfcfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (IfcfStatus::Config, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (IfcfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ifcf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a model with `sigma = I + tau^2 amplitude cos x^1 e_1 e_1` and
/// `psi = psi_amplitude tau^2 cos x^1`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ifcf_model_new(
    n: usize,
    omega: f64,
    m: f64,
    a: f64,
    warp: IfcfWarp,
    epsilon: f64,
    sigma_amplitude: f64,
    psi_amplitude: f64,
    out: *mut *mut IfcfModel,
) -> IfcfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let constants = ArwConstants::new(n, omega, m, a).map_err(core)?;
        let kind = match warp {
            IfcfWarp::Exact => WarpKind::ExactPowerLaw,
            IfcfWarp::Perturbed => WarpKind::Perturbed { epsilon },
            IfcfWarp::InversePerturbed => WarpKind::InversePerturbed { epsilon },
        };
        let perturbation = if sigma_amplitude == 0.0 {
            MetricPerturbation::Flat
        } else {
            MetricPerturbation::CosineFirstAxis {
                amplitude: sigma_amplitude,
            }
        };
        let model = ArwModel::new(
            constants,
            kind,
            SpatialMetricField { perturbation },
            ConformalCorrection {
                amplitude: psi_amplitude,
            },
        );
        *out = Box::into_raw(Box::new(IfcfModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ifcf_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ifcf_model_free(model: *mut IfcfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Warp function and its first three derivatives at time `tau`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ifcf_warp_eval(
    model: *const IfcfModel,
    tau: f64,
    out: *mut IfcfWarpDerivatives,
) -> IfcfStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = model.model.eval_warp(tau).map_err(core)?;
        *out = IfcfWarpDerivatives {
            f: d.f,
            df: d.df,
            d2f: d.d2f,
            d3f: d.d3f,
        };
        Ok(())
    })
}

fn curvature(kind: IfcfCurvature, n: usize) -> CurvatureFunction {
    let kind = match kind {
        IfcfCurvature::Mean => CurvatureKind::MeanCurvature,
        IfcfCurvature::GaussRoot => CurvatureKind::NthRootGauss,
    };
    CurvatureFunction::new(kind, n)
}

/// `F(kappa)` for `n` principal curvatures.
///
/// # Safety
/// `kappa` must point to `n` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ifcf_curvature_value(
    kind: IfcfCurvature,
    kappa: *const f64,
    n: usize,
    out: *mut f64,
) -> IfcfStatus {
    guard(|| {
        let k = slice_arg(kappa, n, "kappa")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = curvature(kind, n).value(k).map_err(core)?;
        Ok(())
    })
}

/// `dF / d kappa_i` written to `out[0..n]`.
///
/// # Safety
/// `kappa` must point to `n` readable values and `out` to `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn ifcf_curvature_gradient(
    kind: IfcfCurvature,
    kappa: *const f64,
    n: usize,
    out: *mut f64,
) -> IfcfStatus {
    guard(|| {
        let k = slice_arg(kappa, n, "kappa")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let grad = curvature(kind, n).gradient(k).map_err(core)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&grad);
        Ok(())
    })
}

/// Constant-graph closed form of the exact model at time `t`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ifcf_oracle_homogeneous(
    n: usize,
    omega: f64,
    m: f64,
    u0: f64,
    t: f64,
    out: *mut IfcfHomogeneousSample,
) -> IfcfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = ArwConstants::new(n, omega, m, -1.0).map_err(core)?;
        if !(u0 < 0.0 && u0 > c.a) {
            return Err((IfcfStatus::Config, format!("u0 must lie in ({}, 0), got {u0}", c.a)));
        }
        let s = oracle::homogeneous_closed_form(u0, &c, t);
        *out = IfcfHomogeneousSample {
            t: s.t,
            u: s.u,
            u_tilde: s.u_tilde,
            f_value: s.f_value,
        };
        Ok(())
    })
}

/// Parses and validates a TOML run config.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ifcf_simulation_new(toml: *const c_char, out: *mut *mut IfcfSimulation) -> IfcfStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = RunConfig::parse(text).map_err(core)?;
        config.setup().map_err(core)?;
        *out = Box::into_raw(Box::new(IfcfSimulation { config, trace: None }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`ifcf_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ifcf_simulation_free(sim: *mut IfcfSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Runs the flow. A failed run keeps its partial trace.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ifcf_simulation_run(sim: *mut IfcfSimulation) -> IfcfStatus {
    guard(|| {
        let sim = sim.as_mut().ok_or_else(|| null("sim"))?;
        let setup = sim.config.setup().map_err(core)?;
        match flow::run(setup.u0, &setup.grid, &setup.model, &setup.curvature, &sim.config.flow) {
            Ok(trace) => {
                sim.trace = Some(trace);
                Ok(())
            }
            Err(abort) => {
                sim.trace = Some(abort.trace);
                Err(core(abort.error))
            }
        }
    })
}

/// Number of trace records, 0 before a run.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ifcf_simulation_record_count(sim: *const IfcfSimulation, out: *mut usize) -> IfcfStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = sim.trace.as_ref().map_or(0, |t| t.records.len());
        Ok(())
    })
}

/// Scalar summary of record `index`.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ifcf_simulation_record(
    sim: *const IfcfSimulation,
    index: usize,
    out: *mut IfcfRecord,
) -> IfcfStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = sim
            .trace
            .as_ref()
            .and_then(|t| t.records.get(index))
            .ok_or_else(|| (IfcfStatus::Config, format!("no record {index}")))?;
        *out = IfcfRecord {
            t: r.t,
            u_min: r.u_min,
            u_max: r.u_max,
            f_min: r.f_min,
            f_max: r.f_max,
            umbilicity: r.umbilicity,
            metric_deviation: r.metric_deviation,
        };
        Ok(())
    })
}

/// Writes the trace directory of a finished run.
///
/// # Safety
/// `sim` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn ifcf_simulation_write_trace(sim: *const IfcfSimulation, dir: *const c_char) -> IfcfStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let dir = str_arg(dir, "dir")?;
        let trace = sim
            .trace
            .as_ref()
            .ok_or_else(|| (IfcfStatus::Config, "the simulation has not been run".to_string()))?;
        io::write_trace(Path::new(dir), trace, &sim.config.model_hash()).map_err(core)
    })
}
