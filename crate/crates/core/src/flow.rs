//! Method-of-lines integration of `du/dt = v / F` with classical RK4.

use serde::{Deserialize, Serialize};

use crate::arw::ArwModel;
use crate::curvature::CurvatureFunction;
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::hypersurface::{self, GraphState, Grid, KAPPA_TOL, METRIC_INVERSE_TOL, SPACELIKE_MARGIN};
use crate::tensor::{self, Vector};

/// Allowed decrease of `inf F` per unit time.
pub const INF_F_DRIFT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub t_max: f64,
    /// The run stops once `max u` exceeds this value.
    pub u_floor: f64,
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Steps between trace records (the first and last step are always kept).
    pub record_every: usize,
    /// Steps between field snapshots; 0 keeps only the first and last.
    pub snapshot_every: usize,
    pub max_halvings: u32,
    pub trajectory_tracking: bool,
    /// Material points to follow, in `[0, 2 pi)^n`.
    pub seeds: Vec<Vec<f64>>,
    /// Offset of the companion tracers used for derivatives in the seed.
    pub seed_offset: f64,
    /// `inf u0` must lie in `(far_future_bound, 0)`.
    pub far_future_bound: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t_max: 10.0,
            u_floor: -1e-3,
            cfl: 0.2,
            dt_min: 1e-8,
            dt_max: 1e-2,
            record_every: 1,
            snapshot_every: 0,
            max_halvings: 10,
            trajectory_tracking: false,
            seeds: Vec::new(),
            seed_offset: 1e-2,
            far_future_bound: -0.1,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("flow.t_max must be positive, got {}", self.t_max));
        }
        if !(self.u_floor < 0.0) {
            return bad(format!("flow.u_floor must be negative, got {}", self.u_floor));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("flow.cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return bad(format!(
                "flow.dt_min ({}) and flow.dt_max ({}) must satisfy 0 < dt_min <= dt_max",
                self.dt_min, self.dt_max
            ));
        }
        if self.record_every == 0 {
            return bad("flow.record_every must be at least 1".into());
        }
        if !(self.far_future_bound < 0.0) {
            return bad("flow.far_future_bound must be negative".into());
        }
        if !(self.seed_offset > 0.0 && self.seed_offset < 0.5) {
            return bad(format!("flow.seed_offset must lie in (0, 0.5), got {}", self.seed_offset));
        }
        for s in &self.seeds {
            if s.len() != n {
                return bad(format!("flow.seeds entries must have {n} coordinates, got {s:?}"));
            }
        }
        if self.trajectory_tracking && self.seeds.is_empty() {
            return bad("flow.trajectory_tracking needs at least one seed".into());
        }
        Ok(())
    }

    /// Checks the initial field against the far-future precondition.
    pub fn validate_initial(&self, u0: &[f64]) -> Result<()> {
        let inf = u0.iter().cloned().fold(f64::INFINITY, f64::min);
        let sup = u0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(inf > self.far_future_bound && sup < 0.0) {
            return Err(Error::Config(format!(
                "initial graph must lie in ({}, 0); got inf {inf}, sup {sup}",
                self.far_future_bound
            )));
        }
        Ok(())
    }
}

/// Scalar summary of one accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub t: f64,
    /// step size that led to this record (0 for the initial record)
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub u_tilde_min: f64,
    pub u_tilde_max: f64,
    /// `max |d u_tilde / dt|` with `u_tilde = u e^{gamma t}`
    pub u_tilde_rate_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// `min F e^{-gamma t}`
    pub f_scaled_min: f64,
    pub f_scaled_max: f64,
    pub tilde_v_max: f64,
    /// `max (tilde_v - 1)`
    pub tilt_max: f64,
    /// `max |Du|_sigma`
    pub grad_norm_max: f64,
    /// `max F^{-1} |trace-free part of the shape operator|`
    pub umbilicity: f64,
    /// same for the physical-gauge operator, without the `F^{-1}` weight
    pub umbilicity_breve: f64,
    pub metric_deviation: f64,
    /// `max |kappa_i |u| - 1 / gamma_tilde|`
    pub curvature_pinch: f64,
    /// `max |dx/dt|_sigma` of material points
    pub speed_max: f64,
    pub kappa_min: f64,
    pub rate_min: f64,
    pub metric_residual_max: f64,
}

/// Worst values of the monitored invariants over all accepted steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantLog {
    pub accepted_steps: usize,
    pub rejected_attempts: usize,
    pub min_kappa: f64,
    pub max_grad_norm_sq: f64,
    pub min_rate: f64,
    pub max_metric_residual: f64,
    /// largest `(inf F(t_prev) - inf F(t)) / dt`, clipped at 0
    pub max_inf_f_decrease_rate: f64,
    pub u_max_increasing: bool,
    pub times_increasing: bool,
}

impl InvariantLog {
    fn new() -> Self {
        InvariantLog {
            accepted_steps: 0,
            rejected_attempts: 0,
            min_kappa: f64::INFINITY,
            max_grad_norm_sq: 0.0,
            min_rate: f64::INFINITY,
            max_metric_residual: 0.0,
            max_inf_f_decrease_rate: 0.0,
            u_max_increasing: true,
            times_increasing: true,
        }
    }

    fn observe<const N: usize>(&mut self, state: &GraphState<N>) {
        self.min_kappa = self.min_kappa.min(state.min_kappa());
        self.max_grad_norm_sq = self.max_grad_norm_sq.max(state.max_grad_norm_sq());
        self.min_rate = self
            .min_rate
            .min(state.points.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min));
        self.max_metric_residual = self.max_metric_residual.max(state.max_inverse_residual());
    }

    fn observe_step<const N: usize>(&mut self, prev: &GraphState<N>, next: &GraphState<N>) {
        self.accepted_steps += 1;
        let dt = next.t - prev.t;
        if !(dt > 0.0) {
            self.times_increasing = false;
        }
        if !(next.max_u() > prev.max_u()) {
            self.u_max_increasing = false;
        }
        let decrease = (prev.min_f() - next.min_f()) / dt;
        self.max_inf_f_decrease_rate = self.max_inf_f_decrease_rate.max(decrease.max(0.0));
        self.observe(next);
    }

    pub fn spacelike(&self) -> bool {
        self.max_grad_norm_sq < 1.0 - SPACELIKE_MARGIN
    }

    pub fn convex(&self) -> bool {
        self.min_kappa > KAPPA_TOL
    }

    pub fn monotone(&self) -> bool {
        self.min_rate > 0.0 && self.u_max_increasing && self.times_increasing
    }

    pub fn inf_f_nondecreasing(&self) -> bool {
        self.max_inf_f_decrease_rate <= INF_F_DRIFT
    }

    pub fn metric_inverse(&self) -> bool {
        self.max_metric_residual <= METRIC_INVERSE_TOL
    }

    pub fn all_green(&self) -> bool {
        self.spacelike()
            && self.convex()
            && self.monotone()
            && self.inf_f_nondecreasing()
            && self.metric_inverse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMax,
    UFloor,
}

/// Field values on the whole grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub kappa: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

impl Snapshot {
    fn from_state<const N: usize>(state: &GraphState<N>, step: usize) -> Self {
        Snapshot {
            step,
            t: state.t,
            x: state.points.iter().map(|p| p.x.to_vec()).collect(),
            u: state.u.clone(),
            v: state.points.iter().map(|p| p.metric.v).collect(),
            kappa: state.points.iter().map(|p| p.kappa.to_vec()).collect(),
            f: state.points.iter().map(|p| p.f_value).collect(),
        }
    }
}

/// One followed material point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: usize,
    /// `None` for the seed itself, `Some((axis, sign))` for a companion
    /// tracer started at `seed + sign * seed_offset * e_axis`.
    pub companion: Option<(usize, i8)>,
    pub origin: Vec<f64>,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    /// `x(t) - origin`
    pub displacement: Vec<f64>,
    /// graph height at `x(t)`
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub n: usize,
    pub resolution: usize,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub t_max: f64,
    pub seed_offset: f64,
    pub records: Vec<FlowRecord>,
    pub invariants: InvariantLog,
    pub stop: Option<StopReason>,
    pub trajectories: Vec<Trajectory>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

impl FlowTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn series(&self, f: impl Fn(&FlowRecord) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, f(r))).collect()
    }
}

/// A run that stopped on an error, with what it produced so far.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAbort {
    pub error: Error,
    pub trace: FlowTrace,
    /// last accepted field, for post-mortem inspection
    pub snapshot: Option<Snapshot>,
}

impl std::fmt::Display for FlowAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "flow aborted after {} steps: {}", self.trace.invariants.accepted_steps, self.error)
    }
}

impl std::error::Error for FlowAbort {}

impl From<Error> for FlowAbort {
    fn from(error: Error) -> Self {
        FlowAbort {
            error,
            trace: FlowTrace {
                n: 0,
                resolution: 0,
                gamma: 0.0,
                gamma_tilde: 0.0,
                t_max: 0.0,
                seed_offset: 0.0,
                records: Vec::new(),
                invariants: InvariantLog::new(),
                stop: None,
                trajectories: Vec::new(),
                snapshots: Vec::new(),
            },
            snapshot: None,
        }
    }
}

/// Everything the integrator needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct FlowSystem<'a> {
    pub grid: &'a Grid,
    pub model: &'a ArwModel,
    pub cf: &'a CurvatureFunction,
}

impl FlowSystem<'_> {
    pub fn assemble<const N: usize>(&self, u: Vec<f64>, t: f64) -> Result<GraphState<N>> {
        hypersurface::assemble_geometry::<N>(u, t, self.grid, self.model, self.cf)
    }
}

/// `du/dt = v / F` on the grid; fails if any value is not positive.
pub fn rhs<const N: usize>(state: &GraphState<N>) -> Result<Vec<f64>> {
    state
        .points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if p.rate > 0.0 && p.rate.is_finite() {
                Ok(p.rate)
            } else {
                Err(Error::NotMonotone { index, rate: p.rate })
            }
        })
        .collect()
}

/// `cfl dx^2 / max(tilde_v F^{-2} tr F^{ij})`, clamped to `[dt_min, dt_max]`.
pub fn adaptive_dt<const N: usize>(state: &GraphState<N>, config: &FlowConfig) -> f64 {
    let coeff = state
        .points
        .iter()
        .map(|p| p.metric.tilde_v * tensor::trace(&p.f_tensor) / (p.f_value * p.f_value))
        .fold(0.0_f64, f64::max);
    let dx = state.grid.dx;
    let dt = if coeff > 0.0 {
        config.cfl * dx * dx / coeff
    } else {
        f64::INFINITY
    };
    dt.clamp(config.dt_min, config.dt_max)
}

/// Positions of followed material points, as displacements from `origins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracers<const N: usize> {
    pub origins: Vec<Vector<N>>,
    pub displacement: Vec<Vector<N>>,
}

impl<const N: usize> Tracers<N> {
    pub fn empty() -> Self {
        Tracers {
            origins: Vec::new(),
            displacement: Vec::new(),
        }
    }

    fn positions(&self, disp: &[Vector<N>]) -> Vec<Vector<N>> {
        self.origins
            .iter()
            .zip(disp)
            .map(|(o, d)| {
                let mut x = *o;
                for k in 0..N {
                    x[k] = (x[k] + d[k]).rem_euclid(std::f64::consts::TAU);
                }
                x
            })
            .collect()
    }

    fn velocities(&self, state: &GraphState<N>, disp: &[Vector<N>]) -> Vec<Vector<N>> {
        if self.origins.is_empty() {
            return Vec::new();
        }
        let fields: Vec<Vec<f64>> = (0..N)
            .map(|k| state.points.iter().map(|p| p.velocity[k]).collect())
            .collect();
        self.positions(disp)
            .iter()
            .map(|x| {
                let mut vel = [0.0; N];
                for k in 0..N {
                    vel[k] = hypersurface::interpolate_cubic(&fields[k], &state.grid, x);
                }
                vel
            })
            .collect()
    }

    /// Graph heights at the current tracer positions.
    pub fn heights(&self, state: &GraphState<N>) -> Vec<f64> {
        self.positions(&self.displacement)
            .iter()
            .map(|x| hypersurface::interpolate_cubic(&state.u, &state.grid, x))
            .collect()
    }
}

fn axpy<const N: usize>(base: &[Vector<N>], k: &[Vector<N>], h: f64) -> Vec<Vector<N>> {
    base.iter()
        .zip(k)
        .map(|(b, k)| {
            let mut out = *b;
            for i in 0..N {
                out[i] += h * k[i];
            }
            out
        })
        .collect()
}

fn rk4_attempt<const N: usize>(
    sys: &FlowSystem,
    state: &GraphState<N>,
    tracers: &Tracers<N>,
    dt: f64,
) -> Result<(GraphState<N>, Vec<Vector<N>>)> {
    let shift = |k: &[f64], h: f64| -> Vec<f64> {
        state.u.iter().zip(k).map(|(u, k)| u + h * k).collect()
    };
    let k1 = rhs(state)?;
    let v1 = tracers.velocities(state, &tracers.displacement);

    let s2 = sys.assemble::<N>(shift(&k1, 0.5 * dt), state.t + 0.5 * dt)?;
    let k2 = rhs(&s2)?;
    let d2 = axpy(&tracers.displacement, &v1, 0.5 * dt);
    let v2 = tracers.velocities(&s2, &d2);

    let s3 = sys.assemble::<N>(shift(&k2, 0.5 * dt), state.t + 0.5 * dt)?;
    let k3 = rhs(&s3)?;
    let d3 = axpy(&tracers.displacement, &v2, 0.5 * dt);
    let v3 = tracers.velocities(&s3, &d3);

    let s4 = sys.assemble::<N>(shift(&k3, dt), state.t + dt)?;
    let k4 = rhs(&s4)?;
    let d4 = axpy(&tracers.displacement, &v3, dt);
    let v4 = tracers.velocities(&s4, &d4);

    let u_new: Vec<f64> = (0..state.u.len())
        .map(|i| state.u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let disp_new: Vec<Vector<N>> = (0..tracers.origins.len())
        .map(|j| {
            let mut d = tracers.displacement[j];
            for k in 0..N {
                d[k] += dt / 6.0 * (v1[j][k] + 2.0 * v2[j][k] + 2.0 * v3[j][k] + v4[j][k]);
            }
            d
        })
        .collect();
    let next = sys.assemble::<N>(u_new, state.t + dt)?;
    rhs(&next)?;
    Ok((next, disp_new))
}

/// One RK4 step of size `dt`, re-assembling the geometry at every stage.
/// A failing attempt is retried with half the step up to `max_halvings`
/// times. Returns the new state and the step actually taken.
pub fn step<const N: usize>(
    sys: &FlowSystem,
    state: &GraphState<N>,
    tracers: &mut Tracers<N>,
    dt: f64,
    max_halvings: u32,
) -> Result<(GraphState<N>, f64, u32)> {
    if dt == 0.0 {
        return Ok((state.clone(), 0.0, 0));
    }
    let mut h = dt;
    let mut halvings = 0;
    loop {
        match rk4_attempt(sys, state, tracers, h) {
            Ok((next, disp)) => {
                tracers.displacement = disp;
                return Ok((next, h, halvings));
            }
            Err(err) => {
                if halvings >= max_halvings {
                    return Err(Error::Stiffness {
                        t: state.t,
                        halvings,
                        cause: err.to_string(),
                    });
                }
                halvings += 1;
                h *= 0.5;
            }
        }
    }
}

fn record<const N: usize>(
    state: &GraphState<N>,
    sys: &FlowSystem,
    step: usize,
    dt: f64,
) -> FlowRecord {
    let c = &sys.model.constants;
    let grow = (c.gamma * state.t).exp();
    let mut r = FlowRecord {
        step,
        t: state.t,
        dt,
        u_min: f64::INFINITY,
        u_max: f64::NEG_INFINITY,
        u_tilde_min: f64::INFINITY,
        u_tilde_max: f64::NEG_INFINITY,
        u_tilde_rate_max: 0.0,
        f_min: f64::INFINITY,
        f_max: 0.0,
        f_scaled_min: f64::INFINITY,
        f_scaled_max: 0.0,
        tilde_v_max: 0.0,
        tilt_max: 0.0,
        grad_norm_max: 0.0,
        umbilicity: diagnostics::umbilicity(state),
        umbilicity_breve: diagnostics::umbilicity_breve(state),
        metric_deviation: diagnostics::rescaled_metric_deviation(state, c),
        curvature_pinch: 0.0,
        speed_max: 0.0,
        kappa_min: f64::INFINITY,
        rate_min: f64::INFINITY,
        metric_residual_max: 0.0,
    };
    for p in &state.points {
        r.u_min = r.u_min.min(p.u);
        r.u_max = r.u_max.max(p.u);
        r.u_tilde_min = r.u_tilde_min.min(p.u * grow);
        r.u_tilde_max = r.u_tilde_max.max(p.u * grow);
        r.u_tilde_rate_max = r.u_tilde_rate_max.max((grow * (p.rate + c.gamma * p.u)).abs());
        r.f_min = r.f_min.min(p.f_value);
        r.f_max = r.f_max.max(p.f_value);
        r.f_scaled_min = r.f_scaled_min.min(p.f_value / grow);
        r.f_scaled_max = r.f_scaled_max.max(p.f_value / grow);
        r.tilde_v_max = r.tilde_v_max.max(p.metric.tilde_v);
        r.tilt_max = r.tilt_max.max(p.metric.tilt);
        r.grad_norm_max = r.grad_norm_max.max(p.metric.grad_norm_sq.sqrt());
        for k in p.kappa {
            r.curvature_pinch = r.curvature_pinch.max((k * p.u.abs() - 1.0 / c.gamma_tilde).abs());
        }
        r.speed_max = r.speed_max.max(tensor::quadratic_form(&p.sigma, &p.velocity).sqrt());
        r.kappa_min = r.kappa_min.min(p.kappa[0]);
        r.rate_min = r.rate_min.min(p.rate);
        r.metric_residual_max = r.metric_residual_max.max(p.metric.inverse_residual);
    }
    r
}

fn make_tracers<const N: usize>(config: &FlowConfig) -> (Tracers<N>, Vec<Trajectory>) {
    let mut tracers = Tracers::empty();
    let mut meta = Vec::new();
    if !config.trajectory_tracking {
        return (tracers, meta);
    }
    for (si, seed) in config.seeds.iter().enumerate() {
        let mut base = [0.0; N];
        base.copy_from_slice(seed);
        let mut push = |origin: Vector<N>, companion| {
            tracers.origins.push(origin);
            tracers.displacement.push([0.0; N]);
            meta.push(Trajectory {
                seed: si,
                companion,
                origin: origin.to_vec(),
                samples: Vec::new(),
            });
        };
        push(base, None);
        for axis in 0..N {
            for sign in [-1i8, 1] {
                let mut o = base;
                o[axis] += sign as f64 * config.seed_offset;
                push(o, Some((axis, sign)));
            }
        }
    }
    (tracers, meta)
}

/// Tracer samples held in fixed-size form during the run; per-sample heap
/// vectors interleaved with the large per-stage buffers fragment the heap.
type TracerLog<const N: usize> = Vec<Vec<(f64, Vector<N>, f64)>>;

fn sample_tracers<const N: usize>(state: &GraphState<N>, tracers: &Tracers<N>, log: &mut TracerLog<N>) {
    let heights = tracers.heights(state);
    for (j, samples) in log.iter_mut().enumerate() {
        samples.push((state.t, tracers.displacement[j], heights[j]));
    }
}

fn flush_tracers<const N: usize>(log: TracerLog<N>, meta: &mut [Trajectory]) {
    for (samples, m) in log.into_iter().zip(meta.iter_mut()) {
        m.samples = samples
            .into_iter()
            .map(|(t, d, u)| TrajectorySample {
                t,
                displacement: d.to_vec(),
                u,
            })
            .collect();
    }
}

/// Integrates the flow from `u0` until `t_max` or until `max u` passes
/// `u_floor`.
pub fn run(
    u0: Vec<f64>,
    grid: &Grid,
    model: &ArwModel,
    cf: &CurvatureFunction,
    config: &FlowConfig,
) -> std::result::Result<FlowTrace, FlowAbort> {
    match grid.n {
        1 => run_n::<1>(u0, grid, model, cf, config),
        2 => run_n::<2>(u0, grid, model, cf, config),
        n => Err(Error::Config(format!("the flow supports n = 1 or 2, got {n}")).into()),
    }
}

fn run_n<const N: usize>(
    u0: Vec<f64>,
    grid: &Grid,
    model: &ArwModel,
    cf: &CurvatureFunction,
    config: &FlowConfig,
) -> std::result::Result<FlowTrace, FlowAbort> {
    config.validate(N)?;
    config.validate_initial(&u0)?;
    let sys = FlowSystem { grid, model, cf };
    let mut state = sys.assemble::<N>(u0, 0.0)?;
    rhs(&state)?;
    let (mut tracers, trajectories) = make_tracers::<N>(config);
    let mut trace = FlowTrace {
        n: N,
        resolution: grid.resolution,
        gamma: model.constants.gamma,
        gamma_tilde: model.constants.gamma_tilde,
        t_max: config.t_max,
        seed_offset: config.seed_offset,
        records: vec![record(&state, &sys, 0, 0.0)],
        invariants: InvariantLog::new(),
        stop: None,
        trajectories,
        snapshots: vec![Snapshot::from_state(&state, 0)],
    };
    trace.invariants.observe(&state);
    let mut log: TracerLog<N> = vec![Vec::new(); trace.trajectories.len()];
    sample_tracers(&state, &tracers, &mut log);

    let mut steps = 0usize;
    loop {
        let remaining = config.t_max - state.t;
        if remaining <= 1e-12 * config.t_max {
            trace.stop = Some(StopReason::TMax);
            break;
        }
        let dt = adaptive_dt(&state, config).min(remaining);
        let (next, taken, halvings) =
            match step(&sys, &state, &mut tracers, dt, config.max_halvings) {
                Ok(ok) => ok,
                Err(error) => {
                    let snapshot = Some(Snapshot::from_state(&state, steps));
                    if trace.records.last().map(|r| r.step) != Some(steps) {
                        trace.records.push(record(&state, &sys, steps, 0.0));
                    }
                    flush_tracers(log, &mut trace.trajectories);
                    return Err(FlowAbort {
                        error,
                        trace,
                        snapshot,
                    });
                }
            };
        steps += 1;
        trace.invariants.rejected_attempts += halvings as usize;
        trace.invariants.observe_step(&state, &next);
        state = next;
        sample_tracers(&state, &tracers, &mut log);
        let floor_hit = state.max_u() > config.u_floor;
        let done = floor_hit || config.t_max - state.t <= 1e-12 * config.t_max;
        if steps % config.record_every == 0 || done {
            trace.records.push(record(&state, &sys, steps, taken));
        }
        if done || (config.snapshot_every > 0 && steps % config.snapshot_every == 0) {
            trace.snapshots.push(Snapshot::from_state(&state, steps));
        }
        if floor_hit {
            trace.stop = Some(StopReason::UFloor);
            break;
        }
    }
    flush_tracers(log, &mut trace.trajectories);
    Ok(trace)
}
