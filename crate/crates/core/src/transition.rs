//! Continuation of the flow through the singularity in the parameter
//! `s = -e^{-gamma t} / gamma` and one-sided derivative matching at `s = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowTrace, Trajectory};
use crate::tensor::{self, Matrix};

/// Largest number of resampled nodes per branch.
pub const MAX_NODES: usize = 32;
/// Nodes used by the one-sided stencils.
pub const STENCIL_NODES: usize = 4;
/// Admissible jump of a component at `s = 0`.
pub const JUMP_TOL: f64 = 1e-8;
/// The run must reach `e^{-gamma t} <= RANGE_LIMIT`.
pub const RANGE_LIMIT: f64 = 1e-2;

/// How the mirrored branch continues a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    /// `y(s) = -y(-s)`, the time component
    Odd,
    /// `y(s) = y(-s)`, the spatial components
    Even,
    /// both branches given independently
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub parity: Parity,
    /// highest `s`-derivative to compare
    pub max_order: usize,
    /// values at `s = -j h`, `j = 1..`
    pub left: Vec<f64>,
    /// values at `s = +j h`
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCurve {
    pub seed: usize,
    pub xi: Vec<f64>,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCurve {
    pub gamma: f64,
    /// node spacing `h_s`
    pub h: f64,
    pub nodes: usize,
    /// offset used for the seed derivatives (0 when absent)
    pub seed_offset: f64,
    pub seeds: Vec<SeedCurve>,
}

impl TransitionCurve {
    /// `s` values of the left branch, increasing.
    pub fn s_left(&self) -> Vec<f64> {
        (1..=self.nodes).rev().map(|j| -(j as f64) * self.h).collect()
    }

    /// A curve built from explicit functions of `s` on each side.
    pub fn synthetic(
        h: f64,
        nodes: usize,
        name: &str,
        left: impl Fn(f64) -> f64,
        right: impl Fn(f64) -> f64,
    ) -> Self {
        let js = 1..=nodes;
        TransitionCurve {
            gamma: f64::NAN,
            h,
            nodes,
            seed_offset: 0.0,
            seeds: vec![SeedCurve {
                seed: 0,
                xi: Vec::new(),
                components: vec![Component {
                    name: name.into(),
                    parity: Parity::Free,
                    max_order: 3,
                    left: js.clone().map(|j| left(-(j as f64) * h)).collect(),
                    right: js.map(|j| right(j as f64 * h)).collect(),
                }],
            }],
        }
    }
}

/// Degree-5 Lagrange interpolation through the six samples nearest to `t`.
pub fn lagrange5(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let len = ts.len();
    let width = 6.min(len);
    let idx = ts.partition_point(|&x| x < t);
    let start = idx.saturating_sub(width / 2).min(len - width);
    let mut total = 0.0;
    for a in start..start + width {
        let mut w = 1.0;
        for b in start..start + width {
            if a != b {
                w *= (t - ts[b]) / (ts[a] - ts[b]);
            }
        }
        total += w * ys[a];
    }
    total
}

fn mirror(left: &[f64], parity: Parity) -> Vec<f64> {
    match parity {
        Parity::Odd => left.iter().map(|v| -v).collect(),
        _ => left.to_vec(),
    }
}

fn component(name: String, parity: Parity, max_order: usize, left: Vec<f64>) -> Component {
    Component {
        name,
        parity,
        max_order,
        right: mirror(&left, parity),
        left,
    }
}

/// Resamples the tracked trajectories of `trace` onto the uniform grid
/// `s_j = -j h`, `h = |s(t_last)|`, and mirrors them across `s = 0`.
pub fn build_transition_curve(trace: &FlowTrace) -> Result<TransitionCurve> {
    if trace.trajectories.is_empty() {
        return Err(Error::InsufficientRange("the trace holds no trajectories".into()));
    }
    let gamma = trace.gamma;
    let first = &trace.trajectories[0];
    let (Some(t0), Some(t_last)) = (first.samples.first().map(|s| s.t), first.samples.last().map(|s| s.t))
    else {
        return Err(Error::InsufficientRange("trajectories hold no samples".into()));
    };
    if (-gamma * t_last).exp() > RANGE_LIMIT {
        return Err(Error::InsufficientRange(format!(
            "e^(-gamma t) = {:.3e} at the last sample; the run must reach {RANGE_LIMIT:e}",
            (-gamma * t_last).exp()
        )));
    }
    let h = (-gamma * t_last).exp() / gamma;
    // t_j = t_last - ln(j) / gamma must stay inside the sampled range
    let nodes = (1..=MAX_NODES)
        .take_while(|&j| t_last - (j as f64).ln() / gamma >= t0)
        .count();
    if nodes < STENCIL_NODES || first.samples.len() < 6 {
        return Err(Error::InsufficientRange(format!(
            "only {nodes} transition nodes are available, {STENCIL_NODES} are needed"
        )));
    }
    let t_nodes: Vec<f64> = (1..=nodes).map(|j| t_last - (j as f64).ln() / gamma).collect();

    let resample = |tr: &Trajectory, pick: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let ts: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
        let ys: Vec<f64> = (0..tr.samples.len()).map(pick).collect();
        t_nodes.iter().map(|&t| lagrange5(&ts, &ys, t)).collect()
    };

    let n = trace.n;
    let mut seeds = Vec::new();
    let n_seeds = trace.trajectories.iter().map(|t| t.seed + 1).max().unwrap_or(0);
    for seed in 0..n_seeds {
        let Some(base) = trace
            .trajectories
            .iter()
            .find(|t| t.seed == seed && t.companion.is_none())
        else {
            continue;
        };
        let mut comps = Vec::new();
        comps.push(component("y0".into(), Parity::Odd, 3, resample(base, &|k| base.samples[k].u)));
        for i in 0..n {
            comps.push(component(
                format!("y{}", i + 1),
                Parity::Even,
                3,
                resample(base, &|k| base.samples[k].displacement[i]),
            ));
        }
        for axis in 0..n {
            let find = |sign: i8| {
                trace
                    .trajectories
                    .iter()
                    .find(|t| t.seed == seed && t.companion == Some((axis, sign)))
            };
            let (Some(minus), Some(plus)) = (find(-1), find(1)) else {
                continue;
            };
            let delta = trace.seed_offset;
            let um = resample(minus, &|k| minus.samples[k].u);
            let up = resample(plus, &|k| plus.samples[k].u);
            comps.push(component(
                format!("d{}_y0", axis + 1),
                Parity::Odd,
                2,
                up.iter().zip(&um).map(|(p, m)| (p - m) / (2.0 * delta)).collect(),
            ));
            for i in 0..n {
                let dm = resample(minus, &|k| minus.samples[k].displacement[i]);
                let dp = resample(plus, &|k| plus.samples[k].displacement[i]);
                let kron = if i == axis { 1.0 } else { 0.0 };
                comps.push(component(
                    format!("d{}_y{}", axis + 1, i + 1),
                    Parity::Even,
                    2,
                    dp.iter()
                        .zip(&dm)
                        .map(|(p, m)| kron + (p - m) / (2.0 * delta))
                        .collect(),
                ));
            }
        }
        seeds.push(SeedCurve {
            seed,
            xi: base.origin.clone(),
            components: comps,
        });
    }
    Ok(TransitionCurve {
        gamma,
        h,
        nodes,
        seed_offset: trace.seed_offset,
        seeds,
    })
}

/// Weights `w[k][j]` with `sum_j w[k][j] y(z_j) = y^(k)(0)` for the cubic
/// through the nodes `z_j = sign * (j + 1) * h`.
fn one_sided_weights(h: f64, sign: f64) -> [[f64; STENCIL_NODES]; STENCIL_NODES] {
    let mut v: Matrix<STENCIL_NODES> = tensor::zeros();
    for (j, row) in v.iter_mut().enumerate() {
        let z = sign * (j + 1) as f64;
        for (m, entry) in row.iter_mut().enumerate() {
            *entry = z.powi(m as i32);
        }
    }
    let inv = tensor::inverse(&v).expect("distinct nodes");
    let mut w = [[0.0; STENCIL_NODES]; STENCIL_NODES];
    let mut factorial = 1.0;
    for k in 0..STENCIL_NODES {
        if k > 0 {
            factorial *= k as f64;
        }
        for j in 0..STENCIL_NODES {
            w[k][j] = factorial * inv[k][j] / h.powi(k as i32);
        }
    }
    w
}

fn estimate(values: &[f64], weights: &[[f64; STENCIL_NODES]; STENCIL_NODES], k: usize) -> f64 {
    (0..STENCIL_NODES).map(|j| weights[k][j] * values[j]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C3Row {
    pub seed: usize,
    pub component: String,
    /// derivative order in `s`; 0 is the continuity check
    pub order: usize,
    pub left: f64,
    pub right: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub seed: usize,
    pub quantity: String,
    /// extrapolated value at `s = 0`
    pub value: f64,
    /// distance checked against the tolerance
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C3Report {
    pub h_s: f64,
    pub constant: f64,
    pub rows: Vec<C3Row>,
    /// `dy^i/ds -> 0` and `d y^0 / d xi -> 0`
    pub vanishing: Vec<LimitRow>,
    /// `d y^j / d xi^i` converges (Cauchy difference of the two nodes
    /// nearest to the singularity)
    pub convergence: Vec<LimitRow>,
    pub all_pass: bool,
    /// highest order passing for every component
    pub max_order_passed: usize,
    pub sampling_note: String,
}

impl C3Report {
    pub fn order_passes(&self, order: usize) -> bool {
        self.rows.iter().filter(|r| r.order == order).all(|r| r.pass)
    }
}

/// Compares one-sided derivative estimates of every component at `s = 0`
/// with tolerance `constant * h_s^(4 - k)`.
pub fn c3_report(curve: &TransitionCurve, constant: f64) -> Result<C3Report> {
    if curve.nodes < STENCIL_NODES {
        return Err(Error::InsufficientRange(format!(
            "{} nodes per branch, {STENCIL_NODES} needed",
            curve.nodes
        )));
    }
    let h = curve.h;
    let wl = one_sided_weights(h, -1.0);
    let wr = one_sided_weights(h, 1.0);
    let tol = |k: usize| constant * h.powi(4 - k as i32);
    let mut rows = Vec::new();
    let mut vanishing = Vec::new();
    let mut convergence = Vec::new();
    for sc in &curve.seeds {
        for c in &sc.components {
            for k in 0..=c.max_order {
                let left = estimate(&c.left, &wl, k);
                let right = estimate(&c.right, &wr, k);
                let difference = (left - right).abs();
                let tolerance = if k == 0 { JUMP_TOL } else { tol(k) };
                rows.push(C3Row {
                    seed: sc.seed,
                    component: c.name.clone(),
                    order: k,
                    left,
                    right,
                    difference,
                    tolerance,
                    pass: difference <= tolerance,
                });
            }
            let spatial = c.name.starts_with('y') && c.name != "y0";
            if spatial {
                let value = estimate(&c.left, &wl, 1);
                vanishing.push(LimitRow {
                    seed: sc.seed,
                    quantity: format!("d{}/ds", c.name),
                    value,
                    residual: value.abs(),
                    tolerance: tol(1),
                    pass: value.abs() <= tol(1),
                });
            } else if c.name.starts_with('d') && c.name.ends_with("_y0") {
                let value = estimate(&c.left, &wl, 0);
                vanishing.push(LimitRow {
                    seed: sc.seed,
                    quantity: c.name.clone(),
                    value,
                    residual: value.abs(),
                    tolerance: tol(0),
                    pass: value.abs() <= tol(0),
                });
            } else if c.name.starts_with('d') {
                let value = estimate(&c.left, &wl, 0);
                let residual = (c.left[0] - c.left[1]).abs();
                convergence.push(LimitRow {
                    seed: sc.seed,
                    quantity: c.name.clone(),
                    value,
                    residual,
                    tolerance: tol(2),
                    pass: residual <= tol(2),
                });
            }
        }
    }
    let max_order_passed = (0..=3)
        .take_while(|&k| rows.iter().filter(|r| r.order == k).all(|r| r.pass))
        .last()
        .unwrap_or(0);
    let all_pass = rows.iter().all(|r| r.pass)
        && vanishing.iter().all(|r| r.pass)
        && convergence.iter().all(|r| r.pass);
    let mixed = curve
        .seeds
        .iter()
        .flat_map(|s| &s.components)
        .filter(|c| c.name.starts_with('d'))
        .count();
    let sampling_note = format!(
        "{} seeds; seed derivatives by central differences with offset {} ({} mixed components); \
         finitely many seeds only sample the joint regularity in (s, xi)",
        curve.seeds.len(),
        curve.seed_offset,
        mixed
    );
    Ok(C3Report {
        h_s: h,
        constant,
        rows,
        vanishing,
        convergence,
        all_pass,
        max_order_passed,
        sampling_note,
    })
}

/// Largest relative deviation of the time component from the straight line
/// through the origin fitted to it, over all seeds.
pub fn linearity_residual(curve: &TransitionCurve) -> f64 {
    let s = curve.s_left();
    let mut worst = 0.0_f64;
    for sc in &curve.seeds {
        let Some(c) = sc.components.iter().find(|c| c.name == "y0") else {
            continue;
        };
        // left values are stored by increasing j, s_left by increasing s
        let pairs: Vec<(f64, f64)> = s.iter().rev().cloned().zip(c.left.iter().cloned()).chain(
            s.iter().rev().map(|x| -x).zip(c.right.iter().cloned()),
        )
        .collect();
        let slope = pairs.iter().map(|(s, y)| s * y).sum::<f64>()
            / pairs.iter().map(|(s, _)| s * s).sum::<f64>();
        for (s, y) in pairs {
            worst = worst.max(((y - slope * s) / (slope * s)).abs());
        }
    }
    worst
}
