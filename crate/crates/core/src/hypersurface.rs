//! Pointwise geometry of a spacelike graph `x^0 = u(x)` over the flat torus
//! in the conformal-gauge ambient metric.

use rayon::prelude::*;
use serde::Serialize;

use crate::arw::ArwModel;
use crate::curvature::CurvatureFunction;
use crate::error::{Error, Result};
use crate::tensor::{self, Matrix, Vector};

/// Smallest admissible principal curvature of the shifted shape operator.
pub const KAPPA_TOL: f64 = 1e-8;
/// Graphs with `|Du|^2 >= 1 - SPACELIKE_MARGIN` are rejected.
pub const SPACELIKE_MARGIN: f64 = 1e-8;
pub const METRIC_INVERSE_TOL: f64 = 1e-10;
pub const SPECTRUM_TOL: f64 = 1e-9;

/// Uniform periodic grid on `[0, 2 pi)^n`, axis 0 varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub n: usize,
    pub resolution: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(n: usize, resolution: usize) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::Config(format!("grid dimension must be 1..=3, got {n}")));
        }
        if resolution < 16 {
            return Err(Error::Config(format!(
                "grid resolution must be at least 16, got {resolution}"
            )));
        }
        Ok(Grid {
            n,
            resolution,
            dx: std::f64::consts::TAU / resolution as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut rest = idx;
        (0..self.n)
            .map(|_| {
                let i = rest % self.resolution;
                rest /= self.resolution;
                i
            })
            .collect()
    }

    pub fn point<const N: usize>(&self, idx: usize) -> Vector<N> {
        let mut x = [0.0; N];
        let mut rest = idx;
        for xk in x.iter_mut() {
            *xk = (rest % self.resolution) as f64 * self.dx;
            rest /= self.resolution;
        }
        x
    }

    /// Index of the neighbour `offset` cells away along `axis`, wrapping.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let stride = self.resolution.pow(axis as u32);
        let i = (idx / stride) % self.resolution;
        let r = self.resolution as isize;
        let j = ((i as isize + offset) % r + r) % r;
        idx - i * stride + j as usize * stride
    }

    /// Samples `f` at every grid point.
    pub fn sample<const N: usize>(&self, f: impl Fn(&Vector<N>) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point::<N>(i))).collect()
    }

    fn check_dim<const N: usize>(&self) {
        assert_eq!(self.n, N, "grid dimension does not match the geometry dimension");
    }
}

fn d1(field: &[f64], grid: &Grid, idx: usize, axis: usize) -> f64 {
    let at = |o| field[grid.shift(idx, axis, o)];
    (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * grid.dx)
}

fn d2(field: &[f64], grid: &Grid, idx: usize, axis: usize) -> f64 {
    let at = |o| field[grid.shift(idx, axis, o)];
    let c = field[idx];
    (16.0 * ((at(1) - c) + (at(-1) - c)) - ((at(2) - c) + (at(-2) - c)))
        / (12.0 * grid.dx * grid.dx)
}

fn d11(field: &[f64], grid: &Grid, idx: usize, a: usize, b: usize) -> f64 {
    let inner = |o: isize| d1(field, grid, grid.shift(idx, a, o), b);
    (8.0 * (inner(1) - inner(-1)) - (inner(2) - inner(-2))) / (12.0 * grid.dx)
}

/// Fourth-order central differences `(u_,i, u_,ij)` at one grid point. The
/// stencils are written in difference form so constants differentiate to
/// exactly zero.
pub fn spatial_derivatives_at<const N: usize>(
    u: &[f64],
    grid: &Grid,
    idx: usize,
) -> (Vector<N>, Matrix<N>) {
    let mut du = [0.0; N];
    let mut d2u = tensor::zeros::<N>();
    for a in 0..N {
        du[a] = d1(u, grid, idx, a);
        d2u[a][a] = d2(u, grid, idx, a);
        for b in 0..a {
            let m = d11(u, grid, idx, a, b);
            d2u[a][b] = m;
            d2u[b][a] = m;
        }
    }
    (du, d2u)
}

pub fn spatial_derivatives<const N: usize>(u: &[f64], grid: &Grid) -> Vec<(Vector<N>, Matrix<N>)> {
    grid.check_dim::<N>();
    (0..grid.len())
        .map(|i| spatial_derivatives_at::<N>(u, grid, i))
        .collect()
}

/// Periodic tensor-product cubic Lagrange interpolation of a grid field.
pub fn interpolate_cubic<const N: usize>(field: &[f64], grid: &Grid, x: &Vector<N>) -> f64 {
    grid.check_dim::<N>();
    let mut base = [0isize; N];
    let mut weights = [[0.0; 4]; N];
    for k in 0..N {
        let s = x[k] / grid.dx;
        let i0 = s.floor();
        let fr = s - i0;
        base[k] = i0 as isize;
        // nodes at -1, 0, 1, 2 relative to i0
        weights[k] = [
            -fr * (fr - 1.0) * (fr - 2.0) / 6.0,
            (fr + 1.0) * (fr - 1.0) * (fr - 2.0) / 2.0,
            -(fr + 1.0) * fr * (fr - 2.0) / 2.0,
            (fr + 1.0) * fr * (fr - 1.0) / 6.0,
        ];
    }
    let r = grid.resolution as isize;
    let mut total = 0.0;
    for combo in 0..4usize.pow(N as u32) {
        let mut rest = combo;
        let mut idx = 0usize;
        let mut stride = 1usize;
        let mut w = 1.0;
        for k in 0..N {
            let o = rest % 4;
            rest /= 4;
            let j = ((base[k] + o as isize - 1) % r + r) % r;
            idx += j as usize * stride;
            stride *= grid.resolution;
            w *= weights[k][o];
        }
        total += w * field[idx];
    }
    total
}

/// Induced metric data at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedMetric<const N: usize> {
    pub g: Matrix<N>,
    pub g_inv: Matrix<N>,
    /// `sigma^{ij} u_i u_j`
    pub grad_norm_sq: f64,
    pub v: f64,
    pub tilde_v: f64,
    /// `tilde_v - 1`, computed without cancellation
    pub tilt: f64,
    /// `max |g^{ik} g_kj - delta|`
    pub inverse_residual: f64,
}

/// `g_ij = sigma_ij - u_i u_j`, `g^{ij} = sigma^{ij} + u^i u^j / v^2`.
pub fn induced_metric<const N: usize>(
    du: &Vector<N>,
    sigma: &Matrix<N>,
    sigma_inv: &Matrix<N>,
    index: usize,
) -> Result<InducedMetric<N>> {
    let up = tensor::mul_vec(sigma_inv, du);
    let grad_norm_sq = tensor::dot(du, &up);
    if !(grad_norm_sq < 1.0 - SPACELIKE_MARGIN) {
        return Err(Error::NotSpacelike {
            index,
            norm_sq: grad_norm_sq,
        });
    }
    let v2 = 1.0 - grad_norm_sq;
    let v = v2.sqrt();
    let mut g = *sigma;
    let mut g_inv = *sigma_inv;
    for i in 0..N {
        for j in 0..N {
            g[i][j] -= du[i] * du[j];
            g_inv[i][j] += up[i] * up[j] / v2;
        }
    }
    let inverse_residual = tensor::max_abs(&tensor::sub(
        &tensor::mul(&g_inv, &g),
        &tensor::identity::<N>(),
    ));
    if inverse_residual > METRIC_INVERSE_TOL {
        return Err(Error::MetricInverse {
            index,
            residual: inverse_residual,
        });
    }
    Ok(InducedMetric {
        g,
        g_inv,
        grad_norm_sq,
        v,
        tilde_v: 1.0 / v,
        tilt: grad_norm_sq / (v * (1.0 + v)),
        inverse_residual,
    })
}

/// Christoffel symbols `Gamma^k_ij` of `g` from its first derivatives
/// `dg[l][i][j] = d_l g_ij`.
pub fn christoffel<const N: usize>(g_inv: &Matrix<N>, dg: &[Matrix<N>; N]) -> [Matrix<N>; N] {
    let mut lower = [tensor::zeros::<N>(); N];
    for l in 0..N {
        for i in 0..N {
            for j in 0..N {
                lower[l][i][j] = 0.5 * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
            }
        }
    }
    let mut out = [tensor::zeros::<N>(); N];
    for k in 0..N {
        for i in 0..N {
            for j in 0..N {
                out[k][i][j] = (0..N).map(|l| g_inv[k][l] * lower[l][i][j]).sum();
            }
        }
    }
    out
}

/// `h_ij = v (-u_{;ij} - sigma_dot_ij / 2)`, `u_{;ij}` the covariant Hessian
/// with respect to the induced metric.
pub fn second_fundamental_form<const N: usize>(
    du: &Vector<N>,
    d2u: &Matrix<N>,
    gamma: &[Matrix<N>; N],
    sigma_dot: &Matrix<N>,
    v: f64,
) -> Matrix<N> {
    let mut h = tensor::zeros::<N>();
    for i in 0..N {
        for j in 0..=i {
            let conn: f64 = (0..N).map(|k| gamma[k][i][j] * du[k]).sum();
            let hess = d2u[i][j] - conn;
            let hij = v * (-hess - 0.5 * sigma_dot[i][j]);
            h[i][j] = hij;
            h[j][i] = hij;
        }
    }
    h
}

/// `-tilde_v f'(u) + psi_alpha nu^alpha`, with the past-directed normal
/// `nu = -tilde_v (1, sigma^{ij} u_j)`.
pub fn curvature_shift<const N: usize>(
    df: f64,
    tilde_v: f64,
    psi_tau: f64,
    psi_grad: &Vector<N>,
    du_up: &Vector<N>,
) -> f64 {
    let psi_nu = -tilde_v * (psi_tau + tensor::dot(psi_grad, du_up));
    -tilde_v * df + psi_nu
}

/// `g^{jk} h_ki + shift delta^j_i`, upper index as the row.
pub fn shifted_shape_operator<const N: usize>(
    h: &Matrix<N>,
    g_inv: &Matrix<N>,
    shift: f64,
) -> Matrix<N> {
    let mut m = tensor::mul(g_inv, h);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += shift;
    }
    m
}

/// Ascending eigenvalues of a mixed shape operator.
pub fn principal_curvatures<const N: usize>(shape: &Matrix<N>) -> Result<Vector<N>> {
    tensor::real_eigenvalues(shape, SPECTRUM_TOL).map_err(|residual| Error::ComplexSpectrum { residual })
}

/// Eigenvalues of `h^j_i = g^{jk} h_ki` through the symmetric form
/// `L^{-1} h L^{-T}`, `g = L L^T`.
pub fn metric_spectrum<const N: usize>(h: &Matrix<N>, g: &Matrix<N>) -> Result<Vector<N>> {
    let l = tensor::cholesky(g).ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    let l_inv = tensor::inverse(&l).ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
    let a = tensor::mul(&tensor::mul(&l_inv, h), &tensor::transpose(&l_inv));
    Ok(tensor::symmetric_eigen(&tensor::symmetrize(&a)).values)
}

/// Operator norm of the trace-free part of `g^{jk} h_ki`.
pub fn trace_free_norm<const N: usize>(h: &Matrix<N>, g: &Matrix<N>) -> Result<f64> {
    let k = metric_spectrum(h, g)?;
    let mean = k.iter().sum::<f64>() / N as f64;
    Ok(k.iter().fold(0.0_f64, |m, x| m.max((x - mean).abs())))
}

/// Everything known about the graph at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGeometry<const N: usize> {
    pub x: Vector<N>,
    pub u: f64,
    pub du: Vector<N>,
    pub d2u: Matrix<N>,
    pub sigma: Matrix<N>,
    pub sigma_inv: Matrix<N>,
    pub sigma_dot: Matrix<N>,
    pub metric: InducedMetric<N>,
    /// covariant second fundamental form (unshifted)
    pub h: Matrix<N>,
    pub shift: f64,
    /// shifted shape operator, upper index as row
    pub shape: Matrix<N>,
    /// ascending principal curvatures of `shape`
    pub kappa: Vector<N>,
    pub f_value: f64,
    pub f_tensor: Matrix<N>,
    /// `f(u) + psi(u, x)`
    pub psi_tilde: f64,
    /// operator norm of the trace-free part of the shape operator
    pub trace_free: f64,
    /// `d u / d t = v / F`
    pub rate: f64,
    /// spatial velocity of the material point, `tilde_v sigma^{ij} u_j / F`
    pub velocity: Vector<N>,
}

/// Graph together with its pointwise geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState<const N: usize> {
    pub t: f64,
    pub grid: Grid,
    pub u: Vec<f64>,
    pub points: Vec<PointGeometry<N>>,
}

/// First pass: everything that depends only on the point itself.
struct Local<const N: usize> {
    x: Vector<N>,
    du: Vector<N>,
    d2u: Matrix<N>,
    sigma: Matrix<N>,
    sigma_inv: Matrix<N>,
    sigma_dot: Matrix<N>,
    metric: InducedMetric<N>,
}

fn first_error<T: Send>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// Builds the full geometry cache for `u` and checks the state invariants.
pub fn assemble_geometry<const N: usize>(
    u: Vec<f64>,
    t: f64,
    grid: &Grid,
    model: &ArwModel,
    cf: &CurvatureFunction,
) -> Result<GraphState<N>> {
    grid.check_dim::<N>();
    if cf.n != N || model.constants.n != N {
        return Err(Error::Config(format!(
            "dimension mismatch: grid {N}, curvature {}, model {}",
            cf.n, model.constants.n
        )));
    }
    if u.len() != grid.len() {
        return Err(Error::Config(format!(
            "field has {} samples, grid expects {}",
            u.len(),
            grid.len()
        )));
    }
    let locals: Vec<Result<Local<N>>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.point::<N>(idx);
            let (du, d2u) = spatial_derivatives_at::<N>(&u, grid, idx);
            let s = model.eval_sigma::<N>(u[idx], &x)?;
            let sigma_inv = tensor::inverse(&s.sigma)
                .ok_or(Error::NotPositiveDefinite { min_eigenvalue: 0.0 })?;
            let metric = induced_metric(&du, &s.sigma, &sigma_inv, idx)?;
            Ok(Local {
                x,
                du,
                d2u,
                sigma: s.sigma,
                sigma_inv,
                sigma_dot: s.sigma_dot,
                metric,
            })
        })
        .collect();
    let locals = first_error(locals)?;

    // metric component fields for the Christoffel symbols
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(N * N);
    for i in 0..N {
        for j in 0..N {
            components.push(locals.iter().map(|p| p.metric.g[i][j]).collect());
        }
    }

    let points: Vec<Result<PointGeometry<N>>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = &locals[idx];
            let mut dg = [tensor::zeros::<N>(); N];
            for (l, dgl) in dg.iter_mut().enumerate() {
                for i in 0..N {
                    for j in 0..=i {
                        let d = d1(&components[i * N + j], grid, idx, l);
                        dgl[i][j] = d;
                        dgl[j][i] = d;
                    }
                }
            }
            let gamma = christoffel(&p.metric.g_inv, &dg);
            let h = second_fundamental_form(&p.du, &p.d2u, &gamma, &p.sigma_dot, p.metric.v);
            let warp = model.eval_warp(u[idx])?;
            let psi = model.psi.eval::<N>(u[idx], &p.x);
            let du_up = tensor::mul_vec(&p.sigma_inv, &p.du);
            let shift = curvature_shift(warp.df, p.metric.tilde_v, psi.psi_tau, &psi.psi_grad, &du_up);
            let shape = shifted_shape_operator(&h, &p.metric.g_inv, shift);
            let kappa = principal_curvatures(&shape)?;
            if kappa[0] <= KAPPA_TOL {
                return Err(Error::NotConvex {
                    index: idx,
                    kappa_min: kappa[0],
                });
            }
            let f_value = cf.value(&kappa)?;
            let shifted_cov = tensor::add(&h, &tensor::scale(&p.metric.g, shift));
            let (f_tensor, _) = cf.tensor_derivative(&shifted_cov, &p.metric.g)?;
            let trace_free = trace_free_norm(&h, &p.metric.g)?;
            let mut velocity = du_up;
            for c in velocity.iter_mut() {
                *c *= p.metric.tilde_v / f_value;
            }
            Ok(PointGeometry {
                x: p.x,
                u: u[idx],
                du: p.du,
                d2u: p.d2u,
                sigma: p.sigma,
                sigma_inv: p.sigma_inv,
                sigma_dot: p.sigma_dot,
                metric: p.metric,
                h,
                shift,
                shape,
                kappa,
                f_value,
                f_tensor,
                psi_tilde: warp.f + psi.psi,
                trace_free,
                rate: p.metric.v / f_value,
                velocity,
            })
        })
        .collect();
    let points = first_error(points)?;
    Ok(GraphState {
        t,
        grid: *grid,
        u,
        points,
    })
}

impl<const N: usize> GraphState<N> {
    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate).collect()
    }

    pub fn min_u(&self) -> f64 {
        self.u.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_u(&self) -> f64 {
        self.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_kappa(&self) -> f64 {
        self.points.iter().map(|p| p.kappa[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn min_f(&self) -> f64 {
        self.points.iter().map(|p| p.f_value).fold(f64::INFINITY, f64::min)
    }

    pub fn max_grad_norm_sq(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.metric.grad_norm_sq)
            .fold(0.0, f64::max)
    }

    pub fn max_inverse_residual(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.metric.inverse_residual)
            .fold(0.0, f64::max)
    }
}
