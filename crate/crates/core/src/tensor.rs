//! Fixed-size linear algebra for the `n x n` tensors that appear pointwise on
//! the grid. Dimensions are const generics so per-point work never allocates.
//!
//! Mixed tensors `T^j_i` are stored with the upper index as the row:
//! `m[j][i] = T^j_i`, so that `T^j_i = g^{jk} T_{ki}` is the matrix product
//! `g_inv * t_cov`.

pub type Vector<const N: usize> = [f64; N];
pub type Matrix<const N: usize> = [[f64; N]; N];

pub fn zeros<const N: usize>() -> Matrix<N> {
    [[0.0; N]; N]
}

pub fn identity<const N: usize>() -> Matrix<N> {
    let mut m = zeros::<N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn scaled_identity<const N: usize>(s: f64) -> Matrix<N> {
    let mut m = zeros::<N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = s;
    }
    m
}

pub fn transpose<const N: usize>(a: &Matrix<N>) -> Matrix<N> {
    let mut t = zeros::<N>();
    for i in 0..N {
        for j in 0..N {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn mul<const N: usize>(a: &Matrix<N>, b: &Matrix<N>) -> Matrix<N> {
    let mut c = zeros::<N>();
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            for j in 0..N {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

pub fn mul_vec<const N: usize>(a: &Matrix<N>, x: &Vector<N>) -> Vector<N> {
    let mut y = [0.0; N];
    for i in 0..N {
        y[i] = (0..N).map(|j| a[i][j] * x[j]).sum();
    }
    y
}

pub fn dot<const N: usize>(x: &Vector<N>, y: &Vector<N>) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `x^T A x`
pub fn quadratic_form<const N: usize>(a: &Matrix<N>, x: &Vector<N>) -> f64 {
    dot(x, &mul_vec(a, x))
}

pub fn trace<const N: usize>(a: &Matrix<N>) -> f64 {
    (0..N).map(|i| a[i][i]).sum()
}

pub fn add<const N: usize>(a: &Matrix<N>, b: &Matrix<N>) -> Matrix<N> {
    let mut c = *a;
    for i in 0..N {
        for j in 0..N {
            c[i][j] += b[i][j];
        }
    }
    c
}

pub fn sub<const N: usize>(a: &Matrix<N>, b: &Matrix<N>) -> Matrix<N> {
    let mut c = *a;
    for i in 0..N {
        for j in 0..N {
            c[i][j] -= b[i][j];
        }
    }
    c
}

pub fn scale<const N: usize>(a: &Matrix<N>, s: f64) -> Matrix<N> {
    let mut c = *a;
    for row in c.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    c
}

pub fn max_abs<const N: usize>(a: &Matrix<N>) -> f64 {
    a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Largest entry of `|A - A^T|`.
pub fn asymmetry<const N: usize>(a: &Matrix<N>) -> f64 {
    let mut r = 0.0_f64;
    for i in 0..N {
        for j in (i + 1)..N {
            r = r.max((a[i][j] - a[j][i]).abs());
        }
    }
    r
}

pub fn symmetrize<const N: usize>(a: &Matrix<N>) -> Matrix<N> {
    let mut s = *a;
    for i in 0..N {
        for j in (i + 1)..N {
            let m = 0.5 * (a[i][j] + a[j][i]);
            s[i][j] = m;
            s[j][i] = m;
        }
    }
    s
}

/// Inverse by closed form for `N <= 2`, Gauss-Jordan with partial pivoting
/// otherwise. `None` when singular.
pub fn inverse<const N: usize>(a: &Matrix<N>) -> Option<Matrix<N>> {
    let mut inv = zeros::<N>();
    match N {
        0 => Some(inv),
        1 => {
            if a[0][0] == 0.0 {
                return None;
            }
            inv[0][0] = 1.0 / a[0][0];
            Some(inv)
        }
        2 => {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            inv[0][0] = a[1][1] / det;
            inv[0][1] = -a[0][1] / det;
            inv[1][0] = -a[1][0] / det;
            inv[1][1] = a[0][0] / det;
            Some(inv)
        }
        _ => {
            let mut m = *a;
            inv = identity::<N>();
            for col in 0..N {
                let pivot = (col..N)
                    .max_by(|&r, &s| m[r][col].abs().total_cmp(&m[s][col].abs()))
                    .unwrap_or(col);
                if m[pivot][col] == 0.0 {
                    return None;
                }
                m.swap(col, pivot);
                inv.swap(col, pivot);
                let p = m[col][col];
                for j in 0..N {
                    m[col][j] /= p;
                    inv[col][j] /= p;
                }
                for r in 0..N {
                    if r != col {
                        let factor = m[r][col];
                        if factor != 0.0 {
                            for j in 0..N {
                                m[r][j] -= factor * m[col][j];
                                inv[r][j] -= factor * inv[col][j];
                            }
                        }
                    }
                }
            }
            Some(inv)
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`; `None` unless `A`
/// is symmetric positive definite.
pub fn cholesky<const N: usize>(a: &Matrix<N>) -> Option<Matrix<N>> {
    let mut l = zeros::<N>();
    for i in 0..N {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Spectral decomposition of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen<const N: usize> {
    /// Ascending.
    pub values: Vector<N>,
    /// Orthonormal eigenvectors stored as columns: `vectors[i][a]` is the
    /// `i`-th component of the eigenvector for `values[a]`.
    pub vectors: Matrix<N>,
}

/// Eigen-decomposition of a symmetric matrix: closed form for `N <= 2`,
/// cyclic Jacobi rotations otherwise. Eigenvalues ascend; each eigenvector is
/// signed so that its first non-negligible component is positive, and exactly
/// tied eigenvalues are ordered by their eigenvectors lexicographically.
pub fn symmetric_eigen<const N: usize>(a: &Matrix<N>) -> SymmetricEigen<N> {
    let mut values = [0.0; N];
    let mut vectors = identity::<N>();
    match N {
        0 => {}
        1 => values[0] = a[0][0],
        2 => {
            let (p, q, d) = (a[0][0], 0.5 * (a[0][1] + a[1][0]), a[1][1]);
            let mean = 0.5 * (p + d);
            let r = (0.5 * (p - d)).hypot(q);
            values = [0.0; N];
            values[0] = mean - r;
            values[1] = mean + r;
            if r > 0.0 {
                let theta = 0.5 * (2.0 * q).atan2(p - d);
                let (s, c) = theta.sin_cos();
                // column 1 spans the larger eigenvalue
                vectors[0][1] = c;
                vectors[1][1] = s;
                vectors[0][0] = -s;
                vectors[1][0] = c;
            }
        }
        _ => jacobi(a, &mut values, &mut vectors),
    }
    canonicalize(&mut values, &mut vectors);
    SymmetricEigen { values, vectors }
}

fn jacobi<const N: usize>(a: &Matrix<N>, values: &mut Vector<N>, vectors: &mut Matrix<N>) {
    let mut m = symmetrize(a);
    *vectors = identity::<N>();
    let scale = max_abs(&m).max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let off: f64 = (0..N)
            .flat_map(|i| ((i + 1)..N).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                if m[p][q].abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..N {
                    let vkp = vectors[k][p];
                    let vkq = vectors[k][q];
                    vectors[k][p] = c * vkp - s * vkq;
                    vectors[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for i in 0..N {
        values[i] = m[i][i];
    }
}

fn canonicalize<const N: usize>(values: &mut Vector<N>, vectors: &mut Matrix<N>) {
    for a in 0..N {
        let lead = (0..N).map(|i| vectors[i][a]).find(|x| x.abs() > 1e-12);
        if matches!(lead, Some(x) if x < 0.0) {
            for row in vectors.iter_mut() {
                row[a] = -row[a];
            }
        }
    }
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&x, &y| {
        values[x].total_cmp(&values[y]).then_with(|| {
            (0..N)
                .map(|i| vectors[i][x].total_cmp(&vectors[i][y]))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let (v0, e0) = (*values, *vectors);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = v0[src];
        for i in 0..N {
            vectors[i][dst] = e0[i][src];
        }
    }
}

/// Real eigenvalues (ascending) of a mixed tensor that is self-adjoint with
/// respect to some metric. Only `N <= 2` is supported in closed form; returns
/// the imaginary residual as `Err` when the spectrum is not real within
/// `tol` (relative to the tensor's magnitude).
pub fn real_eigenvalues<const N: usize>(m: &Matrix<N>, tol: f64) -> Result<Vector<N>, f64> {
    let mut out = [0.0; N];
    match N {
        0 => Ok(out),
        1 => {
            out[0] = m[0][0];
            Ok(out)
        }
        2 => {
            let half_tr = 0.5 * (m[0][0] + m[1][1]);
            let half_diff = 0.5 * (m[0][0] - m[1][1]);
            let disc = half_diff * half_diff + m[0][1] * m[1][0];
            let root = if disc >= 0.0 {
                disc.sqrt()
            } else {
                let residual = (-disc).sqrt();
                let scale = max_abs(m).max(1.0);
                if residual > tol * scale {
                    return Err(residual);
                }
                0.0
            };
            out[0] = half_tr - root;
            out[1] = half_tr + root;
            Ok(out)
        }
        _ => {
            // Not needed on the grid (n <= 2); treat as symmetric.
            Ok(symmetric_eigen(&symmetrize(m)).values)
        }
    }
}

/// Operator norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn symmetric_operator_norm<const N: usize>(a: &Matrix<N>) -> f64 {
    symmetric_eigen(a)
        .values
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_three_by_three() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = inverse(&a).unwrap();
        let id = mul(&a, &inv);
        assert!(max_abs(&sub(&id, &identity())) < 1e-14);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        assert!(inverse(&[[1.0, 2.0], [2.0, 4.0]]).is_none());
        assert!(inverse(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]).is_none());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&[[1.0, 2.0], [2.0, 1.0]]).is_none());
        let l = cholesky(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let llt = mul(&l, &transpose(&l));
        assert!(max_abs(&sub(&llt, &[[4.0, 2.0], [2.0, 3.0]])) < 1e-15);
    }

    #[test]
    fn two_by_two_eigen_closed_form() {
        let e = symmetric_eigen(&[[2.0, 1.0], [1.0, 2.0]]);
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] - 3.0).abs() < 1e-15);
        let v = [e.vectors[0][1], e.vectors[1][1]];
        assert!((v[0] - v[1]).abs() < 1e-15 && v[0] > 0.0);
    }

    #[test]
    fn jacobi_matches_reconstruction() {
        let a = [
            [2.0, -0.3, 0.1, 0.0],
            [-0.3, 1.5, 0.4, 0.2],
            [0.1, 0.4, 3.0, -0.7],
            [0.0, 0.2, -0.7, 0.5],
        ];
        let e = symmetric_eigen(&a);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let mut rec = zeros::<4>();
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    rec[i][j] += e.values[k] * e.vectors[i][k] * e.vectors[j][k];
                }
            }
        }
        assert!(max_abs(&sub(&rec, &a)) < 1e-13);
    }

    #[test]
    fn tied_eigenvalues_are_ordered_deterministically() {
        let e = symmetric_eigen(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(e.values, [1.0, 1.0, 1.0]);
        // lexicographic: (0,0,1) < (0,1,0) < (1,0,0)
        assert_eq!(e.vectors[2][0], 1.0);
        assert_eq!(e.vectors[1][1], 1.0);
        assert_eq!(e.vectors[0][2], 1.0);
    }

    #[test]
    fn mixed_eigenvalues_detect_rotation() {
        // a rotation generator has eigenvalues +-i
        let err = real_eigenvalues(&[[0.0, -1.0], [1.0, 0.0]], 1e-9).unwrap_err();
        assert!((err - 1.0).abs() < 1e-15);
        let ok = real_eigenvalues(&[[2.0, 1.0], [1.0, 2.0]], 1e-9).unwrap();
        assert_eq!(ok, [1.0, 3.0]);
    }
}
