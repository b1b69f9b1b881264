//! Symmetric curvature functions on the positive cone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    /// `F = sum kappa_i`
    #[serde(rename = "mean")]
    MeanCurvature,
    /// `F = n (prod kappa_i)^(1/n)`
    #[serde(rename = "gauss_root")]
    NthRootGauss,
}

impl CurvatureKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mean" => Ok(CurvatureKind::MeanCurvature),
            "gauss_root" => Ok(CurvatureKind::NthRootGauss),
            other => Err(Error::Config(format!(
                "unknown curvature kind '{other}' (expected 'mean' or 'gauss_root')"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CurvatureKind::MeanCurvature => "mean",
            CurvatureKind::NthRootGauss => "gauss_root",
        }
    }
}

/// Eigenvalues closer than this are treated as coalesced when assembling
/// the tensor derivative.
pub const COALESCENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CurvatureFunction {
    pub kind: CurvatureKind,
    pub n: usize,
}

impl CurvatureFunction {
    pub fn new(kind: CurvatureKind, n: usize) -> Self {
        CurvatureFunction { kind, n }
    }

    fn check(&self, kappa: &[f64]) -> Result<()> {
        if kappa.len() != self.n {
            return Err(Error::Config(format!(
                "expected {} principal curvatures, got {}",
                self.n,
                kappa.len()
            )));
        }
        if self.kind == CurvatureKind::NthRootGauss && kappa.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::OutsideCone {
                kappa: kappa.to_vec(),
            });
        }
        Ok(())
    }

    pub fn value(&self, kappa: &[f64]) -> Result<f64> {
        self.check(kappa)?;
        Ok(match self.kind {
            CurvatureKind::MeanCurvature => kappa.iter().sum(),
            CurvatureKind::NthRootGauss => self.n as f64 * geometric_mean(kappa),
        })
    }

    pub fn gradient(&self, kappa: &[f64]) -> Result<Vec<f64>> {
        self.check(kappa)?;
        Ok(match self.kind {
            CurvatureKind::MeanCurvature => vec![1.0; self.n],
            CurvatureKind::NthRootGauss => {
                let g = geometric_mean(kappa);
                kappa.iter().map(|&k| g / k).collect()
            }
        })
    }

    /// `F^{ij}`, the derivative of `F` with respect to the covariant second
    /// fundamental form `h_ij`, for a metric `g`. Returns the contravariant
    /// tensor together with the ascending principal curvatures.
    pub fn tensor_derivative<const N: usize>(
        &self,
        h_cov: &Matrix<N>,
        g: &Matrix<N>,
    ) -> Result<(Matrix<N>, [f64; N])> {
        let residual = tensor::asymmetry(h_cov);
        if residual > 1e-10 * tensor::max_abs(h_cov).max(1.0) {
            return Err(Error::NonSymmetric { residual });
        }
        let l = tensor::cholesky(g).ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: tensor::symmetric_eigen(g).values[0],
        })?;
        let l_inv = tensor::inverse(&l).ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
        let a = tensor::symmetrize(&tensor::mul(
            &tensor::mul(&l_inv, &tensor::symmetrize(h_cov)),
            &tensor::transpose(&l_inv),
        ));
        let eig = tensor::symmetric_eigen(&a);
        let kappa = eig.values;
        let grad = self.gradient(&kappa)?;
        let spread = kappa[N - 1] - kappa[0];
        let scale = kappa.iter().fold(0.0_f64, |m, k| m.max(k.abs())).max(1.0);
        if spread.abs() < COALESCENCE_TOL * scale {
            let mean = grad.iter().sum::<f64>() / N as f64;
            let g_inv = tensor::inverse(g).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: 0.0,
            })?;
            return Ok((tensor::scale(&g_inv, mean), kappa));
        }
        // E = L^{-T} Q, F^{ij} = sum_a F_a E_ia E_ja
        let e = tensor::mul(&tensor::transpose(&l_inv), &eig.vectors);
        let mut out = tensor::zeros::<N>();
        for (a, fa) in grad.iter().enumerate() {
            for i in 0..N {
                for j in 0..N {
                    out[i][j] += fa * e[i][a] * e[j][a];
                }
            }
        }
        Ok((tensor::symmetrize(&out), kappa))
    }

    /// `F^{ij} h_ik h^k_j / (F H)` at principal curvatures `kappa`, which in
    /// the eigenbasis is `sum F_i kappa_i^2 / (F sum kappa_i)`.
    pub fn kstar_ratio(&self, kappa: &[f64]) -> Result<f64> {
        let f = self.value(kappa)?;
        let grad = self.gradient(kappa)?;
        let num: f64 = grad.iter().zip(kappa).map(|(fi, k)| fi * k * k).sum();
        let h: f64 = kappa.iter().sum();
        Ok(num / (f * h))
    }

    /// Estimates the class-(K*) constant by sampling the positive cone
    /// log-uniformly on `[1e-3, 1e3]^n`, each sample evaluated in a randomly
    /// rotated orthonormal frame so that the tensor path is exercised.
    pub fn certify_kstar(&self, config: &KstarSampler) -> Result<KstarCertificate> {
        if config.samples < 1000 {
            return Err(Error::InsufficientSamples {
                found: config.samples,
                needed: 1000,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (lo, hi) = (config.kappa_min.ln(), config.kappa_max.ln());
        let mut best = f64::INFINITY;
        let mut worst_kappa = vec![1.0; self.n];
        for _ in 0..config.samples {
            let kappa: Vec<f64> = (0..self.n).map(|_| rng.random_range(lo..hi).exp()).collect();
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let ratio = match self.n {
                2 => self.rotated_ratio2(&kappa, angle)?,
                _ => self.kstar_ratio(&kappa)?,
            };
            if ratio < best {
                best = ratio;
                worst_kappa = kappa;
            }
        }
        Ok(KstarCertificate {
            kind: self.kind,
            n: self.n,
            epsilon0_estimate: best,
            samples: config.samples,
            seed: config.seed,
            worst_kappa,
            informational: self.kind == CurvatureKind::MeanCurvature,
            positive: best > 0.0,
        })
    }

    /// Ratio computed through [`CurvatureFunction::tensor_derivative`] for
    /// `h = R diag(kappa) R^T`, `g = I`.
    fn rotated_ratio2(&self, kappa: &[f64], angle: f64) -> Result<f64> {
        let (s, c) = angle.sin_cos();
        let r = [[c, -s], [s, c]];
        let d = [[kappa[0], 0.0], [0.0, kappa[1]]];
        let h = tensor::symmetrize(&tensor::mul(&tensor::mul(&r, &d), &tensor::transpose(&r)));
        let (fij, k) = self.tensor_derivative(&h, &tensor::identity::<2>())?;
        let h2 = tensor::mul(&h, &h);
        let mut num = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                num += fij[i][j] * h2[i][j];
            }
        }
        Ok(num / (self.value(&k)? * tensor::trace(&h)))
    }
}

fn geometric_mean(kappa: &[f64]) -> f64 {
    match kappa.len() {
        1 => kappa[0],
        2 => (kappa[0] * kappa[1]).sqrt(),
        n => (kappa.iter().map(|k| k.ln()).sum::<f64>() / n as f64).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KstarSampler {
    pub samples: usize,
    pub seed: u64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl Default for KstarSampler {
    fn default() -> Self {
        KstarSampler {
            samples: 10_000,
            seed: 42,
            kappa_min: 1e-3,
            kappa_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KstarCertificate {
    pub kind: CurvatureKind,
    pub n: usize,
    pub epsilon0_estimate: f64,
    pub samples: usize,
    pub seed: u64,
    pub worst_kappa: Vec<f64>,
    /// Set for functions whose class-(K*) membership is not claimed; the
    /// estimate is reported for reference only.
    pub informational: bool,
    pub positive: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss2() -> CurvatureFunction {
        CurvatureFunction::new(CurvatureKind::NthRootGauss, 2)
    }

    #[test]
    fn normalization_and_values() {
        assert_eq!(gauss2().value(&[1.0, 1.0]).unwrap(), 2.0);
        let mean = CurvatureFunction::new(CurvatureKind::MeanCurvature, 2);
        assert_eq!(mean.value(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(gauss2().value(&[1.0, 4.0]).unwrap(), 4.0);
        let g3 = CurvatureFunction::new(CurvatureKind::NthRootGauss, 3);
        assert!((g3.value(&[1.0, 1.0, 1.0]).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gauss2().gradient(&[1.0, 4.0]).unwrap(), vec![2.0, 0.5]);
        let mean = CurvatureFunction::new(CurvatureKind::MeanCurvature, 3);
        assert_eq!(mean.gradient(&[0.1, -2.0, 5.0]).unwrap(), vec![1.0; 3]);
        // central differences, step 1e-6
        let k = [1.0, 4.0];
        let h = 1e-6;
        for i in 0..2 {
            let mut p = k;
            let mut m = k;
            p[i] += h;
            m[i] -= h;
            let fd = (gauss2().value(&p).unwrap() - gauss2().value(&m).unwrap()) / (2.0 * h);
            assert!((fd - gauss2().gradient(&k).unwrap()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn outside_cone_is_rejected() {
        assert!(matches!(
            gauss2().value(&[1.0, 0.0]),
            Err(Error::OutsideCone { .. })
        ));
        assert!(matches!(
            gauss2().gradient(&[-1.0, 2.0]),
            Err(Error::OutsideCone { .. })
        ));
    }

    #[test]
    fn tensor_derivative_diagonal() {
        let (fij, kappa) = gauss2()
            .tensor_derivative(&[[2.0, 0.0], [0.0, 3.0]], &tensor::identity())
            .unwrap();
        assert_eq!(kappa, [2.0, 3.0]);
        assert!((fij[0][0] - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((fij[1][1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(fij[0][1].abs() < 1e-15);
    }

    #[test]
    fn mean_tensor_derivative_is_inverse_metric() {
        let mean = CurvatureFunction::new(CurvatureKind::MeanCurvature, 2);
        let g = [[2.0, 0.3], [0.3, 1.0]];
        let h = [[1.0, 0.2], [0.2, 0.7]];
        let (fij, _) = mean.tensor_derivative(&h, &g).unwrap();
        let g_inv = tensor::inverse(&g).unwrap();
        assert!(tensor::max_abs(&tensor::sub(&fij, &g_inv)) < 1e-14);
    }

    #[test]
    fn coalesced_spectrum_uses_limit() {
        let (fij, kappa) = gauss2()
            .tensor_derivative(&[[3.0, 0.0], [0.0, 3.0]], &tensor::identity())
            .unwrap();
        assert_eq!(kappa, [3.0, 3.0]);
        assert_eq!(fij, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let err = gauss2()
            .tensor_derivative(&[[2.0, 0.5], [0.0, 3.0]], &tensor::identity())
            .unwrap_err();
        assert!(matches!(err, Error::NonSymmetric { .. }));
    }

    #[test]
    fn kstar_ratio_at_umbilic_point() {
        assert!((gauss2().kstar_ratio(&[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        let a = gauss2().kstar_ratio(&[0.3, 7.0]).unwrap();
        let b = gauss2().kstar_ratio(&[3.0, 70.0]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn certificate_matches_grid_minimum() {
        // brute-force grid minimisation of sum F_i kappa_i^2 / (F H)
        let f = gauss2();
        let mut grid_min = f64::INFINITY;
        for i in 0..=60 {
            for j in 0..=60 {
                let k1 = 10f64.powf(-3.0 + 0.1 * i as f64);
                let k2 = 10f64.powf(-3.0 + 0.1 * j as f64);
                let g = (k1 * k2).sqrt();
                let num = g / k1 * k1 * k1 + g / k2 * k2 * k2;
                grid_min = grid_min.min(num / (2.0 * g * (k1 + k2)));
            }
        }
        let cert = f.certify_kstar(&KstarSampler::default()).unwrap();
        assert!(cert.positive && !cert.informational);
        // the rotated tensor path loses digits on ill-conditioned samples
        assert!((cert.epsilon0_estimate - grid_min).abs() < 1e-9);
        assert!((grid_min - 0.5).abs() < 1e-12);

        let mean = CurvatureFunction::new(CurvatureKind::MeanCurvature, 2)
            .certify_kstar(&KstarSampler::default())
            .unwrap();
        assert!(mean.informational);
        assert!(mean.epsilon0_estimate > 0.5 - 1e-12 && mean.epsilon0_estimate < 0.51);
    }
}
