use nalgebra::DMatrix;

use super::Energy;
use crate::vecops::dot;
use crate::{Error, Result};

/// `E(x) = ½ (x − μ)ᵀ Σ⁻¹ (x − μ)`, with no normalizing constant.
#[derive(Debug, Clone)]
pub struct GaussianEnergy {
    mean: Vec<f64>,
    precision: Precision,
    /// Lower Cholesky factor of the covariance, row-major.
    chol: Vec<f64>,
    log_det_cov: f64,
}

#[derive(Debug, Clone)]
enum Precision {
    Diagonal(Vec<f64>),
    Dense(Vec<f64>),
}

/// Builds a Gaussian energy from a mean and a row-major covariance matrix.
pub fn gaussian_energy(mean: &[f64], cov: &[f64]) -> Result<GaussianEnergy> {
    let d = mean.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty mean vector".into()));
    }
    if cov.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: cov.len(),
        });
    }
    if !cov.iter().chain(mean).all(|v| v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entries".into()));
    }
    let scale = cov.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "entry ({i},{j}) differs from ({j},{i})"
                )));
            }
        }
    }
    let m = DMatrix::from_row_slice(d, d, cov);
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let l = chol.l();
    let log_det_cov = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();

    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov[i * d + j] == 0.0));
    let precision = if diagonal {
        Precision::Diagonal((0..d).map(|i| 1.0 / cov[i * d + i]).collect())
    } else {
        let inv = chol.inverse();
        // symmetrize to keep E exactly invariant under the transpose
        let mut p = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                p[i * d + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        Precision::Dense(p)
    };
    let mut chol_rows = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            chol_rows[i * d + j] = l[(i, j)];
        }
    }
    Ok(GaussianEnergy {
        mean: mean.to_vec(),
        precision,
        chol: chol_rows,
        log_det_cov,
    })
}

impl GaussianEnergy {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `log ∫ exp(−E(x)) dx = d/2 log 2π + ½ log det Σ`.
    pub fn log_partition(&self) -> f64 {
        let d = self.mean.len() as f64;
        0.5 * d * (2.0 * std::f64::consts::PI).ln() + 0.5 * self.log_det_cov
    }

    /// Maps a standard normal draw `z` to `μ + L z`.
    pub fn transform_standard(&self, z: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        (0..d)
            .map(|i| self.mean[i] + dot(&self.chol[i * d..i * d + i + 1], &z[..=i]))
            .collect()
    }

    /// Covariance entry `Σᵢⱼ`, recomputed from the Cholesky factor.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let d = self.mean.len();
        let k = i.min(j) + 1;
        dot(&self.chol[i * d..i * d + k], &self.chol[j * d..j * d + k])
    }

    fn apply_precision(&self, diff: &[f64], out: &mut [f64]) {
        let d = diff.len();
        match &self.precision {
            Precision::Diagonal(p) => {
                for i in 0..d {
                    out[i] = p[i] * diff[i];
                }
            }
            Precision::Dense(p) => {
                for i in 0..d {
                    out[i] = dot(&p[i * d..(i + 1) * d], diff);
                }
            }
        }
    }
}

impl Energy for GaussianEnergy {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        match &self.precision {
            Precision::Diagonal(p) => x
                .iter()
                .zip(&self.mean)
                .zip(p)
                .map(|((xi, mi), pi)| 0.5 * (xi - mi) * (xi - mi) * pi)
                .sum(),
            Precision::Dense(_) => {
                let mut g = vec![0.0; x.len()];
                self.value_and_grad(x, &mut g)
            }
        }
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.apply_precision(&diff, grad);
        match &self.precision {
            Precision::Diagonal(_) => self.energy(x),
            Precision::Dense(_) => 0.5 * dot(&diff, grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_normal_values() {
        let g = gaussian_energy(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut grad = [0.0; 2];
        assert_eq!(g.value_and_grad(&[0.0, 0.0], &mut grad), 0.0);
        assert_eq!(grad, [0.0, 0.0]);
        assert_eq!(g.value_and_grad(&[3.0, 4.0], &mut grad), 12.5);
        assert_eq!(grad, [3.0, 4.0]);
    }

    #[test]
    fn correlated_pair_energy_at_ones() {
        let rho = 0.99;
        let g = gaussian_energy(&[0.0, 0.0], &[1.0, rho, rho, 1.0]).unwrap();
        // Σ⁻¹ = [[1, −ρ], [−ρ, 1]] / (1 − ρ²); E(1,1) = (2 − 2ρ) / (2(1 − ρ²)) = 1/(1 + ρ)
        assert_relative_eq!(
            g.energy(&[1.0, 1.0]),
            1.0 / (1.0 + rho),
            max_relative = 1e-9
        );
        assert_relative_eq!(g.energy(&[1.0, 1.0]), 0.502_512_562_8, epsilon = 1e-9);
    }

    #[test]
    fn rejects_non_spd() {
        assert!(gaussian_energy(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(gaussian_energy(&[0.0, 0.0], &[1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(gaussian_energy(&[0.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
        assert!(gaussian_energy(&[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn log_partition_matches_closed_form() {
        let g = gaussian_energy(&[0.0, 0.0], &[4.0, 0.0, 0.0, 4.0]).unwrap();
        assert_relative_eq!(
            g.log_partition(),
            (2.0 * std::f64::consts::PI * 4.0).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let cov = [2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5];
        let g = gaussian_energy(&[1.0, 2.0, 3.0], &cov).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(g.covariance(i, j), cov[i * 3 + j], epsilon = 1e-14);
            }
        }
    }
}
