use std::f64::consts::PI;

use super::Energy;
use crate::vecops::{dist_sq, log_sum_exp};

/// Equal-weight mixture of isotropic Gaussians with a shared width.
/// The energy is the exact negative log density, so `log Z = 0`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    centers: Vec<Vec<f64>>,
    sigma: f64,
    log_norm: f64,
}

impl GaussianMixture {
    pub fn new(centers: Vec<Vec<f64>>, sigma: f64) -> Self {
        assert!(!centers.is_empty(), "mixture needs at least one component");
        assert!(sigma > 0.0, "mixture width must be positive");
        let d = centers[0].len() as f64;
        let k = centers.len() as f64;
        // log of (1/K) (2πσ²)^(−d/2)
        let log_norm = -k.ln() - 0.5 * d * (2.0 * PI * sigma * sigma).ln();
        Self {
            centers,
            sigma,
            log_norm,
        }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Index of the closest component center.
    pub fn nearest_mode(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.centers.iter().enumerate() {
            let d2 = dist_sq(x, c);
            if d2 < best.1 {
                best = (k, d2);
            }
        }
        best.0
    }

    fn component_logits(&self, x: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        self.centers.iter().map(|c| -dist_sq(x, c) * inv).collect()
    }
}

/// `modes` components evenly spaced on a circle of the given radius,
/// the first one on the positive x axis.
pub fn ring_mixture(modes: usize, radius: f64, sigma: f64) -> GaussianMixture {
    let centers = (0..modes)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / modes as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect();
    GaussianMixture::new(centers, sigma)
}

/// The 2-D, 8-mode ring benchmark: radius 4, component width 0.15.
pub fn mog2d_energy() -> GaussianMixture {
    ring_mixture(8, 4.0, 0.15)
}

impl Energy for GaussianMixture {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        -(log_sum_exp(&self.component_logits(x)) + self.log_norm)
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let logits = self.component_logits(x);
        let lse = log_sum_exp(&logits);
        let inv_var = 1.0 / (self.sigma * self.sigma);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (c, l) in self.centers.iter().zip(&logits) {
            let w = (l - lse).exp();
            if w == 0.0 {
                continue;
            }
            for ((g, xi), ci) in grad.iter_mut().zip(x).zip(c) {
                *g += w * (xi - ci) * inv_var;
            }
        }
        -(lse + self.log_norm)
    }
}
