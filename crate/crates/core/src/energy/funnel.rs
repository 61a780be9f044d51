use super::Energy;
use crate::{Error, Result};

/// Neal's funnel: `x₁ ~ N(0, σ₁²)`, `xᵢ | x₁ ~ N(0, e^{x₁})` for `i ≥ 2`.
///
/// `E(x) = x₁²/(2σ₁²) + Σ_{i≥2} [xᵢ² e^{−x₁}/2 + x₁/2]`
#[derive(Debug, Clone)]
pub struct Funnel {
    dim: usize,
    sigma1: f64,
}

pub fn funnel_energy(dim: usize, sigma1: f64) -> Result<Funnel> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "funnel needs d >= 2, got {dim}"
        )));
    }
    if !(sigma1 > 0.0 && sigma1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "funnel width must be positive, got {sigma1}"
        )));
    }
    Ok(Funnel { dim, sigma1 })
}

impl Funnel {
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn log_partition(&self) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        0.5 * (tau * self.sigma1 * self.sigma1).ln() + 0.5 * (self.dim - 1) as f64 * tau.ln()
    }
}

impl Energy for Funnel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let s = (-x[0]).exp();
        let rest: f64 = x[1..].iter().map(|xi| 0.5 * xi * xi * s + 0.5 * x[0]).sum();
        0.5 * x[0] * x[0] / (self.sigma1 * self.sigma1) + rest
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let s = (-x[0]).exp();
        let mut g0 = x[0] / (self.sigma1 * self.sigma1);
        for i in 1..self.dim {
            grad[i] = x[i] * s;
            g0 += 0.5 - 0.5 * x[i] * x[i] * s;
        }
        grad[0] = g0;
        self.energy(x)
    }
}
