//! Energy functions and the analytic benchmark suite.
//!
//! An [`Energy`] is a pure description of `E(x)` and its gradient. Samplers
//! never call it directly; they go through an [`EnergyModel`], which adds a
//! gradient-evaluation counter. Each chain holds its own model handle
//! (see [`EnergyModel::fork`]), so counting never contends across threads
//! and the per-chain count is exactly the number of gradients that chain
//! consumed.

mod benchmarks;
mod funnel;
mod gaussian;
mod mixture;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::vecops::{all_finite, norm};
use crate::{Error, Result};

pub use benchmarks::{Benchmark, BenchmarkName, BenchmarkParams, Initializer, TruthSampler};
pub use funnel::{funnel_energy, Funnel};
pub use gaussian::{gaussian_energy, GaussianEnergy};
pub use mixture::{mog2d_energy, ring_mixture, GaussianMixture};

/// Differentiable energy over `R^d`.
pub trait Energy: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn energy(&self, x: &[f64]) -> f64;

    /// Writes `∂E/∂x` into `grad` and returns `E(x)`.
    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// An energy together with a gradient-evaluation counter.
#[derive(Debug)]
pub struct EnergyModel {
    inner: Arc<dyn Energy>,
    grad_calls: AtomicU64,
}

impl EnergyModel {
    pub fn new(energy: impl Energy + 'static) -> Self {
        Self::from_arc(Arc::new(energy))
    }

    pub fn from_arc(inner: Arc<dyn Energy>) -> Self {
        Self {
            inner,
            grad_calls: AtomicU64::new(0),
        }
    }

    /// A handle on the same energy with a fresh counter.
    pub fn fork(&self) -> Self {
        Self::from_arc(Arc::clone(&self.inner))
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Evaluates `E(x)` without touching the gradient counter.
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.inner.energy(x)
    }

    /// Evaluates `E(x)` and `∂E/∂x`. Counts as one gradient evaluation.
    pub fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.grad_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.value_and_grad(x, grad)
    }

    /// Evaluates the gradient. Counts as one gradient evaluation.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.value_and_grad(x, &mut g);
        g
    }

    /// Like [`value_and_grad`](Self::value_and_grad) but fails when either
    /// output is non-finite.
    pub fn checked_value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let e = self.value_and_grad(x, grad);
        if !e.is_finite() {
            return Err(Error::NonFinite {
                what: "energy",
                x: x.to_vec(),
            });
        }
        if !all_finite(grad) {
            return Err(Error::NonFinite {
                what: "gradient",
                x: x.to_vec(),
            });
        }
        Ok(e)
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_calls.load(Ordering::Relaxed)
    }

    pub fn reset_grad_evals(&self) {
        self.grad_calls.store(0, Ordering::Relaxed);
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Largest relative gap between the analytic gradient and a central finite
/// difference of the energy over all probes, `|fd − g| / (|g| + 1e-8)` with
/// `fdᵢ = (E(x+h eᵢ) − E(x−h eᵢ))/(2h)`. The error is norm-wise per probe: a
/// per-coordinate ratio would blow up truncation error on a near-zero
/// component that sits next to a large one.
pub fn check_gradient(model: &EnergyModel, probes: &[Vec<f64>], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step h must be positive, got {h}"
        )));
    }
    let d = model.dim();
    let mut worst = 0.0_f64;
    let mut g = vec![0.0; d];
    let mut fd = vec![0.0; d];
    for (p, x) in probes.iter().enumerate() {
        model.check_dim(x)?;
        let e = model.value_and_grad(x, &mut g);
        if !e.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite energy at probe {p}: {x:?}"
            )));
        }
        let mut xp = x.clone();
        for i in 0..d {
            xp[i] = x[i] + h;
            let up = model.energy(&xp);
            xp[i] = x[i] - h;
            let down = model.energy(&xp);
            xp[i] = x[i];
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite energy near probe {p} along coordinate {i}: {x:?}"
                )));
            }
            fd[i] = (up - down) / (2.0 * h);
        }
        let gap = fd
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(gap / (norm(&g) + 1e-8));
    }
    Ok(worst)
}

pub(crate) fn benchmarks_standard_normal<R: rand::Rng + ?Sized>(
    dim: usize,
    rng: &mut R,
) -> Vec<f64> {
    benchmarks::standard_normal(dim, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_counts_gradients_only() {
        let m = EnergyModel::new(gaussian_energy(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).unwrap());
        assert_eq!(m.grad_evals(), 0);
        m.energy(&[1.0, 1.0]);
        assert_eq!(m.grad_evals(), 0);
        m.grad(&[1.0, 1.0]);
        m.grad(&[1.0, 2.0]);
        assert_eq!(m.grad_evals(), 2);
        let f = m.fork();
        assert_eq!(f.grad_evals(), 0);
        f.grad(&[0.0, 0.0]);
        assert_eq!((m.grad_evals(), f.grad_evals()), (2, 1));
    }

    #[test]
    fn gradient_check_rejects_bad_step() {
        let m = EnergyModel::new(gaussian_energy(&[0.0], &[1.0]).unwrap());
        assert!(check_gradient(&m, &[vec![0.3]], 0.0).is_err());
        assert!(check_gradient(&m, &[vec![0.3, 0.1]], 1e-4).is_err());
    }

    #[test]
    fn gradient_check_names_non_finite_probe() {
        let m = EnergyModel::new(funnel_energy(2, 3.0).unwrap());
        let err = check_gradient(&m, &[vec![-1000.0, 1.0]], 1e-4).unwrap_err();
        assert!(err.to_string().contains("probe 0"), "{err}");
    }
}
