//! Reference gradient samplers: ULA, MALA and HMC.
//!
//! Each chain carries a [`ChainState`] with `E(x)` and `g(x)` cached, so a
//! ULA or MALA step costs exactly one gradient evaluation and an HMC
//! transition with `k` leapfrog steps costs exactly `k`.
//!
//! `energy_scale` multiplies the energy seen by the sampler: the chain
//! targets `exp(−s E(x))`. With `s = 2/ε²` the ULA update becomes the
//! `x − g + ε ξ` form common in energy-based-model training.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::vecops::{all_finite, dist_sq, norm_sq};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Ula,
    Mala,
    Hmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub eps: f64,
    /// Leapfrog steps per HMC transition.
    pub k_leapfrog: usize,
    pub energy_scale: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, eps: f64) -> Self {
        Self {
            kind,
            eps,
            k_leapfrog: 5,
            energy_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.k_leapfrog < 1 {
            return Err(Error::InvalidArgument(
                "k_leapfrog must be at least 1".into(),
            ));
        }
        if !(self.energy_scale > 0.0 && self.energy_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "energy_scale must be positive, got {}",
                self.energy_scale
            )));
        }
        Ok(())
    }

    /// Gradient evaluations consumed by one transition.
    pub fn grads_per_transition(&self) -> u64 {
        match self.kind {
            BaselineKind::Ula | BaselineKind::Mala => 1,
            BaselineKind::Hmc => self.k_leapfrog as u64,
        }
    }

    /// Advances `state` by one transition. Returns whether a proposal was
    /// accepted (always true for ULA).
    pub fn transition<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        model: &EnergyModel,
        rng: &mut R,
    ) -> Result<bool> {
        let (next, accepted) = match self.kind {
            BaselineKind::Ula => (
                ula_step(state, model, self.eps, self.energy_scale, rng)?,
                true,
            ),
            BaselineKind::Mala => mala_step(state, model, self.eps, self.energy_scale, rng)?,
            BaselineKind::Hmc => hmc_transition(
                state,
                model,
                self.eps,
                self.k_leapfrog,
                self.energy_scale,
                rng,
            )?,
        };
        *state = next;
        Ok(accepted)
    }
}

/// Position with its unscaled energy and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad: Vec<f64>,
}

impl ChainState {
    /// Costs one gradient evaluation.
    pub fn new(x: Vec<f64>, model: &EnergyModel) -> Result<Self> {
        model.check_dim(&x)?;
        let mut grad = vec![0.0; x.len()];
        let energy = model.checked_value_and_grad(&x, &mut grad)?;
        Ok(Self { x, energy, grad })
    }

    /// Like [`new`](Self::new) but keeps non-finite results instead of
    /// failing, for proposals that may be rejected.
    fn evaluate(x: Vec<f64>, model: &EnergyModel) -> Self {
        let mut grad = vec![0.0; x.len()];
        let energy = model.value_and_grad(&x, &mut grad);
        Self { x, energy, grad }
    }

    fn is_finite(&self) -> bool {
        self.energy.is_finite() && all_finite(&self.grad) && all_finite(&self.x)
    }
}

fn langevin_proposal<R: Rng + ?Sized>(
    state: &ChainState,
    eps: f64,
    scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    let drift = 0.5 * eps * eps * scale;
    state
        .x
        .iter()
        .zip(&state.grad)
        .map(|(xi, gi)| xi - drift * gi + eps * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `x' = x − (ε²/2) s g(x) + ε ξ`.
pub fn ula_step<R: Rng + ?Sized>(
    state: &ChainState,
    model: &EnergyModel,
    eps: f64,
    energy_scale: f64,
    rng: &mut R,
) -> Result<ChainState> {
    let y = langevin_proposal(state, eps, energy_scale, rng);
    ChainState::new(y, model)
}

/// `log q(to | from)` for the Langevin proposal, up to a constant.
fn log_proposal(to: &ChainState, from: &ChainState, eps: f64, scale: f64) -> f64 {
    let drift = 0.5 * eps * eps * scale;
    let mean: Vec<f64> = from
        .x
        .iter()
        .zip(&from.grad)
        .map(|(x, g)| x - drift * g)
        .collect();
    -dist_sq(&to.x, &mean) / (2.0 * eps * eps)
}

/// Metropolis-Hastings log acceptance ratio for a Langevin move `from → to`.
pub fn mala_log_acceptance(from: &ChainState, to: &ChainState, eps: f64, energy_scale: f64) -> f64 {
    -energy_scale * (to.energy - from.energy) + log_proposal(from, to, eps, energy_scale)
        - log_proposal(to, from, eps, energy_scale)
}

/// One MALA step. A proposal with non-finite energy, gradient or acceptance
/// ratio is rejected.
pub fn mala_step<R: Rng + ?Sized>(
    state: &ChainState,
    model: &EnergyModel,
    eps: f64,
    energy_scale: f64,
    rng: &mut R,
) -> Result<(ChainState, bool)> {
    let y = langevin_proposal(state, eps, energy_scale, rng);
    let proposal = ChainState::evaluate(y, model);
    let u: f64 = rng.random();
    if !proposal.is_finite() {
        return Ok((state.clone(), false));
    }
    let log_a = mala_log_acceptance(state, &proposal, eps, energy_scale);
    if log_a.is_nan() {
        return Ok((state.clone(), false));
    }
    if log_a >= 0.0 || u.ln() < log_a {
        Ok((proposal, true))
    } else {
        Ok((state.clone(), false))
    }
}

/// One HMC transition: fresh `v ~ N(0, I)`, `k` Newtonian leapfrog steps,
/// Metropolis accept with `H = s E + ½|v|²`.
pub fn hmc_transition<R: Rng + ?Sized>(
    state: &ChainState,
    model: &EnergyModel,
    eps: f64,
    k: usize,
    energy_scale: f64,
    rng: &mut R,
) -> Result<(ChainState, bool)> {
    if k < 1 {
        return Err(Error::InvalidArgument(
            "HMC needs at least one leapfrog step".into(),
        ));
    }
    let d = state.x.len();
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let h_old = energy_scale * state.energy + 0.5 * norm_sq(&v);
    let kick = |v: &mut [f64], g: &[f64], w: f64| {
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi -= w * energy_scale * gi;
        }
    };
    let mut cur = state.clone();
    kick(&mut v, &cur.grad, 0.5 * eps);
    let mut ok = true;
    for step in 0..k {
        let x: Vec<f64> = cur.x.iter().zip(&v).map(|(xi, vi)| xi + eps * vi).collect();
        cur = ChainState::evaluate(x, model);
        if !cur.is_finite() {
            ok = false;
            // keep the gradient budget honest: the remaining steps are still spent
            for _ in step + 1..k {
                model.value_and_grad(&cur.x.clone(), &mut vec![0.0; d]);
            }
            break;
        }
        let w = if step + 1 == k { 0.5 * eps } else { eps };
        kick(&mut v, &cur.grad, w);
    }
    let u: f64 = rng.random();
    if !ok {
        return Ok((state.clone(), false));
    }
    let h_new = energy_scale * cur.energy + 0.5 * norm_sq(&v);
    let log_a = h_old - h_new;
    if !log_a.is_finite() && log_a != f64::INFINITY {
        return Ok((state.clone(), false));
    }
    if log_a >= 0.0 || u.ln() < log_a {
        Ok((cur, true))
    } else {
        Ok((state.clone(), false))
    }
}
