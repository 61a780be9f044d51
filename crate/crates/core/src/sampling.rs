//! Turning ESH trajectories into samples.
//!
//! Three routes are provided:
//!
//! * **Ergodic sampling**: draw `t* ~ U[0, T]` in unscaled time and linearly
//!   interpolate `x(t*)` between the bracketing grid points.
//! * **Reservoir sampling**: stream grid states through a one-slot
//!   reservoir weighted by `|v| = e^r`, without storing the trajectory.
//! * **Jarzynski weighting**: treat a batch of short trajectories started
//!   from a tractable base density as a normalizing flow and weight each
//!   endpoint by `w = E₀(x(0)) − E(x(0)) + r(t)`.
//!
//! All weights are handled in log space.

use rand::Rng;

use crate::energy::{EnergyModel, TruthSampler};
use crate::esh::{ScaledState, Trajectory};
use crate::exec::Execution;
use crate::metrics::{mmd2_unbiased, MmdConfig};
use crate::seed::{derive_rng, rng_from_seed, ChainRng};
use crate::vecops::{log_add_exp, log_sum_exp};
use crate::{Error, Result};

/// A point with a log importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub x: Vec<f64>,
    pub log_weight: f64,
    /// Grid index the point was taken from.
    pub source_step: usize,
}

/// `x(t)` by linear interpolation between the grid points bracketing the
/// unscaled time `t`. `t` is clamped to `[0, T]`.
pub fn interpolate_at(traj: &Trajectory, t: f64) -> Result<Vec<f64>> {
    if traj.t_unscaled.len() != traj.len() {
        return Err(Error::InvalidArgument(
            "trajectory time grid has the wrong length".into(),
        ));
    }
    interpolate(&traj.t_unscaled, |k| &traj.states[k].x, t)
}

/// Like [`interpolate_at`] for a bare path: positions `xs` at unscaled times
/// `ts`.
pub fn interpolate_path(ts: &[f64], xs: &[Vec<f64>], t: f64) -> Result<Vec<f64>> {
    if ts.len() != xs.len() {
        return Err(Error::DimensionMismatch {
            expected: ts.len(),
            got: xs.len(),
        });
    }
    interpolate(ts, |k| &xs[k], t)
}

fn interpolate<'a>(ts: &[f64], x_at: impl Fn(usize) -> &'a [f64], t: f64) -> Result<Vec<f64>> {
    if ts.len() < 2 {
        return Err(Error::InvalidArgument(
            "ergodic sampling needs a trajectory with at least 2 states".into(),
        ));
    }
    let last = ts.len() - 1;
    let t = t.clamp(0.0, ts[last]);
    let j = ts.partition_point(|&tk| tk <= t).clamp(1, last) - 1;
    let span = ts[j + 1] - ts[j];
    let f = if span > 0.0 {
        ((t - ts[j]) / span).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (a, b) = (x_at(j), x_at(j + 1));
    Ok(a.iter()
        .zip(b)
        .map(|(ai, bi)| (1.0 - f) * ai + f * bi)
        .collect())
}

/// Draws `n` time-uniform samples from a trajectory.
pub fn ergodic_sample(traj: &Trajectory, n: usize, rng_seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng_from_seed(rng_seed);
    ergodic_sample_with(traj, n, &mut rng)
}

pub fn ergodic_sample_with<R: Rng + ?Sized>(
    traj: &Trajectory,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if traj.len() < 2 {
        return Err(Error::InvalidArgument(
            "ergodic sampling needs a trajectory with at least 2 states".into(),
        ));
    }
    let total = traj.total_time();
    (0..n)
        .map(|_| interpolate_at(traj, total * rng.random::<f64>()))
        .collect()
}

/// The trajectory resampled at `n` evenly spaced unscaled times
/// `t_k = k T/(n−1)`. This is the time-uniform view of a single chain.
pub fn uniform_time_grid(traj: &Trajectory, n: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid points".into()));
    }
    let total = traj.total_time();
    (0..n)
        .map(|k| interpolate_at(traj, total * k as f64 / (n - 1) as f64))
        .collect()
}

/// [`uniform_time_grid`] for a bare path.
pub fn uniform_time_grid_path(ts: &[f64], xs: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid points".into()));
    }
    let total = ts.last().copied().unwrap_or(0.0);
    (0..n)
        .map(|k| interpolate_path(ts, xs, total * k as f64 / (n - 1) as f64))
        .collect()
}

/// Probability that a reservoir holding cumulative log-weight `log_cum`
/// replaces its content with an item of log-weight `log_w`.
pub fn acceptance_probability(log_cum: f64, log_w: f64) -> f64 {
    if log_w == f64::NEG_INFINITY {
        return 0.0;
    }
    (log_w - log_add_exp(log_cum, log_w)).exp()
}

/// One-slot weighted reservoir: after items with weights `w₁..w_k`, the
/// held item is `xᵢ` with probability `wᵢ / Σw`.
#[derive(Debug, Clone)]
pub struct Reservoir {
    current: Option<Vec<f64>>,
    current_index: usize,
    seen: usize,
    log_cum_weight: f64,
    rng: ChainRng,
}

impl Reservoir {
    pub fn new(seed: u64) -> Self {
        Self::from_rng(rng_from_seed(seed))
    }

    pub fn from_rng(rng: ChainRng) -> Self {
        Self {
            current: None,
            current_index: 0,
            seen: 0,
            log_cum_weight: f64::NEG_INFINITY,
            rng,
        }
    }

    /// Offers `x` with log-weight `log_w` (for ESH, `log_w = r = log|v|`).
    /// Returns whether `x` was taken.
    pub fn update(&mut self, x: &[f64], log_w: f64) -> bool {
        debug_assert!(!log_w.is_nan(), "reservoir weight must not be NaN");
        let p = acceptance_probability(self.log_cum_weight, log_w);
        self.log_cum_weight = log_add_exp(self.log_cum_weight, log_w);
        let index = self.seen;
        self.seen += 1;
        let take = p >= 1.0 || self.rng.random::<f64>() < p;
        if take {
            match &mut self.current {
                Some(buf) => buf.copy_from_slice(x),
                None => self.current = Some(x.to_vec()),
            }
            self.current_index = index;
        }
        take
    }

    pub fn current(&self) -> Option<&[f64]> {
        self.current.as_deref()
    }

    /// Zero-based position in the stream of the held item.
    pub fn current_index(&self) -> Option<usize> {
        self.current.as_ref().map(|_| self.current_index)
    }

    pub fn log_cum_weight(&self) -> f64 {
        self.log_cum_weight
    }

    pub fn seen(&self) -> usize {
        self.seen
    }
}

/// Functional form of [`Reservoir::update`].
pub fn reservoir_update(mut res: Reservoir, x: &[f64], r: f64) -> Reservoir {
    res.update(x, r);
    res
}

/// The base density a Jarzynski flow starts from.
#[derive(Debug, Clone, Copy)]
pub enum BaseEnergy<'a> {
    Model(&'a EnergyModel),
    /// Unknown base (e.g. a persistent buffer): `E₀` is taken to be this
    /// constant.
    Constant(f64),
}

impl BaseEnergy<'_> {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            BaseEnergy::Model(m) => {
                m.check_dim(x)?;
                Ok(m.energy(x))
            }
            BaseEnergy::Constant(c) => Ok(*c),
        }
    }
}

/// Jarzynski log-weights `E₀(x(0)) − E(x(0)) + r(t)` for the state at grid
/// index `step` of every trajectory. Each trajectory must start with `r = 0`.
pub fn jarzynski_weights(
    trajs: &[Trajectory],
    target: &EnergyModel,
    base: BaseEnergy<'_>,
    step: usize,
) -> Result<Vec<WeightedSample>> {
    trajs
        .iter()
        .map(|traj| {
            let first = traj
                .states
                .first()
                .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
            let at = traj.states.get(step).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "step {step} beyond trajectory of length {}",
                    traj.len()
                ))
            })?;
            jarzynski_log_weight(first, at, target, base).map(|log_weight| WeightedSample {
                x: at.x.clone(),
                log_weight,
                source_step: step,
            })
        })
        .collect()
}

/// Log-weight of `current` for a flow started at `start`.
pub fn jarzynski_log_weight(
    start: &ScaledState,
    current: &ScaledState,
    target: &EnergyModel,
    base: BaseEnergy<'_>,
) -> Result<f64> {
    target.check_dim(&start.x)?;
    target.check_dim(&current.x)?;
    let e0 = base.eval(&start.x)?;
    let e = target.energy(&start.x);
    // log|v(t)| − log|v(0)|
    let w = e0 - e + (current.r - start.r);
    if !w.is_finite() {
        return Err(Error::NonFinite {
            what: "Jarzynski weight",
            x: start.x.clone(),
        });
    }
    Ok(w)
}

/// Softmax of the log-weights.
pub fn self_normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|w| (w - lse).exp()).collect()
}

/// Self-normalized importance estimate of `E_p[h(x)]`.
pub fn self_normalized_expectation(samples: &[WeightedSample], h: impl Fn(&[f64]) -> f64) -> f64 {
    let lw: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    self_normalized_weights(&lw)
        .iter()
        .zip(samples)
        .map(|(w, s)| w * h(&s.x))
        .sum()
}

/// Weight-degeneracy diagnostics for a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDiagnostics {
    /// Kish effective sample size `1 / Σ w̄ᵢ²`.
    pub ess: f64,
    /// Largest normalized weight.
    pub max_weight: f64,
}

pub fn weight_diagnostics(log_w: &[f64]) -> WeightDiagnostics {
    let w = self_normalized_weights(log_w);
    WeightDiagnostics {
        ess: 1.0 / w.iter().map(|v| v * v).sum::<f64>(),
        max_weight: w.iter().copied().fold(0.0, f64::max),
    }
}

/// `log Z ≈ log Z₀ + log mean exp(w)`.
pub fn estimate_log_partition(log_w: &[f64], log_z0: f64) -> Result<f64> {
    if log_w.is_empty() {
        return Err(Error::InvalidArgument("no weights".into()));
    }
    let lse = log_sum_exp(log_w);
    if lse == f64::NEG_INFINITY {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    if !lse.is_finite() {
        return Err(Error::NonFinite {
            what: "log-sum of weights",
            x: vec![lse],
        });
    }
    Ok(log_z0 + lse - (log_w.len() as f64).ln())
}

/// MMD² against fresh truth before and after running ESH from exact samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub before: f64,
    pub after: f64,
}

/// Starts `n_chains` chains at exact target draws with sphere-uniform
/// directions, runs `n_steps` scaled leapfrog steps, and compares the final
/// positions (and the starting positions) to a fresh set of target draws.
pub fn stationarity_probe(
    model: &EnergyModel,
    truth: &TruthSampler,
    n_chains: usize,
    n_steps: usize,
    eps: f64,
    rng_seed: u64,
    exec: Execution,
) -> Result<StationarityReport> {
    let chains = exec.map_indexed(n_chains, |c| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = derive_rng(rng_seed, &[1, c as u64]);
        let x0 = truth.draw(&mut rng);
        let m = model.fork();
        let mut s = ScaledState::with_random_direction(x0.clone(), &m, &mut rng)?;
        for i in 0..n_steps {
            s.step(&m, eps).map_err(|e| e.at_step(i + 1))?;
        }
        Ok((x0, s.x))
    });
    let (start, end): (Vec<_>, Vec<_>) = chains
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let mut rng = derive_rng(rng_seed, &[2]);
    let fresh = truth.draw_n(n_chains, &mut rng);
    let cfg = MmdConfig {
        exec,
        ..MmdConfig::default()
    };
    Ok(StationarityReport {
        before: mmd2_unbiased(&start, &fresh, &cfg)?,
        after: mmd2_unbiased(&end, &fresh, &cfg)?,
    })
}
