//! ESH dynamics integrators.
//!
//! ESH dynamics use the kinetic energy `K(v) = d/2 · log(|v|²/d)`, giving
//! `ẋ = v / (|v|²/d)`, `v̇ = −g(x)`. Two discretizations live here:
//!
//! * [`original_leapfrog_step`]: the direct leapfrog in `(x, v)`. Its
//!   effective position step scales with `d/|v|²` and varies wildly.
//! * [`scaled_leapfrog_step`]: the leapfrog in rescaled time
//!   `dt̄ = dt · d/|v|`, with state `(x, u = v/|v|, r = log|v|)`. Here
//!   `ẋ = u`, `u̇ = −(I − uuᵀ) g/d`, `ṙ = −u·g/d`. The `(u, r)` sub-flow has a
//!   closed-form solution at frozen `g`, and every position step has length
//!   exactly `ε`.
//!
//! Along exact dynamics `E(x) + d·r` is conserved; [`ScaledState::hamiltonian`]
//! reports it with the `−d/2 log d` offset that makes it equal to the
//! original-coordinate Hamiltonian.

use rand::Rng;

use crate::energy::EnergyModel;
use crate::seed::rng_from_seed;
use crate::vecops::{all_finite, axpy, dot, norm, norm_sq, scale_in_place, stable_norm};
use crate::{Error, Result};

/// `u·e ≤ −1 + ANTIPARALLEL_TOL` is treated as exactly antiparallel.
pub const ANTIPARALLEL_TOL: f64 = 1e-12;

/// Default step size for the scaled leapfrog.
pub const DEFAULT_EPS: f64 = 0.1;

/// Step sizes above this are accepted but have not been validated.
pub const VALIDATED_MAX_EPS: f64 = 0.5;

/// Below this squared speed the original-coordinate step refuses to divide.
pub const SINGULARITY_V2: f64 = 1e-30;

/// Warning text for step sizes outside the validated range.
pub fn eps_warning(eps: f64) -> Option<String> {
    (eps > VALIDATED_MAX_EPS).then(|| {
        format!("step size {eps} exceeds {VALIDATED_MAX_EPS}; ESH leapfrog stability is unvalidated there")
    })
}

/// Result of the frozen-gradient `(u, r)` flow over a time `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionUpdate {
    pub u: Vec<f64>,
    /// Increment of the log-speed `r`.
    pub dr: f64,
}

/// Solves `u̇ = −(I − uuᵀ)g/d`, `ṙ = −u·g/d` exactly for time `eps` with `g`
/// held fixed, starting from the unit vector `u`.
///
/// With `e = −g/|g|`, `z = eps|g|/d`, `δ = u·e` the solution is
/// `u' = [u + e(sinh z + δ cosh z − δ)] / (cosh z + δ sinh z)` and
/// `dr = log(cosh z + δ sinh z)`. Both are evaluated after multiplying
/// through by `2e^{−z}` so that only `e^{−z}` and `e^{−2z}` appear:
/// writing `u = δe + w` with `w ⊥ e`,
/// `u' ∝ 2e^{−z} w + e[(1+δ) − (1−δ)e^{−2z}]` and
/// `dr = z + log([(1+δ) + (1−δ)e^{−2z}]/2)`.
///
/// Near `u = −e` (`δ ≤ −1 + ANTIPARALLEL_TOL`) `1 + δ` is recovered as
/// `|w|²/(1 − δ)` so the perpendicular part, which the flow amplifies by
/// `e^{z}`, is not rounded away. Exactly antiparallel input gives `u' = −e`,
/// `dr = −z`.
pub fn direction_update(eps: f64, g: &[f64], u: &[f64]) -> Result<DirectionUpdate> {
    if g.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: g.len(),
        });
    }
    if !all_finite(g) {
        return Err(Error::NonFinite {
            what: "gradient",
            x: g.to_vec(),
        });
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative step {eps}")));
    }
    let d = u.len() as f64;
    let gnorm = stable_norm(g);
    if gnorm == 0.0 || eps == 0.0 {
        return Ok(DirectionUpdate {
            u: u.to_vec(),
            dr: 0.0,
        });
    }
    let z = eps * gnorm / d;
    let e: Vec<f64> = g.iter().map(|gi| -gi / gnorm).collect();
    let delta = dot(u, &e).clamp(-1.0, 1.0);
    let w: Vec<f64> = u.iter().zip(&e).map(|(ui, ei)| ui - delta * ei).collect();
    // a = 1 + δ, b = 1 − δ; take the small one from |w|² = (1 + δ)(1 − δ)
    let (a, b) = if delta <= -1.0 + ANTIPARALLEL_TOL {
        let b = 1.0 - delta;
        (norm_sq(&w) / b, b)
    } else if delta >= 1.0 - ANTIPARALLEL_TOL {
        let a = 1.0 + delta;
        (a, norm_sq(&w) / a)
    } else {
        (1.0 + delta, 1.0 - delta)
    };
    let ez = (-z).exp();
    let q = ez * ez;
    let den = a + b * q;
    let antiparallel = || DirectionUpdate {
        u: e.iter().map(|ei| -ei).collect(),
        dr: -z,
    };
    if !(den > 0.0) {
        // exactly antiparallel and e^{−2z} underflowed
        return Ok(antiparallel());
    }
    let along = a - b * q;
    let mut u_new: Vec<f64> = w
        .iter()
        .zip(&e)
        .map(|(wi, ei)| 2.0 * ez * wi + ei * along)
        .collect();
    let n = norm(&u_new);
    if !(n > 0.0) {
        return Ok(antiparallel());
    }
    scale_in_place(1.0 / n, &mut u_new);
    let dr = z + (0.5 * den).ln();
    Ok(DirectionUpdate { u: u_new, dr })
}

/// Direction part of [`direction_update`].
pub fn u_update(eps: f64, g: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    direction_update(eps, g, u).map(|du| du.u)
}

/// Log-speed increment `log(cosh z + (u·e) sinh z)` of [`direction_update`].
pub fn r_update(eps: f64, g: &[f64], u: &[f64]) -> Result<f64> {
    direction_update(eps, g, u).map(|du| du.dr)
}

/// State of the time-scaled dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledState {
    pub x: Vec<f64>,
    /// Unit direction `v/|v|`.
    pub u: Vec<f64>,
    /// Log-speed `log|v|`.
    pub r: f64,
    /// Scaled time `t̄`.
    pub tbar: f64,
    /// `E(x)`, cached alongside the gradient.
    pub energy: f64,
    /// `g(x)`, reused by the next step.
    pub grad: Vec<f64>,
}

impl ScaledState {
    /// Builds a state at `x` with direction `u` (normalized here) and `r = 0`.
    /// Costs one gradient evaluation.
    pub fn new(x: Vec<f64>, mut u: Vec<f64>, model: &EnergyModel) -> Result<Self> {
        model.check_dim(&x)?;
        model.check_dim(&u)?;
        let n = norm(&u);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(
                "direction must be a non-zero finite vector".into(),
            ));
        }
        scale_in_place(1.0 / n, &mut u);
        let mut grad = vec![0.0; x.len()];
        let energy = model.checked_value_and_grad(&x, &mut grad)?;
        Ok(Self {
            x,
            u,
            r: 0.0,
            tbar: 0.0,
            energy,
            grad,
        })
    }

    /// Starts at `x` with a direction drawn uniformly on the unit sphere.
    pub fn with_random_direction<R: Rng + ?Sized>(
        x: Vec<f64>,
        model: &EnergyModel,
        rng: &mut R,
    ) -> Result<Self> {
        let u = random_unit_vector(x.len(), rng);
        Self::new(x, u, model)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `v = u e^r`.
    pub fn velocity(&self) -> Vec<f64> {
        let s = self.r.exp();
        self.u.iter().map(|ui| ui * s).collect()
    }

    /// `E(x) + d·r − (d/2) log d`, equal to `E + (d/2) log(|v|²/d)`.
    pub fn hamiltonian(&self) -> f64 {
        let d = self.dim() as f64;
        self.energy + d * self.r - 0.5 * d * d.ln()
    }

    /// The conserved surrogate `E(x) + d·r`.
    pub fn conserved(&self) -> f64 {
        self.energy + self.dim() as f64 * self.r
    }

    /// Advances one scaled leapfrog step in place: half step in `(u, r)` with
    /// the cached gradient, full step `x += ε u`, one new gradient, half step
    /// in `(u, r)`.
    pub fn step(&mut self, model: &EnergyModel, eps: f64) -> Result<()> {
        let half = direction_update(0.5 * eps, &self.grad, &self.u)?;
        let mut x = self.x.clone();
        axpy(eps, &half.u, &mut x);
        let mut grad = vec![0.0; x.len()];
        let energy = model.checked_value_and_grad(&x, &mut grad)?;
        let second = direction_update(0.5 * eps, &grad, &half.u)?;
        let r = self.r + half.dr + second.dr;
        if !r.is_finite() {
            return Err(Error::NonFinite {
                what: "log-speed",
                x,
            });
        }
        self.x = x;
        self.u = second.u;
        self.r = r;
        self.tbar += eps;
        self.energy = energy;
        self.grad = grad;
        Ok(())
    }

    /// Reverses the direction of travel. The cached gradient stays valid.
    pub fn reverse(&mut self) {
        scale_in_place(-1.0, &mut self.u);
    }
}

/// One time-scaled leapfrog step; exactly one gradient evaluation.
pub fn scaled_leapfrog_step(
    state: &ScaledState,
    model: &EnergyModel,
    eps: f64,
) -> Result<ScaledState> {
    let mut next = state.clone();
    next.step(model, eps)?;
    Ok(next)
}

/// State of the original-coordinate dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Unscaled time.
    pub t: f64,
    pub energy: f64,
    pub grad: Vec<f64>,
}

impl PhaseState {
    /// Costs one gradient evaluation.
    pub fn new(x: Vec<f64>, v: Vec<f64>, model: &EnergyModel) -> Result<Self> {
        model.check_dim(&x)?;
        model.check_dim(&v)?;
        let mut grad = vec![0.0; x.len()];
        let energy = model.checked_value_and_grad(&x, &mut grad)?;
        Ok(Self {
            x,
            v,
            t: 0.0,
            energy,
            grad,
        })
    }

    pub fn from_scaled(s: &ScaledState) -> Self {
        Self {
            x: s.x.clone(),
            v: s.velocity(),
            t: 0.0,
            energy: s.energy,
            grad: s.grad.clone(),
        }
    }

    /// `E(x) + (d/2) log(|v|²/d)`.
    pub fn hamiltonian(&self) -> f64 {
        let d = self.x.len() as f64;
        self.energy + 0.5 * d * (norm_sq(&self.v) / d).ln()
    }

    /// Log-speed `log|v|`.
    pub fn log_speed(&self) -> f64 {
        0.5 * norm_sq(&self.v).ln()
    }

    /// Leapfrog with position scale `s = d/|v|²`, in place.
    pub fn step(&mut self, model: &EnergyModel, eps: f64) -> Result<()> {
        let d = self.x.len() as f64;
        let mut v = self.v.clone();
        axpy(-0.5 * eps, &self.grad, &mut v);
        let v2 = norm_sq(&v);
        if !(v2 >= SINGULARITY_V2) {
            return Err(Error::Singularity(v2));
        }
        let mut x = self.x.clone();
        axpy(eps * d / v2, &v, &mut x);
        let mut grad = vec![0.0; x.len()];
        let energy = model.checked_value_and_grad(&x, &mut grad)?;
        axpy(-0.5 * eps, &grad, &mut v);
        self.x = x;
        self.v = v;
        self.t += eps;
        self.energy = energy;
        self.grad = grad;
        Ok(())
    }
}

/// One original-coordinate ESH leapfrog step.
pub fn original_leapfrog_step(
    state: &PhaseState,
    model: &EnergyModel,
    eps: f64,
) -> Result<PhaseState> {
    let mut next = state.clone();
    next.step(model, eps)?;
    Ok(next)
}

/// A scaled-time trajectory on the grid `t̄ = 0, ε, …, Nε`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eps: f64,
    pub states: Vec<ScaledState>,
    /// Unscaled time `t(t̄)` at each grid point.
    pub t_unscaled: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, ScaledState::dim)
    }

    /// Log-speed `r` at each grid point.
    pub fn log_speed_weights(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.r).collect()
    }

    pub fn total_time(&self) -> f64 {
        self.t_unscaled.last().copied().unwrap_or(0.0)
    }

    /// Builds a trajectory from states, computing `t(t̄)`.
    pub fn from_states(states: Vec<ScaledState>, eps: f64) -> Result<Self> {
        let d = states.first().map_or(1, ScaledState::dim);
        let r: Vec<f64> = states.iter().map(|s| s.r).collect();
        let t_unscaled = time_rescale(&r, eps, d)?;
        Ok(Self {
            eps,
            states,
            t_unscaled,
        })
    }
}

/// A direction drawn uniformly from the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut u = crate::energy::benchmarks_standard_normal(dim, rng);
        let n = norm(&u);
        if n > 1e-300 {
            scale_in_place(1.0 / n, &mut u);
            return u;
        }
    }
}

/// Runs `n_steps` scaled leapfrog steps from `x0` with `r(0) = 0` and a
/// sphere-uniform initial direction drawn from `rng_seed`.
pub fn integrate(
    x0: &[f64],
    model: &EnergyModel,
    eps: f64,
    n_steps: usize,
    rng_seed: u64,
) -> Result<Trajectory> {
    let mut rng = rng_from_seed(rng_seed);
    let u0 = random_unit_vector(x0.len(), &mut rng);
    integrate_from(
        ScaledState::new(x0.to_vec(), u0, model)?,
        model,
        eps,
        n_steps,
    )
}

/// Runs `n_steps` scaled leapfrog steps from an existing state.
pub fn integrate_from(
    start: ScaledState,
    model: &EnergyModel,
    eps: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {eps}"
        )));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut s = start;
    states.push(s.clone());
    for i in 0..n_steps {
        s.step(model, eps).map_err(|e| e.at_step(i + 1))?;
        states.push(s.clone());
    }
    Trajectory::from_states(states, eps)
}

/// Cumulative unscaled time `t(t̄) = ∫₀^t̄ e^{r}/d`, trapezoidal on a uniform
/// grid of spacing `eps`. The sum is carried with the largest `r` factored
/// out.
pub fn time_rescale(r_values: &[f64], eps: f64, dim: usize) -> Result<Vec<f64>> {
    if r_values.is_empty() {
        return Ok(Vec::new());
    }
    if !all_finite(r_values) {
        return Err(Error::NonFinite {
            what: "log-speed",
            x: r_values.to_vec(),
        });
    }
    let shift = r_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = shift.exp() * eps / (2.0 * dim as f64);
    let mut out = Vec::with_capacity(r_values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in r_values.windows(2) {
        acc += (w[0] - shift).exp() + (w[1] - shift).exp();
        out.push(acc * scale);
    }
    if !all_finite(&out) {
        return Err(Error::NonFinite {
            what: "unscaled time",
            x: vec![*out.last().unwrap()],
        });
    }
    Ok(out)
}
