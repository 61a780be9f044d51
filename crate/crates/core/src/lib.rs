//! Energy Sampling Hamiltonian (ESH) dynamics and a desk-scale benchmark
//! harness for gradient-based samplers.
//!
//! ESH dynamics pair the usual position `x` with a velocity whose kinetic
//! energy is logarithmic, `K(v) = d/2 log(|v|²/d)`. Under that choice the
//! time average of a single deterministic trajectory, taken in the original
//! time coordinate, matches the Gibbs density `exp(-E(x)) / Z`. The crate
//! integrates those dynamics with a time-scaled leapfrog, turns trajectories
//! into samples (ergodic interpolation, weighted reservoir sampling, and
//! Jarzynski importance weights), and compares them against ULA, MALA and HMC
//! with MMD and effective sample size.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`energy`] | energy contract, analytic benchmarks, gradient checker |
//! | [`esh`] | scaled and original-coordinate leapfrog integrators |
//! | [`sampling`] | ergodic, reservoir and Jarzynski sampling |
//! | [`baselines`] | ULA, MALA and HMC transitions |
//! | [`metrics`] | unbiased MMD² and autocorrelation ESS |
//! | [`harness`] | experiment sweeps, seeding, CSV/JSON emission |
//!
//! Chain-level work is spread over a rayon pool when the `parallel` feature
//! is enabled (the default). Every reduction is done in a fixed order, so the
//! sequential fallback produces bit-identical results.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod energy;
pub mod error;
pub mod esh;
pub mod exec;
pub mod harness;
pub mod metrics;
pub mod sampling;
pub mod seed;
mod vecops;

pub use error::{Error, Result};
