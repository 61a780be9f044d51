use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{funnel_energy, gaussian_energy, ring_mixture, Energy, EnergyModel, GaussianEnergy};
use crate::{Error, Result};

/// Registry names of the analytic benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BenchmarkName {
    Mog2d,
    Mog2dPrior,
    Icg50,
    Scg2d,
    Scg2dBias,
    Funnel20,
    /// Standard normal in `d` dimensions.
    Gaussian(usize),
}

impl BenchmarkName {
    pub const SYNTHETIC: [BenchmarkName; 6] = [
        BenchmarkName::Mog2d,
        BenchmarkName::Mog2dPrior,
        BenchmarkName::Icg50,
        BenchmarkName::Scg2d,
        BenchmarkName::Scg2dBias,
        BenchmarkName::Funnel20,
    ];

    /// Key used for `energy.<key>.<param>` overrides.
    fn param_key(self) -> &'static str {
        match self {
            BenchmarkName::Mog2d | BenchmarkName::Mog2dPrior => "mog2d",
            BenchmarkName::Icg50 => "icg50",
            BenchmarkName::Scg2d | BenchmarkName::Scg2dBias => "scg2d",
            BenchmarkName::Funnel20 => "funnel20",
            BenchmarkName::Gaussian(_) => "gaussian",
        }
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchmarkName::Mog2d => f.write_str("MOG2D"),
            BenchmarkName::Mog2dPrior => f.write_str("MOG2D_PRIOR"),
            BenchmarkName::Icg50 => f.write_str("ICG50"),
            BenchmarkName::Scg2d => f.write_str("SCG2D"),
            BenchmarkName::Scg2dBias => f.write_str("SCG2D_BIAS"),
            BenchmarkName::Funnel20 => f.write_str("FUNNEL20"),
            BenchmarkName::Gaussian(d) => write!(f, "GAUSSIAN({d})"),
        }
    }
}

impl FromStr for BenchmarkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        Ok(match up.as_str() {
            "MOG2D" => BenchmarkName::Mog2d,
            "MOG2D_PRIOR" => BenchmarkName::Mog2dPrior,
            "ICG50" => BenchmarkName::Icg50,
            "SCG2D" => BenchmarkName::Scg2d,
            "SCG2D_BIAS" => BenchmarkName::Scg2dBias,
            "FUNNEL20" => BenchmarkName::Funnel20,
            other => {
                let d = other
                    .strip_prefix("GAUSSIAN(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&d| d > 0)
                    .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))?;
                BenchmarkName::Gaussian(d)
            }
        })
    }
}

/// Tunable constants of the benchmark suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkParams {
    pub mog_modes: usize,
    pub mog_radius: f64,
    pub mog_sigma: f64,
    /// Index of the mode the informative-prior variant starts from.
    pub mog_prior_mode: usize,
    pub icg_dim: usize,
    pub icg_min_std: f64,
    pub icg_max_std: f64,
    pub scg_rho: f64,
    /// Offset of the biased start, in standard deviations along the long axis.
    pub scg_bias_stds: f64,
    pub funnel_dim: usize,
    pub funnel_sigma: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            mog_modes: 8,
            mog_radius: 4.0,
            mog_sigma: 0.15,
            mog_prior_mode: 0,
            icg_dim: 50,
            icg_min_std: 0.01,
            icg_max_std: 1.0,
            scg_rho: 0.99,
            scg_bias_stds: 3.0,
            funnel_dim: 20,
            funnel_sigma: 3.0,
        }
    }
}

impl BenchmarkParams {
    /// Applies `energy.<name>.<param> = value` overrides. Keys that do not
    /// start with `energy.` are ignored.
    pub fn apply_overrides(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in entries {
            let Some(rest) = key.strip_prefix("energy.") else {
                continue;
            };
            let (name, param) = rest
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("malformed key `{key}`")))?;
            let bench: BenchmarkName = name
                .parse()
                .map_err(|_| Error::Config(format!("unknown benchmark `{name}` in key `{key}`")))?;
            let float = || {
                value.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("`{key}`: expected a number, got `{value}`"))
                })
            };
            let int = || {
                value.trim().parse::<usize>().map_err(|_| {
                    Error::Config(format!("`{key}`: expected an integer, got `{value}`"))
                })
            };
            match (bench.param_key(), param) {
                ("mog2d", "modes") => self.mog_modes = int()?,
                ("mog2d", "radius") => self.mog_radius = float()?,
                ("mog2d", "sigma") => self.mog_sigma = float()?,
                ("mog2d", "prior_mode") => self.mog_prior_mode = int()?,
                ("icg50", "dim") => self.icg_dim = int()?,
                ("icg50", "min_std") => self.icg_min_std = float()?,
                ("icg50", "max_std") => self.icg_max_std = float()?,
                ("scg2d", "rho") => self.scg_rho = float()?,
                ("scg2d", "bias_stds") => self.scg_bias_stds = float()?,
                ("funnel20", "dim") => self.funnel_dim = int()?,
                ("funnel20", "sigma") => self.funnel_sigma = float()?,
                _ => return Err(Error::Config(format!("unknown parameter in key `{key}`"))),
            }
        }
        Ok(())
    }
}

/// How chains are initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Initializer {
    StandardNormal,
    /// A fixed mode center plus isotropic Gaussian jitter.
    ModePrior {
        center: Vec<f64>,
        sigma: f64,
    },
    /// Every chain starts at the same point.
    BiasedCorner(Vec<f64>),
    UniformBox {
        lo: f64,
        hi: f64,
    },
}

impl Initializer {
    pub fn draw<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Initializer::StandardNormal => standard_normal(dim, rng),
            Initializer::ModePrior { center, sigma } => center
                .iter()
                .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Initializer::BiasedCorner(p) => p.clone(),
            Initializer::UniformBox { lo, hi } => {
                (0..dim).map(|_| rng.random_range(*lo..*hi)).collect()
            }
        }
    }
}

/// Exact sampler for a benchmark's target density.
#[derive(Debug, Clone)]
pub enum TruthSampler {
    Gaussian(GaussianEnergy),
    Mixture { centers: Vec<Vec<f64>>, sigma: f64 },
    Funnel { dim: usize, sigma1: f64 },
}

impl TruthSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            TruthSampler::Gaussian(g) => {
                let z = standard_normal(g.mean().len(), rng);
                g.transform_standard(&z)
            }
            TruthSampler::Mixture { centers, sigma } => {
                let k = rng.random_range(0..centers.len());
                centers[k]
                    .iter()
                    .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            TruthSampler::Funnel { dim, sigma1 } => {
                let x1 = sigma1 * rng.sample::<f64, _>(StandardNormal);
                let s = (0.5 * x1).exp();
                std::iter::once(x1)
                    .chain((1..*dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            }
        }
    }

    pub fn draw_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// A registered benchmark: energy, initializer and ground-truth sampler.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: BenchmarkName,
    energy: Arc<dyn Energy>,
    pub init: Initializer,
    pub truth: TruthSampler,
    log_partition: Option<f64>,
}

impl Benchmark {
    pub fn new(name: BenchmarkName) -> Result<Self> {
        Self::with_params(name, &BenchmarkParams::default())
    }

    pub fn with_params(name: BenchmarkName, p: &BenchmarkParams) -> Result<Self> {
        use BenchmarkName::*;
        let bench = match name {
            Mog2d | Mog2dPrior => {
                if p.mog_modes == 0 || p.mog_prior_mode >= p.mog_modes {
                    return Err(Error::Config(
                        "mixture mode count or prior mode out of range".into(),
                    ));
                }
                if !(p.mog_sigma > 0.0) {
                    return Err(Error::Config("mixture sigma must be positive".into()));
                }
                let mix = ring_mixture(p.mog_modes, p.mog_radius, p.mog_sigma);
                let init = if name == Mog2dPrior {
                    Initializer::ModePrior {
                        center: mix.centers()[p.mog_prior_mode].clone(),
                        sigma: p.mog_sigma,
                    }
                } else {
                    Initializer::StandardNormal
                };
                let truth = TruthSampler::Mixture {
                    centers: mix.centers().to_vec(),
                    sigma: p.mog_sigma,
                };
                Benchmark {
                    name,
                    energy: Arc::new(mix),
                    init,
                    truth,
                    log_partition: Some(0.0),
                }
            }
            Icg50 => {
                let d = p.icg_dim;
                if d == 0 || !(p.icg_min_std > 0.0 && p.icg_max_std >= p.icg_min_std) {
                    return Err(Error::Config(
                        "invalid ill-conditioned Gaussian parameters".into(),
                    ));
                }
                let stds = log_spaced(p.icg_min_std, p.icg_max_std, d);
                let mut cov = vec![0.0; d * d];
                for (i, s) in stds.iter().enumerate() {
                    cov[i * d + i] = s * s;
                }
                Self::gaussian(
                    name,
                    gaussian_energy(&vec![0.0; d], &cov)?,
                    Initializer::StandardNormal,
                )
            }
            Scg2d | Scg2dBias => {
                let rho = p.scg_rho;
                let g = gaussian_energy(&[0.0, 0.0], &[1.0, rho, rho, 1.0])?;
                let init = if name == Scg2dBias {
                    // long principal axis of [[1, ρ], [ρ, 1]] is (1, 1)/√2 with variance 1 + |ρ|
                    let axis = if rho >= 0.0 { [1.0, 1.0] } else { [1.0, -1.0] };
                    let off = p.scg_bias_stds * (1.0 + rho.abs()).sqrt() / 2f64.sqrt();
                    Initializer::BiasedCorner(vec![off * axis[0], off * axis[1]])
                } else {
                    Initializer::StandardNormal
                };
                Self::gaussian(name, g, init)
            }
            Funnel20 => {
                let f = funnel_energy(p.funnel_dim, p.funnel_sigma)?;
                let lz = f.log_partition();
                Benchmark {
                    name,
                    init: Initializer::StandardNormal,
                    truth: TruthSampler::Funnel {
                        dim: p.funnel_dim,
                        sigma1: p.funnel_sigma,
                    },
                    energy: Arc::new(f),
                    log_partition: Some(lz),
                }
            }
            Gaussian(d) => {
                let mut cov = vec![0.0; d * d];
                for i in 0..d {
                    cov[i * d + i] = 1.0;
                }
                Self::gaussian(
                    name,
                    gaussian_energy(&vec![0.0; d], &cov)?,
                    Initializer::StandardNormal,
                )
            }
        };
        Ok(bench)
    }

    /// Wraps an arbitrary Gaussian energy as a benchmark.
    pub fn gaussian(name: BenchmarkName, g: GaussianEnergy, init: Initializer) -> Self {
        Benchmark {
            name,
            log_partition: Some(g.log_partition()),
            truth: TruthSampler::Gaussian(g.clone()),
            energy: Arc::new(g),
            init,
        }
    }

    pub fn dim(&self) -> usize {
        self.energy.dim()
    }

    /// A fresh model handle with its own gradient counter.
    pub fn model(&self) -> EnergyModel {
        EnergyModel::from_arc(Arc::clone(&self.energy))
    }

    pub fn energy(&self) -> &Arc<dyn Energy> {
        &self.energy
    }

    /// `log ∫ exp(−E)`, when known in closed form.
    pub fn log_partition(&self) -> Option<f64> {
        self.log_partition
    }

    pub fn init_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.init.draw(self.dim(), rng)
    }

    pub fn truth_samples<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        self.truth.draw_n(n, rng)
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}
