//! Sample-quality metrics.
//!
//! [`mmd2_unbiased`] is the unbiased U-statistic for squared maximum mean
//! discrepancy under a Gaussian kernel `k(x, y) = exp(−|x − y|²/(2h²))`,
//! with `h` either fixed or the median pairwise distance of the pooled set.
//! [`ess`] is an autocorrelation effective sample size per sample with
//! Geyer's initial-positive-sequence truncation.
//!
//! Kernel sums are split into per-row partial sums (possibly computed in
//! parallel) that are then added in row order, so results do not depend on
//! the execution policy.

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::vecops::dist_sq;
use crate::{Error, Result};

/// Kernel bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Bandwidth {
    #[default]
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
    pub exec: Execution,
}

impl MmdConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
            exec: Execution::default(),
        }
    }
}

/// Median of the pairwise Euclidean distances `|zᵢ − zⱼ|`, `i < j`, over the
/// pooled set `xs ∪ ys`.
pub fn median_bandwidth(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    median_bandwidth_with(xs, ys, Execution::default())
}

pub fn median_bandwidth_with(xs: &[Vec<f64>], ys: &[Vec<f64>], exec: Execution) -> Result<f64> {
    let pooled: Vec<&[f64]> = xs.iter().chain(ys).map(Vec::as_slice).collect();
    let n = pooled.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "median heuristic needs at least 2 points, got {n}"
        )));
    }
    check_dims(&pooled)?;
    let rows = exec.map_indexed(n - 1, |i| {
        pooled[i + 1..]
            .iter()
            .map(|z| dist_sq(pooled[i], z))
            .collect::<Vec<f64>>()
    });
    let mut d2: Vec<f64> = rows.into_iter().flatten().collect();
    let m = d2.len();
    let mid = m / 2;
    let (_, upper, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let h = if m % 2 == 1 {
        upper.sqrt()
    } else {
        let lower = d2[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower.sqrt() + upper.sqrt())
    };
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Degenerate(format!(
            "median pairwise distance is {h}; points are (nearly) identical"
        )));
    }
    Ok(h)
}

fn check_dims(points: &[&[f64]]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.len());
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Unbiased squared MMD between `xs` (m points) and `ys` (n points):
/// `Σ_{i≠j} k(xᵢ,xⱼ)/(m(m−1)) + Σ_{i≠j} k(yᵢ,yⱼ)/(n(n−1)) − 2 Σᵢⱼ k(xᵢ,yⱼ)/(mn)`.
pub fn mmd2_unbiased(xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &MmdConfig) -> Result<f64> {
    let (m, n) = (xs.len(), ys.len());
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "unbiased MMD needs at least 2 points per set, got {m} and {n}"
        )));
    }
    let h = match cfg.bandwidth {
        Bandwidth::Median => median_bandwidth_with(xs, ys, cfg.exec)?,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
    };
    let all: Vec<&[f64]> = xs.iter().chain(ys).map(Vec::as_slice).collect();
    check_dims(&all)?;
    let gamma = 1.0 / (2.0 * h * h);
    let k = |a: &[f64], b: &[f64]| (-dist_sq(a, b) * gamma).exp();

    let within = |set: &[Vec<f64>]| -> f64 {
        let rows = cfg.exec.map_indexed(set.len(), |i| {
            set[i + 1..].iter().map(|z| k(&set[i], z)).sum::<f64>()
        });
        2.0 * rows.iter().sum::<f64>()
    };
    let kxx = within(xs);
    let kyy = within(ys);
    let cross_rows = cfg
        .exec
        .map_indexed(m, |i| ys.iter().map(|y| k(&xs[i], y)).sum::<f64>());
    let kxy: f64 = cross_rows.iter().sum();

    let (mf, nf) = (m as f64, n as f64);
    Ok(kxx / (mf * (mf - 1.0)) + kyy / (nf * (nf - 1.0)) - 2.0 * kxy / (mf * nf))
}

/// Effective sample size summary over several chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssResult {
    /// Mean over chains of the per-chain ESS/N.
    pub ess_per_sample: f64,
    /// Per-chain ESS/N, each the minimum over coordinates.
    pub per_chain: Vec<f64>,
    /// Standard deviation over chains.
    pub std: f64,
}

/// Minimum chain length accepted by [`ess`].
pub const MIN_ESS_LEN: usize = 10;

/// ESS/N of a scalar chain: `1/(1 + 2 Σ ρ̂ₛ)` with the autocorrelation sum cut
/// at the first non-positive pair `ρ̂₂ₘ + ρ̂₂ₘ₊₁`. Anti-correlated chains can
/// exceed 1 on paper; the result is clipped to 1.
pub fn ess_scalar(chain: &[f64]) -> Result<f64> {
    let n = chain.len();
    if n < MIN_ESS_LEN {
        return Err(Error::InvalidArgument(format!(
            "chain length {n} is below the minimum of {MIN_ESS_LEN}"
        )));
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = chain.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::Degenerate("zero-variance chain".into()));
    }
    // τ = −1 + 2 Σ_m Γ_m, Γ_m = ρ_{2m} + ρ_{2m+1}
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    Ok(if tau <= 1.0 { 1.0 } else { 1.0 / tau })
}

/// ESS/N over chains of vector-valued states. Each chain's value is the
/// minimum over coordinates; the summary is mean and standard deviation
/// over chains.
pub fn ess(chains: &[Vec<Vec<f64>>]) -> Result<EssResult> {
    ess_with(chains, Execution::default())
}

pub fn ess_with(chains: &[Vec<Vec<f64>>], exec: Execution) -> Result<EssResult> {
    if chains.is_empty() {
        return Err(Error::InvalidArgument("no chains".into()));
    }
    let per_chain = exec
        .map_slice(chains, |chain| {
            let d = chain.first().map_or(0, Vec::len);
            if d == 0 {
                return Err(Error::InvalidArgument(
                    "empty chain or zero-dimensional states".into(),
                ));
            }
            let mut worst = f64::INFINITY;
            for i in 0..d {
                let series: Vec<f64> = chain.iter().map(|x| x[i]).collect();
                worst = worst.min(ess_scalar(&series)?);
            }
            Ok(worst)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let k = per_chain.len() as f64;
    let mean = per_chain.iter().sum::<f64>() / k;
    let var = per_chain.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    Ok(EssResult {
        ess_per_sample: mean,
        per_chain,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn median_of_three_points() {
        let h = median_bandwidth(&pts(&[0.0, 1.0]), &pts(&[3.0])).unwrap();
        assert_eq!(h, 2.0);
    }

    #[test]
    fn median_even_count_averages() {
        // distances {1, 2, 3, 1, 2, 1} → sorted 1 1 1 2 2 3 → (1 + 2)/2
        let h = median_bandwidth(&pts(&[0.0, 1.0]), &pts(&[2.0, 3.0])).unwrap();
        assert_eq!(h, 1.5);
    }

    #[test]
    fn median_rejects_identical_points() {
        assert!(median_bandwidth(&pts(&[1.0, 1.0]), &pts(&[1.0])).is_err());
        assert!(median_bandwidth(&pts(&[1.0]), &[]).is_err());
    }

    #[test]
    fn mmd_duplicated_points() {
        assert_eq!(
            mmd2_unbiased(&pts(&[0.0, 0.0]), &pts(&[0.0, 0.0]), &MmdConfig::fixed(1.0)).unwrap(),
            0.0
        );
        let (a, h) = (0.7, 0.9);
        let got = mmd2_unbiased(&pts(&[0.0, 0.0]), &pts(&[a, a]), &MmdConfig::fixed(h)).unwrap();
        let want = 2.0 - 2.0 * (-a * a / (2.0 * h * h)).exp();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn mmd_needs_two_points() {
        assert!(mmd2_unbiased(&pts(&[0.0]), &pts(&[0.0, 1.0]), &MmdConfig::fixed(1.0)).is_err());
        assert!(
            mmd2_unbiased(&pts(&[0.0, 1.0]), &pts(&[0.0, 1.0]), &MmdConfig::fixed(0.0)).is_err()
        );
    }

    #[test]
    fn ess_of_two_identical_chains() {
        let c: Vec<Vec<f64>> = (0..50).map(|i| vec![((i * 7919) % 13) as f64]).collect();
        let r = ess(&[c.clone(), c]).unwrap();
        assert_eq!(r.per_chain[0], r.per_chain[1]);
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn ess_errors() {
        assert!(ess_scalar(&[1.0; 9]).is_err());
        assert!(ess_scalar(&[1.0; 20]).is_err());
        assert!(ess(&[]).is_err());
    }

    #[test]
    fn alternating_chain_clips_to_one() {
        let c: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert_eq!(ess_scalar(&c).unwrap(), 1.0);
    }
}
