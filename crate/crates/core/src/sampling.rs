//! Inverse-CDF sampling on uniform bins and per-trial random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Name of the generator and the rule used to derive per-trial streams.
pub const RNG_ALGORITHM: &str = "ChaCha8";
pub const RNG_DERIVATION: &str = "ChaCha8Rng::seed_from_u64(seed) with set_stream(trial_index)";

/// Independent stream for one trial. Streams depend only on `(seed, trial)`,
/// so results do not depend on how trials are spread across workers.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RngProvenance {
    pub algorithm: &'static str,
    pub derivation: &'static str,
    pub seed: u64,
}

impl RngProvenance {
    pub fn new(seed: u64) -> Self {
        Self {
            algorithm: RNG_ALGORITHM,
            derivation: RNG_DERIVATION,
            seed,
        }
    }
}

/// Picks index `i` with probability `weights[i] / Σ weights` from a uniform
/// variate `u ∈ [0, 1)`.
pub fn sample_index(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty cdf");
    let target = u * total;
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// Running sums of `weights`.
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Piecewise-uniform density over contiguous bins `[origin + j·step,
/// origin + (j+1)·step)` with the given bin masses.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSampler {
    origin: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl BinnedSampler {
    pub fn new(masses: &[f64], origin: f64, step: f64) -> Result<Self> {
        if let Some(&bad) = masses.iter().find(|m| !(**m >= 0.0)) {
            return Err(Error::Negative(bad));
        }
        let mut cdf = cumulative(masses);
        let total = *cdf.last().ok_or(Error::ZeroNorm)?;
        if !(total > 0.0) {
            return Err(Error::ZeroNorm);
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { origin, step, cdf })
    }

    /// Inverse CDF with linear interpolation inside the selected bin.
    pub fn sample(&self, u: f64) -> f64 {
        let j = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1);
        let below = if j == 0 { 0.0 } else { self.cdf[j - 1] };
        let mass = self.cdf[j] - below;
        let frac = if mass > 0.0 {
            ((u - below) / mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.origin + (j as f64 + frac) * self.step
    }

    /// Mean and standard deviation of the piecewise-uniform law.
    pub fn moments(&self) -> (f64, f64) {
        let mut mean = 0.0;
        let mut second = 0.0;
        let mut below = 0.0;
        for (j, &c) in self.cdf.iter().enumerate() {
            let mass = c - below;
            below = c;
            if mass == 0.0 {
                continue;
            }
            let a = self.origin + j as f64 * self.step;
            let b = a + self.step;
            mean += mass * 0.5 * (a + b);
            second += mass * (a * a + a * b + b * b) / 3.0;
        }
        (mean, (second - mean * mean).max(0.0).sqrt())
    }
}
