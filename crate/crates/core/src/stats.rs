//! Monte Carlo estimates with their standard errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl Estimate {
    /// Binomial proportion `hits / n` with stderr `√(p(1−p)/n)`.
    pub fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Self::default();
        }
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            samples: n,
        }
    }

    /// Sample mean with stderr from the unbiased sample variance.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            stderr,
            samples: n as u64,
        }
    }

    /// `|mean − value| ≤ k·stderr`.
    pub fn within_sigma(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Tally of checked positions and how many violated the expected correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub samples: u64,
    pub mismatches: u64,
}

impl Counts {
    pub fn record(&mut self, mismatch: bool) {
        self.samples += 1;
        self.mismatches += u64::from(mismatch);
    }

    pub fn merge(&mut self, other: &Counts) {
        self.samples += other.samples;
        self.mismatches += other.mismatches;
    }

    pub fn rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.mismatches as f64 / self.samples as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::proportion(self.mismatches, self.samples)
    }
}

/// Plug-in mutual information (bits) between the two coordinates of a joint
/// count table. Stderr is the delta-method value `√((E[i²] − I²)/n)` where `i`
/// is the pointwise information.
pub fn mutual_information<A: Ord + Clone, B: Ord + Clone>(joint: &BTreeMap<(A, B), u64>) -> Estimate {
    let n: u64 = joint.values().sum();
    if n == 0 {
        return Estimate::default();
    }
    let mut left: BTreeMap<A, u64> = BTreeMap::new();
    let mut right: BTreeMap<B, u64> = BTreeMap::new();
    for ((a, b), &c) in joint {
        *left.entry(a.clone()).or_default() += c;
        *right.entry(b.clone()).or_default() += c;
    }
    let nf = n as f64;
    let (mut first, mut second) = (0.0, 0.0);
    for ((a, b), &c) in joint {
        if c == 0 {
            continue;
        }
        let pointwise = (c as f64 * nf / (left[a] as f64 * right[b] as f64)).log2();
        let w = c as f64 / nf;
        first += w * pointwise;
        second += w * pointwise * pointwise;
    }
    let var = (second - first * first).max(0.0);
    Estimate {
        mean: first,
        stderr: (var / nf).sqrt(),
        samples: n,
    }
}
