//! Small statistics helpers shared by the estimators and checks.

use serde::{Deserialize, Serialize};

/// Confidence level used by every distributional check (99%).
pub const CONFIDENCE_ALPHA: f64 = 0.01;

/// A point estimate with its standard error. Closed-form values carry
/// `std_error == 0` and `samples == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Estimate {
            mean,
            std_error: 0.0,
            samples: 0,
        }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut acc = Moments::default();
        for &x in xs {
            acc.push(x);
        }
        acc.estimate()
    }
}

/// Running sum and sum of squares.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate {
            mean: self.mean(),
            std_error: se,
            samples: self.n,
        }
    }
}

/// Two-sided DKW half-width for an empirical CDF from `n` samples at the
/// crate-wide 99% level: `sqrt(ln(2/0.01) / (2n))`.
pub fn dkw_band(n: usize) -> f64 {
    ((2.0 / CONFIDENCE_ALPHA).ln() / (2.0 * n as f64)).sqrt()
}

/// Empirical tail `Pr[X > t]` from an ascending-sorted sample.
pub fn tail_sorted(sorted: &[f64], t: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let le = sorted.partition_point(|&x| x <= t);
    (sorted.len() - le) as f64 / sorted.len() as f64
}

/// Empirical quantile (lower) from an ascending-sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

pub fn sort_f64(xs: &mut [f64]) {
    xs.sort_by(f64::total_cmp);
}

/// Ratio of two independent estimates with a delta-method standard error.
pub fn ratio_independent(num: Estimate, den: Estimate) -> Estimate {
    let r = num.mean / den.mean;
    let rel = (num.std_error / num.mean).powi(2) + (den.std_error / den.mean).powi(2);
    let se = if rel.is_finite() { r.abs() * rel.sqrt() } else { f64::NAN };
    Estimate {
        mean: r,
        std_error: se,
        samples: num.samples.min(den.samples),
    }
}

/// Ratio of means for paired samples `(x_t, y_t)` with a delta-method
/// standard error that accounts for their covariance.
pub fn ratio_paired(pairs: &[(f64, f64)]) -> Estimate {
    let n = pairs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            samples: 0,
        };
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let r = mx / my;
    if n < 2 {
        return Estimate {
            mean: r,
            std_error: 0.0,
            samples: n,
        };
    }
    // variance of the linearized residual x - r y
    let var = pairs
        .iter()
        .map(|&(x, y)| {
            let d = (x - mx) - r * (y - my);
            d * d
        })
        .sum::<f64>()
        / (nf - 1.0);
    Estimate {
        mean: r,
        std_error: (var / nf).sqrt() / my.abs(),
        samples: n,
    }
}
