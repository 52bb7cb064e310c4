//! Job-size distributions, order statistics and the reserve statistic
//! `E[min of k draws]`.
//!
//! Every family exposes its CDF; continuous families also expose density,
//! closed-form hazard rate and an inverse survival function, which lets the
//! first order statistic be sampled with one uniform draw. Step CDFs
//! (two-point, empirical) are always sampled literally.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::stats::{Estimate, Moments};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Exponential {
        rate: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Pareto {
        shape: f64,
        scale: f64,
    },
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint {
        low: f64,
        high: f64,
        p_high: f64,
    },
    /// Uniform draw from a sorted sample. `source` is the file it came from.
    Empirical {
        values: Arc<[f64]>,
        source: Option<String>,
    },
}

/// A validated job-size distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    family: Family,
    mhr: bool,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(msg()))
    }
}

fn finite(x: f64) -> bool {
    x.is_finite()
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        check(finite(rate) && rate > 0.0, || format!("rate must be > 0, got {rate}"))?;
        Ok(DistributionSpec {
            family: Family::Exponential { rate },
            mhr: true,
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check(finite(lo) && finite(hi) && lo >= 0.0 && hi > lo, || {
            format!("need 0 <= lo < hi, got lo={lo} hi={hi}")
        })?;
        Ok(DistributionSpec {
            family: Family::Uniform { lo, hi },
            mhr: true,
        })
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        check(
            finite(shape) && finite(scale) && shape > 0.0 && scale > 0.0,
            || format!("need shape > 0 and scale > 0, got {shape}, {scale}"),
        )?;
        Ok(DistributionSpec {
            family: Family::Pareto { shape, scale },
            mhr: false,
        })
    }

    /// `p_high` may be 0 or 1, which gives a point mass.
    pub fn two_point(low: f64, high: f64, p_high: f64) -> Result<Self> {
        check(finite(low) && finite(high) && low >= 0.0 && low < high, || {
            format!("need 0 <= low < high, got low={low} high={high}")
        })?;
        check((0.0..=1.0).contains(&p_high), || {
            format!("p_high must lie in [0, 1], got {p_high}")
        })?;
        let degenerate = p_high == 0.0 || p_high == 1.0;
        Ok(DistributionSpec {
            family: Family::TwoPoint { low, high, p_high },
            mhr: degenerate,
        })
    }

    pub fn empirical(mut values: Vec<f64>, source: Option<String>) -> Result<Self> {
        check(!values.is_empty(), || "empirical sample is empty".into())?;
        check(values.iter().all(|&v| finite(v) && v >= 0.0), || {
            "empirical values must be finite and nonnegative".into()
        })?;
        values.sort_by(f64::total_cmp);
        let degenerate = values[0] == values[values.len() - 1];
        Ok(DistributionSpec {
            family: Family::Empirical {
                values: values.into(),
                source,
            },
            mhr: degenerate,
        })
    }

    /// Reads newline-separated nonnegative decimals.
    pub fn empirical_from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::SpecParse {
                spec: format!("empirical:{}", path.display()),
                reason: format!("line {}: `{line}` is not a number", lineno + 1),
            })?;
            values.push(v);
        }
        Self::empirical(values, Some(path.display().to_string()))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// True only when the hazard rate is nondecreasing. Distributions with
    /// atoms are flagged MHR only when they are a single point mass.
    pub fn is_mhr(&self) -> bool {
        self.mhr
    }

    pub fn is_continuous(&self) -> bool {
        matches!(
            self.family,
            Family::Exponential { .. } | Family::Uniform { .. } | Family::Pareto { .. }
        )
    }

    /// `Pr[X <= t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        match &self.family {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            Family::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Family::Pareto { shape, scale } => {
                if t <= *scale {
                    0.0
                } else {
                    1.0 - (scale / t).powf(*shape)
                }
            }
            Family::TwoPoint { low, high, p_high } => {
                if t < *low {
                    0.0
                } else if t < *high {
                    1.0 - p_high
                } else {
                    1.0
                }
            }
            Family::Empirical { values, .. } => {
                values.partition_point(|&v| v <= t) as f64 / values.len() as f64
            }
        }
    }

    /// `Pr[X < t]`, the left limit of the CDF.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match &self.family {
            Family::TwoPoint { low, high, p_high } => {
                if t <= *low {
                    0.0
                } else if t <= *high {
                    1.0 - p_high
                } else {
                    1.0
                }
            }
            Family::Empirical { values, .. } => {
                values.partition_point(|&v| v < t) as f64 / values.len() as f64
            }
            _ => self.cdf(t),
        }
    }

    /// Survival `Pr[X > t]`, computed without cancellation where possible.
    pub fn survival(&self, t: f64) -> f64 {
        match &self.family {
            Family::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            Family::Pareto { shape, scale } => {
                if t <= *scale {
                    1.0
                } else {
                    (scale / t).powf(*shape)
                }
            }
            _ => 1.0 - self.cdf(t),
        }
    }

    /// Density, for continuous families only.
    pub fn pdf(&self, t: f64) -> Option<f64> {
        match &self.family {
            Family::Exponential { rate } => Some(if t < 0.0 { 0.0 } else { rate * (-rate * t).exp() }),
            Family::Uniform { lo, hi } => Some(if t < *lo || t > *hi { 0.0 } else { 1.0 / (hi - lo) }),
            Family::Pareto { shape, scale } => Some(if t < *scale {
                0.0
            } else {
                shape * scale.powf(*shape) / t.powf(shape + 1.0)
            }),
            _ => None,
        }
    }

    /// Closed-form hazard rate `f / (1 - F)`, for continuous families on
    /// the interior of their support.
    pub fn hazard(&self, t: f64) -> Option<f64> {
        match &self.family {
            Family::Exponential { rate } => Some(*rate),
            Family::Uniform { lo, hi } => {
                if t < *lo {
                    Some(0.0)
                } else if t < *hi {
                    Some(1.0 / (hi - t))
                } else {
                    None
                }
            }
            Family::Pareto { shape, scale } => Some(if t < *scale { 0.0 } else { shape / t }),
            _ => None,
        }
    }

    /// Inverse of the survival function for continuous families:
    /// the `t` with `Pr[X > t] = s`, for `s` in `(0, 1]`.
    pub fn inverse_survival(&self, s: f64) -> Option<f64> {
        match &self.family {
            Family::Exponential { rate } => Some(-s.ln() / rate),
            Family::Uniform { lo, hi } => Some(hi - (hi - lo) * s),
            Family::Pareto { shape, scale } => Some(scale * s.powf(-1.0 / shape)),
            _ => None,
        }
    }

    /// Inverse CDF for continuous families.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        match &self.family {
            Family::Exponential { rate } => Some(-(-u).ln_1p() / rate),
            _ => self.inverse_survival(1.0 - u),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.family {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Pareto { shape, scale } => {
                if *shape > 1.0 {
                    scale * shape / (shape - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Family::TwoPoint { low, high, p_high } => low + (high - low) * p_high,
            Family::Empirical { values, .. } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// One draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < *p_high {
                    *high
                } else {
                    *low
                }
            }
            Family::Empirical { values, .. } => values[rng.random_range(0..values.len())],
            _ => {
                let s = 1.0 - rng.random::<f64>();
                self.inverse_survival(s).expect("continuous family")
            }
        }
    }

    /// Minimum of `k` draws. Continuous families use the inverse-CDF
    /// shortcut, step CDFs draw `k` values.
    pub fn sample_min<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        debug_assert!(k >= 1);
        if self.is_continuous() {
            let u: f64 = rng.random();
            // survival of the min is (1 - F)^k, so invert S = (1 - u)^(1/k)
            let s = ((-u).ln_1p() / k as f64).exp();
            self.inverse_survival(s).expect("continuous family")
        } else {
            (0..k).map(|_| self.sample(rng)).fold(f64::INFINITY, f64::min)
        }
    }

    /// Maximum of `k` draws, sampled literally.
    pub fn sample_max<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        (0..k).map(|_| self.sample(rng)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `E[min of k draws]` in closed form. Fails only for a Pareto whose
    /// minimum has infinite mean (`k * shape <= 1`).
    pub fn expected_min(&self, k: usize) -> Result<Estimate> {
        if k == 0 {
            return Err(Error::InvalidParameters("expected_min needs k >= 1".into()));
        }
        let kf = k as f64;
        let v = match &self.family {
            Family::Exponential { rate } => 1.0 / (kf * rate),
            Family::Uniform { lo, hi } => lo + (hi - lo) / (kf + 1.0),
            Family::Pareto { shape, scale } => {
                let a = kf * shape;
                if a <= 1.0 {
                    return Err(Error::InfiniteMean {
                        spec: self.to_string(),
                        k,
                    });
                }
                scale * a / (a - 1.0)
            }
            Family::TwoPoint { low, high, p_high } => low + (high - low) * p_high.powi(k as i32),
            Family::Empirical { values, .. } => {
                // Pr[min >= v_(r)] = ((N - r + 1) / N)^k for ascending order
                let n = values.len() as f64;
                values
                    .iter()
                    .enumerate()
                    .map(|(r, v)| {
                        let upper = ((n - r as f64) / n).powi(k as i32);
                        let lower = ((n - r as f64 - 1.0) / n).powi(k as i32);
                        v * (upper - lower)
                    })
                    .sum()
            }
        };
        Ok(Estimate::exact(v))
    }

    /// Monte Carlo estimate of `E[min of k draws]` from `budget` draws.
    pub fn expected_min_monte_carlo<R: Rng + ?Sized>(
        &self,
        k: usize,
        budget: usize,
        rng: &mut R,
    ) -> Result<Estimate> {
        if budget == 0 {
            return Err(Error::ZeroBudget);
        }
        if k == 0 {
            return Err(Error::InvalidParameters("expected_min needs k >= 1".into()));
        }
        let mut acc = Moments::default();
        for _ in 0..budget {
            acc.push(self.sample_min(k, rng));
        }
        Ok(acc.estimate())
    }

    /// `sup { z : Pr[X <= z] < 1/m }`. For continuous families this is the
    /// `1/m` quantile (infinite for unbounded support when `m == 1`).
    pub fn alpha_quantile(&self, m: usize) -> f64 {
        assert!(m >= 1, "alpha_quantile needs m >= 1");
        let target = 1.0 / m as f64;
        match &self.family {
            Family::TwoPoint { low, high, p_high } => {
                if 1.0 - p_high >= target {
                    *low
                } else {
                    *high
                }
            }
            Family::Empirical { values, .. } => {
                // smallest order statistic r with r / N >= 1 / m
                let n = values.len();
                let r = n.div_ceil(m).max(1);
                values[r - 1]
            }
            Family::Uniform { hi, .. } if m == 1 => *hi,
            _ if m == 1 => f64::INFINITY,
            _ => self.quantile(target).expect("continuous family"),
        }
    }

    /// CDF of the minimum of `k` draws: `1 - (1 - F(t))^k`.
    pub fn min_of_k_cdf(&self, k: usize, t: f64) -> f64 {
        1.0 - self.min_of_k_survival(k, t)
    }

    /// `Pr[min of k draws > t] = (1 - F(t))^k`.
    pub fn min_of_k_survival(&self, k: usize, t: f64) -> f64 {
        self.survival(t).powi(k as i32)
    }

    /// Density of the minimum of `k` draws: `k (1 - F)^(k-1) f`.
    pub fn min_of_k_pdf(&self, k: usize, t: f64) -> Option<f64> {
        let f = self.pdf(t)?;
        Some(k as f64 * self.survival(t).powi(k as i32 - 1) * f)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Exponential { rate } => write!(f, "exp:{rate}"),
            Family::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Family::Pareto { shape, scale } => write!(f, "pareto:{shape},{scale}"),
            Family::TwoPoint { low, high, p_high } => write!(f, "twopoint:{low},{high},{p_high}"),
            Family::Empirical { source, values } => match source {
                Some(path) => write!(f, "empirical:{path}"),
                None => write!(f, "empirical:<{} inline values>", values.len()),
            },
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: &str| Error::SpecParse {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (name, args) = s.split_once(':').ok_or_else(|| err("expected NAME:ARGS"))?;
        if name == "empirical" {
            return Self::empirical_from_file(args);
        }
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| err("arguments must be numbers"))?;
        match (name, nums.as_slice()) {
            ("exp", [rate]) => Self::exponential(*rate),
            ("uniform", [lo, hi]) => Self::uniform(*lo, *hi),
            ("pareto", [shape, scale]) => Self::pareto(*shape, *scale),
            ("twopoint", [low, high, p]) => Self::two_point(*low, *high, *p),
            ("exp" | "uniform" | "pareto" | "twopoint", _) => Err(err("wrong number of arguments")),
            _ => Err(err("unknown family")),
        }
    }
}

/// The `i`-th smallest of `k` i.i.d. draws.
#[derive(Debug, Clone)]
pub struct OrderStatQuery {
    pub spec: DistributionSpec,
    i: usize,
    k: usize,
}

impl OrderStatQuery {
    pub fn new(spec: DistributionSpec, i: usize, k: usize) -> Result<Self> {
        if i == 0 || i > k {
            return Err(Error::RankOutOfRange { rank: i, max: k });
        }
        Ok(OrderStatQuery { spec, i, k })
    }

    pub fn rank(&self) -> usize {
        self.i
    }

    pub fn draws(&self) -> usize {
        self.k
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut buf = Vec::new();
        self.sample_with(rng, &mut buf)
    }

    /// Like [`sample`](Self::sample) but reuses `buf` for literal draws.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<f64>) -> f64 {
        if self.i == 1 {
            return self.spec.sample_min(self.k, rng);
        }
        buf.clear();
        buf.extend((0..self.k).map(|_| self.spec.sample(rng)));
        let (_, nth, _) = buf.select_nth_unstable_by(self.i - 1, f64::total_cmp);
        *nth
    }
}

/// Free-function form of [`OrderStatQuery::sample`].
pub fn sample_order_stat<R: Rng + ?Sized>(q: &OrderStatQuery, rng: &mut R) -> f64 {
    q.sample(rng)
}
