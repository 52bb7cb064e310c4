//! Statistical checks of the distributional inequalities behind the
//! mechanisms: order-statistic and scaling dominance, random copies, the
//! correlation gap, the reduced-machine envelope for MHR priors, the
//! hazard identity of the minimum, and the reserve's unscheduled count.
//!
//! Dominance checks compare empirical tails on a grid with a 99% DKW band
//! per empirical CDF; moment checks allow 3 standard errors of slack.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{coupled_bounds, reference_machines};
use crate::distkit::{DistributionSpec, OrderStatQuery};
use crate::instance::Instance;
use crate::mech::{allocate, derive_reserve, MechanismConfig, ReserveRule};
use crate::stats::{dkw_band, quantile_sorted, ratio_independent, ratio_paired, sort_f64, tail_sorted, Estimate, Moments};
use crate::{Error, Result};

/// Slack on moment comparisons, in standard errors.
pub const SE_SLACK: f64 = 3.0;
/// Largest order-statistic rank accepted by [`check_order_stat_dominance`].
pub const MAX_DOMINANCE_RANK: usize = 6;
/// Cap on `4^i * (m/2) * trials`.
pub const DRAW_BUDGET: f64 = 1e10;
/// Minimum number of grid points in a dominance comparison.
pub const GRID_POINTS: usize = 64;

/// Empirical comparison of `Pr[lhs > t]` against `Pr[rhs > t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub t_grid: Vec<f64>,
    pub lhs_tail: Vec<f64>,
    pub rhs_tail: Vec<f64>,
    /// DKW half-width of one empirical CDF.
    pub band: f64,
    /// Total slack per grid point: one band per empirical side.
    pub allowance: f64,
    /// Largest `lhs - rhs - allowance` over the grid.
    pub max_violation: f64,
    /// Violation at the grid's first point when it is a distinguished
    /// threshold (the `1/m` quantile for order statistics).
    pub boundary_violation: Option<f64>,
    pub pass: bool,
    pub trials: usize,
    pub notes: Vec<String>,
}

impl DominanceReport {
    fn from_tails(t_grid: Vec<f64>, lhs_tail: Vec<f64>, rhs_tail: Vec<f64>, band: f64, sides: usize, trials: usize) -> Self {
        let allowance = band * sides as f64;
        let max_violation = lhs_tail
            .iter()
            .zip(&rhs_tail)
            .map(|(l, r)| l - r - allowance)
            .fold(f64::NEG_INFINITY, f64::max);
        DominanceReport {
            t_grid,
            lhs_tail,
            rhs_tail,
            band,
            allowance,
            max_violation,
            boundary_violation: None,
            pass: max_violation <= 0.0,
            trials,
            notes: Vec::new(),
        }
    }
}

/// Evaluation thresholds: `GRID_POINTS` evenly spaced points on `[lo, hi]`,
/// plus every distinct sample value in range when the pooled sample has few
/// distinct values (step CDFs).
pub fn dominance_grid(lo: f64, pooled_sorted: &[f64]) -> Vec<f64> {
    let hi = quantile_sorted(pooled_sorted, 0.999).max(lo);
    let mut grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut distinct = pooled_sorted.to_vec();
    distinct.dedup();
    if distinct.len() <= 256 {
        grid.extend(distinct.into_iter().filter(|&v| v >= lo && v <= hi));
    }
    sort_f64(&mut grid);
    grid.dedup();
    grid
}

/// Tests `lhs ≼ rhs` (lhs tails never exceed rhs tails beyond both bands)
/// on a grid starting at `lo`.
pub fn compare_samples(mut lhs: Vec<f64>, mut rhs: Vec<f64>, lo: f64) -> DominanceReport {
    assert!(!lhs.is_empty() && lhs.len() == rhs.len(), "need equal nonempty samples");
    sort_f64(&mut lhs);
    sort_f64(&mut rhs);
    let mut pooled: Vec<f64> = lhs.iter().chain(&rhs).copied().collect();
    sort_f64(&mut pooled);
    let grid = dominance_grid(lo, &pooled);
    let lt = grid.iter().map(|&t| tail_sorted(&lhs, t)).collect();
    let rt = grid.iter().map(|&t| tail_sorted(&rhs, t)).collect();
    DominanceReport::from_tails(grid, lt, rt, dkw_band(lhs.len()), 2, lhs.len())
}

/// Tests `lhs ≼ R` for a sample against an exact tail function on `grid`;
/// only the sample side carries a band.
pub fn compare_to_exact(mut lhs: Vec<f64>, grid: Vec<f64>, rhs_tail: impl Fn(f64) -> f64) -> DominanceReport {
    assert!(!lhs.is_empty());
    sort_f64(&mut lhs);
    let lt = grid.iter().map(|&t| tail_sorted(&lhs, t)).collect();
    let rt = grid.iter().map(|&t| rhs_tail(t)).collect();
    DominanceReport::from_tails(grid, lt, rt, dkw_band(lhs.len()), 1, lhs.len())
}

fn need_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        Err(Error::ZeroBudget)
    } else {
        Ok(())
    }
}

/// `X^(i:m) ≼ max(α, max of 4^i copies of min of m/2 draws)` with
/// `α = alpha_quantile(m)`. Odd `m` uses `floor(m/2)` and says so in the
/// report notes.
pub fn check_order_stat_dominance<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    m: usize,
    i: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DominanceReport> {
    need_trials(trials)?;
    if m < 2 {
        return Err(Error::InvalidParameters(format!("need m >= 2, got {m}")));
    }
    let query = OrderStatQuery::new(spec.clone(), i, m)?;
    if i > MAX_DOMINANCE_RANK {
        return Err(Error::BudgetExceeded(format!("rank {i} exceeds {MAX_DOMINANCE_RANK}")));
    }
    let half = m / 2;
    let copies = 4usize.pow(i as u32);
    let draws = copies as f64 * half as f64 * trials as f64;
    if draws > DRAW_BUDGET {
        return Err(Error::BudgetExceeded(format!("{draws:.3e} draws exceed {DRAW_BUDGET:.0e}")));
    }
    let alpha = spec.alpha_quantile(m);
    let mut buf = Vec::with_capacity(m);
    let mut lhs = Vec::with_capacity(trials);
    let mut rhs = Vec::with_capacity(trials);
    for _ in 0..trials {
        lhs.push(query.sample_with(rng, &mut buf));
        let best = (0..copies).map(|_| spec.sample_min(half, rng)).fold(alpha, f64::max);
        rhs.push(best);
    }
    let mut report = compare_samples(lhs, rhs, alpha);
    report.boundary_violation = Some(report.lhs_tail[0] - report.rhs_tail[0] - report.allowance);
    if m % 2 == 1 {
        report.notes.push(format!("odd m = {m}: copies use min of {half} draws"));
    }
    Ok(report)
}

/// Negative control: claims that the min of `m/2` draws is dominated by the
/// min of `m` draws, which is false for any non-degenerate spec. A sound
/// check reports failure.
pub fn check_falsified_dominance<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DominanceReport> {
    need_trials(trials)?;
    if m < 2 {
        return Err(Error::InvalidParameters(format!("need m >= 2, got {m}")));
    }
    let lhs: Vec<f64> = (0..trials).map(|_| spec.sample_min(m / 2, rng)).collect();
    let rhs: Vec<f64> = (0..trials).map(|_| spec.sample_min(m, rng)).collect();
    let lo = lhs.iter().chain(&rhs).copied().fold(f64::INFINITY, f64::min);
    Ok(compare_samples(lhs, rhs, lo))
}

/// `X ≼ r * (min of r draws)` for MHR specs.
pub fn check_mhr_scaling<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    r: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DominanceReport> {
    need_trials(trials)?;
    if !spec.is_mhr() {
        return Err(Error::NotMhr(spec.to_string()));
    }
    if r == 0 {
        return Err(Error::InvalidParameters("r must be >= 1".into()));
    }
    let lhs: Vec<f64> = (0..trials).map(|_| spec.sample(rng)).collect();
    let rhs: Vec<f64> = (0..trials).map(|_| r as f64 * spec.sample_min(r, rng)).collect();
    let lo = lhs.iter().chain(&rhs).copied().fold(f64::INFINITY, f64::min);
    Ok(compare_samples(lhs, rhs, lo))
}

/// Distribution of the random copy counts `K_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CopyCount {
    Constant(usize),
    /// Uniform on `lo..=hi`.
    UniformRange { lo: usize, hi: usize },
}

impl CopyCount {
    fn min(self) -> usize {
        match self {
            CopyCount::Constant(k) => k,
            CopyCount::UniformRange { lo, .. } => lo,
        }
    }

    fn mean(self) -> f64 {
        match self {
            CopyCount::Constant(k) => k as f64,
            CopyCount::UniformRange { lo, hi } => 0.5 * (lo + hi) as f64,
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            CopyCount::Constant(k) => k,
            CopyCount::UniformRange { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopiesQuery {
    pub k: CopyCount,
    pub w: DistributionSpec,
    pub c: f64,
    pub n: usize,
}

impl CopiesQuery {
    pub fn new(k: CopyCount, w: DistributionSpec, c: f64, n: usize) -> Result<Self> {
        if !(c > 1.0) {
            return Err(Error::InvalidParameters(format!("c must be > 1, got {c}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameters("n must be >= 1".into()));
        }
        if let CopyCount::UniformRange { lo, hi } = k {
            if lo > hi {
                return Err(Error::InvalidParameters(format!("empty copy range {lo}..={hi}")));
            }
        }
        if (k.min() as f64) < c {
            return Err(Error::InvalidParameters(format!("copy counts must be >= c = {c}, min is {}", k.min())));
        }
        Ok(CopiesQuery { k, w, c, n })
    }
}

/// Moment comparison `lhs <= rhs` within [`SE_SLACK`] combined standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub ratio: f64,
    pub pass: bool,
}

impl MomentReport {
    fn new(lhs: Estimate, rhs: Estimate) -> Self {
        let slack = SE_SLACK * (lhs.std_error.powi(2) + rhs.std_error.powi(2)).sqrt();
        MomentReport {
            lhs,
            rhs,
            ratio: lhs.mean / rhs.mean,
            pass: lhs.mean <= rhs.mean + slack + 1e-12 * rhs.mean.abs(),
        }
    }
}

/// `E[max_j max of K_j copies of W_j] <= c/(c-1) E[K] E[max_j W_j]`, both
/// sides by Monte Carlo (`E[K]` is exact).
pub fn check_random_copies<R: Rng + ?Sized>(q: &CopiesQuery, trials: usize, rng: &mut R) -> Result<MomentReport> {
    need_trials(trials)?;
    let mut lhs = Moments::default();
    let mut max_w = Moments::default();
    for _ in 0..trials {
        let x = (0..q.n)
            .map(|_| q.w.sample_max(q.k.sample(rng), rng))
            .fold(f64::NEG_INFINITY, f64::max);
        lhs.push(x);
        max_w.push(q.w.sample_max(q.n, rng));
    }
    let factor = q.c / (q.c - 1.0) * q.k.mean();
    let mw = max_w.estimate();
    let rhs = Estimate {
        mean: factor * mw.mean,
        std_error: factor * mw.std_error,
        samples: mw.samples,
    };
    Ok(MomentReport::new(lhs.estimate(), rhs))
}

/// Finite joint distribution of `(X_1, .., X_n)`: outcome vectors with
/// probabilities summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    outcomes: Vec<(Vec<f64>, f64)>,
}

impl JointDistribution {
    pub fn new(outcomes: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let n = outcomes.first().map(|o| o.0.len()).unwrap_or(0);
        if n == 0 || outcomes.iter().any(|o| o.0.len() != n) {
            return Err(Error::InvalidParameters("outcomes must be nonempty vectors of equal length".into()));
        }
        if outcomes.iter().any(|o| !(o.1 >= 0.0) || o.0.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameters("probabilities must be >= 0 and values finite".into()));
        }
        let total: f64 = outcomes.iter().map(|o| o.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameters(format!("probabilities sum to {total}")));
        }
        Ok(JointDistribution { outcomes })
    }

    /// Exactly one of `n` coordinates, chosen uniformly, equals 1.
    pub fn one_hot(n: usize) -> Result<Self> {
        let p = 1.0 / n as f64;
        Self::new(
            (0..n)
                .map(|j| ((0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect(), p))
                .collect(),
        )
    }

    /// All `n` coordinates equal one Bernoulli(`p`) draw.
    pub fn comonotone_bernoulli(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![(vec![1.0; n], p), (vec![0.0; n], 1.0 - p)])
    }

    /// Product of independent finite marginals, each a list of
    /// `(value, probability)`.
    pub fn independent(marginals: &[Vec<(f64, f64)>]) -> Result<Self> {
        let mut outcomes = vec![(Vec::new(), 1.0)];
        for marg in marginals {
            let mut next = Vec::with_capacity(outcomes.len() * marg.len());
            for (xs, p) in &outcomes {
                for &(v, q) in marg {
                    let mut ys: Vec<f64> = xs.clone();
                    ys.push(v);
                    next.push((ys, p * q));
                }
            }
            outcomes = next;
        }
        Self::new(outcomes)
    }

    pub fn dimension(&self) -> usize {
        self.outcomes[0].0.len()
    }

    pub fn expected_max(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|(xs, p)| p * xs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }

    /// Marginal of coordinate `j` as sorted `(value, probability)` pairs.
    pub fn marginal(&self, j: usize) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.outcomes.iter().map(|(xs, p)| (xs[j], *p)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (v, p) in pts {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => out.push((v, p)),
            }
        }
        out
    }

    /// `E[max_j Y_j]` for independent `Y_j` with the same marginals, from
    /// `Pr[max Y <= v] = prod_j Pr[Y_j <= v]`.
    pub fn expected_max_independent(&self) -> f64 {
        let margs: Vec<Vec<(f64, f64)>> = (0..self.dimension()).map(|j| self.marginal(j)).collect();
        let mut values: Vec<f64> = margs.iter().flatten().map(|p| p.0).collect();
        sort_f64(&mut values);
        values.dedup();
        let cdf = |v: f64| -> f64 {
            margs
                .iter()
                .map(|m| m.iter().filter(|p| p.0 <= v).map(|p| p.1).sum::<f64>().min(1.0))
                .product()
        };
        let mut prev = 0.0;
        let mut total = 0.0;
        for v in values {
            let g = cdf(v);
            total += v * (g - prev);
            prev = g;
        }
        total
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        let mut u: f64 = rng.random();
        for (xs, p) in &self.outcomes {
            if u < *p {
                return xs;
            }
            u -= p;
        }
        &self.outcomes.last().unwrap().0
    }
}

fn sample_marginal<R: Rng + ?Sized>(marg: &[(f64, f64)], rng: &mut R) -> f64 {
    let mut u: f64 = rng.random();
    for &(v, p) in marg {
        if u < p {
            return v;
        }
        u -= p;
    }
    marg.last().unwrap().0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapMode {
    /// Closed form; needs dimension at most 10.
    Exact,
    MonteCarlo { trials: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub mode: GapMode,
    pub correlated_max: Estimate,
    pub independent_max: Estimate,
    pub ratio: Estimate,
    /// `e / (e - 1)`.
    pub bound: f64,
    pub pass: bool,
}

pub fn correlation_gap_bound() -> f64 {
    let e = std::f64::consts::E;
    e / (e - 1.0)
}

/// Ratio of `E[max X]` under `joint` to `E[max Y]` under the product of its
/// marginals, compared with `e / (e - 1)`.
pub fn check_correlation_gap<R: Rng + ?Sized>(joint: &JointDistribution, mode: GapMode, rng: &mut R) -> Result<GapReport> {
    let bound = correlation_gap_bound();
    let (x, y, ratio) = match mode {
        GapMode::Exact => {
            if joint.dimension() > 10 {
                return Err(Error::InvalidParameters(format!(
                    "exact mode supports at most 10 coordinates, got {}",
                    joint.dimension()
                )));
            }
            let x = Estimate::exact(joint.expected_max());
            let y = Estimate::exact(joint.expected_max_independent());
            (x, y, Estimate::exact(x.mean / y.mean))
        }
        GapMode::MonteCarlo { trials } => {
            need_trials(trials)?;
            let margs: Vec<Vec<(f64, f64)>> = (0..joint.dimension()).map(|j| joint.marginal(j)).collect();
            let mut mx = Moments::default();
            let mut my = Moments::default();
            for _ in 0..trials {
                mx.push(joint.sample(rng).iter().copied().fold(f64::NEG_INFINITY, f64::max));
                my.push(margs.iter().map(|m| sample_marginal(m, rng)).fold(f64::NEG_INFINITY, f64::max));
            }
            let (x, y) = (mx.estimate(), my.estimate());
            (x, y, ratio_independent(x, y))
        }
    };
    let slack = if ratio.std_error.is_finite() { SE_SLACK * ratio.std_error } else { 0.0 };
    Ok(GapReport {
        mode,
        correlated_max: x,
        independent_max: y,
        ratio,
        bound,
        pass: ratio.mean <= bound + slack + 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptRatioReport {
    pub machines: usize,
    pub reduced_machines: usize,
    pub worst_best_ratio: Estimate,
    pub average_best_ratio: Estimate,
    /// `1 / delta^2`.
    pub bound: f64,
    pub pass: bool,
}

/// Ratios of both lower bounds on `round(delta m)` machines to the same
/// bounds on `m` machines for an MHR prior, compared with `1/delta^2`.
/// Numerator and denominator share coupled draws, so the ratios use the
/// paired standard error.
pub fn check_opt_ratio_mhr<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    n: usize,
    m: usize,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<OptRatioReport> {
    need_trials(trials)?;
    if !spec.is_mhr() {
        return Err(Error::NotMhr(spec.to_string()));
    }
    if !(delta > 0.0 && delta <= 1.0) || n == 0 {
        return Err(Error::InvalidParameters(format!("need 0 < delta <= 1 and n >= 1, got delta={delta}, n={n}")));
    }
    let reduced = reference_machines(m, delta)?;
    let specs = std::slice::from_ref(spec);
    let mut worst = Vec::with_capacity(trials);
    let mut avg = Vec::with_capacity(trials);
    for _ in 0..trials {
        let ((ws, as_), (wl, al)) = coupled_bounds(specs, n, reduced, m, rng);
        worst.push((ws, wl));
        avg.push((as_, al));
    }
    let bound = 1.0 / (delta * delta);
    let ok = |r: &Estimate| r.mean <= bound * (1.0 + 1e-9) + SE_SLACK * r.std_error;
    let (w, a) = (ratio_paired(&worst), ratio_paired(&avg));
    Ok(OptRatioReport {
        machines: m,
        reduced_machines: reduced,
        worst_best_ratio: w,
        average_best_ratio: a,
        bound,
        pass: ok(&w) && ok(&a),
    })
}

/// Relative tolerance of [`check_min_hazard_identity`].
pub const HAZARD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardReport {
    pub k: usize,
    pub t_grid: Vec<f64>,
    /// Points skipped because the minimum's survival vanishes there.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub pass: bool,
}

/// Default thresholds for the hazard identity: 50 points spanning the
/// spec's quantiles 0 to 0.999.
pub fn hazard_grid(spec: &DistributionSpec) -> Result<Vec<f64>> {
    let lo = spec
        .quantile(0.0)
        .ok_or_else(|| Error::NoClosedFormHazard(spec.to_string()))?;
    let hi = spec.quantile(0.999).unwrap();
    Ok((0..50).map(|k| lo + (hi - lo) * k as f64 / 49.0).collect())
}

/// Checks that the hazard of the minimum of `k` draws, computed as density
/// over survival of the minimum, equals `k` times the spec's hazard.
pub fn check_min_hazard_identity(spec: &DistributionSpec, k: usize, t_grid: &[f64]) -> Result<HazardReport> {
    if !spec.is_continuous() {
        return Err(Error::NoClosedFormHazard(spec.to_string()));
    }
    if k == 0 {
        return Err(Error::InvalidParameters("k must be >= 1".into()));
    }
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for &t in t_grid {
        let surv = spec.min_of_k_survival(k, t);
        let (Some(h), Some(f)) = (spec.hazard(t), spec.min_of_k_pdf(k, t)) else {
            skipped += 1;
            continue;
        };
        if surv <= 0.0 {
            skipped += 1;
            continue;
        }
        let implied = f / surv;
        let expected = k as f64 * h;
        let err = if implied == expected {
            0.0
        } else {
            (implied - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
        };
        worst = worst.max(err);
    }
    Ok(HazardReport {
        k,
        t_grid: t_grid.to_vec(),
        skipped,
        max_relative_error: worst,
        pass: worst <= HAZARD_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveReport {
    pub beta: f64,
    pub unscheduled: Estimate,
    /// `k m`.
    pub bound: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Runs the sieve with reserve `n/(k m) E[min of m]` on sampled i.i.d.
/// instances and compares the mean number of unscheduled jobs with `k m`.
pub fn check_sieve_unscheduled<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    n: usize,
    m: usize,
    k: f64,
    trials: usize,
    rng: &mut R,
) -> Result<SieveReport> {
    need_trials(trials)?;
    let reserve = derive_reserve(spec, n, m, 0.5, ReserveRule::Markov { k })?;
    sieve_unscheduled_with_beta(spec, n, m, reserve.beta, k, trials, rng).map(|mut r| {
        r.warnings = reserve.warnings;
        r
    })
}

/// [`check_sieve_unscheduled`] with an explicit reserve.
pub fn sieve_unscheduled_with_beta<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    n: usize,
    m: usize,
    beta: f64,
    k: f64,
    trials: usize,
    rng: &mut R,
) -> Result<SieveReport> {
    need_trials(trials)?;
    let config = MechanismConfig::sieve(beta);
    let mut count = Moments::default();
    for _ in 0..trials {
        let inst = Instance::sample_iid(spec, n, m, rng)?;
        count.push(allocate(&config, &inst)?.schedule.unscheduled_count() as f64);
    }
    let unscheduled = count.estimate();
    let bound = k * m as f64;
    Ok(SieveReport {
        beta,
        unscheduled,
        bound,
        pass: unscheduled.mean <= bound + SE_SLACK * unscheduled.std_error,
        warnings: Vec::new(),
    })
}

/// One line of a verification suite's JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRecord {
    pub lemma_id: String,
    pub parameters: serde_json::Value,
    pub trials: usize,
    pub statistics: serde_json::Value,
    pub band: Option<f64>,
    pub pass: bool,
}

impl LemmaRecord {
    pub fn new(
        lemma_id: impl Into<String>,
        parameters: serde_json::Value,
        trials: usize,
        statistics: &impl Serialize,
        band: Option<f64>,
        pass: bool,
    ) -> Result<Self> {
        Ok(LemmaRecord {
            lemma_id: lemma_id.into(),
            parameters,
            trials,
            statistics: serde_json::to_value(statistics)?,
            band,
            pass,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn exp1() -> DistributionSpec {
        DistributionSpec::exponential(1.0).unwrap()
    }

    #[test]
    fn grid_covers_alpha_and_has_enough_points() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let g = dominance_grid(0.25, &xs);
        assert_eq!(g[0], 0.25);
        assert!(g.len() >= 50);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(*g.last().unwrap() >= 0.99);
    }

    #[test]
    fn step_grid_includes_atoms() {
        let xs = vec![1.0, 1.0, 10.0, 10.0];
        let g = dominance_grid(1.0, &xs);
        assert!(g.contains(&1.0) && g.contains(&10.0));
    }

    #[test]
    fn rank_one_dominance_passes_with_margin() {
        let r = check_order_stat_dominance(&exp1(), 8, 1, 20_000, &mut rng(1)).unwrap();
        assert!(r.pass, "{}", r.max_violation);
        assert!(r.band > 0.0);
        assert!(r.boundary_violation.is_some());
    }

    #[test]
    fn odd_m_is_annotated() {
        let r = check_order_stat_dominance(&exp1(), 9, 1, 2_000, &mut rng(2)).unwrap();
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn dominance_guards() {
        assert!(matches!(
            check_order_stat_dominance(&exp1(), 16, 7, 10, &mut rng(3)),
            Err(Error::BudgetExceeded(_))
        ));
        assert!(matches!(
            check_order_stat_dominance(&exp1(), 4, 5, 10, &mut rng(3)),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(check_order_stat_dominance(&exp1(), 16, 6, 1_000_000, &mut rng(3)).is_err());
    }

    #[test]
    fn negative_control_fails() {
        let r = check_falsified_dominance(&exp1(), 16, 10_000, &mut rng(4)).unwrap();
        assert!(!r.pass);
        // tails e^{-8t} - e^{-16t} peak at 1/4
        assert!(r.max_violation > 0.2);
    }

    #[test]
    fn mhr_scaling_rejects_heavy_tails() {
        let p = DistributionSpec::pareto(2.0, 1.0).unwrap();
        assert!(matches!(check_mhr_scaling(&p, 2, 10, &mut rng(5)), Err(Error::NotMhr(_))));
    }

    #[test]
    fn mhr_scaling_identity_for_r_one() {
        let u = DistributionSpec::uniform(0.0, 1.0).unwrap();
        let r = check_mhr_scaling(&u, 1, 5_000, &mut rng(6)).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn copies_constant_case_is_exact() {
        let w = DistributionSpec::two_point(3.0, 4.0, 0.0).unwrap();
        let q = CopiesQuery::new(CopyCount::Constant(2), w, 2.0, 3).unwrap();
        let r = check_random_copies(&q, 100, &mut rng(7)).unwrap();
        assert_eq!(r.lhs.mean, 3.0);
        assert_eq!(r.rhs.mean, 12.0);
        assert!(r.pass);
    }

    #[test]
    fn copies_query_validation() {
        assert!(CopiesQuery::new(CopyCount::Constant(1), exp1(), 2.0, 1).is_err());
        assert!(CopiesQuery::new(CopyCount::Constant(2), exp1(), 1.0, 1).is_err());
        assert!(CopiesQuery::new(CopyCount::UniformRange { lo: 3, hi: 2 }, exp1(), 2.0, 1).is_err());
        assert!(CopiesQuery::new(CopyCount::Constant(2), exp1(), 2.0, 0).is_err());
    }

    #[test]
    fn correlation_gap_examples() {
        let tight = JointDistribution::one_hot(5).unwrap();
        let r = check_correlation_gap(&tight, GapMode::Exact, &mut rng(8)).unwrap();
        let y = 1.0 - 0.8f64.powi(5);
        assert!((r.independent_max.mean - y).abs() < 1e-12);
        assert!((r.ratio.mean - 1.0 / y).abs() < 1e-12);
        assert!((r.ratio.mean - 1.487387).abs() < 1e-6);
        assert!(r.pass);

        let co = JointDistribution::comonotone_bernoulli(2, 0.5).unwrap();
        let r = check_correlation_gap(&co, GapMode::Exact, &mut rng(8)).unwrap();
        assert!((r.ratio.mean - 2.0 / 3.0).abs() < 1e-12);

        let ind = JointDistribution::independent(&[vec![(0.0, 0.3), (2.0, 0.7)], vec![(1.0, 0.5), (3.0, 0.5)]]).unwrap();
        let r = check_correlation_gap(&ind, GapMode::Exact, &mut rng(8)).unwrap();
        assert!((r.ratio.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_gap_modes_agree() {
        let tight = JointDistribution::one_hot(5).unwrap();
        let exact = check_correlation_gap(&tight, GapMode::Exact, &mut rng(9)).unwrap();
        let mc = check_correlation_gap(&tight, GapMode::MonteCarlo { trials: 200_000 }, &mut rng(9)).unwrap();
        assert!((mc.ratio.mean - exact.ratio.mean).abs() <= 3.0 * mc.ratio.std_error);
    }

    #[test]
    fn joint_validation() {
        assert!(JointDistribution::new(vec![(vec![1.0], 0.5)]).is_err());
        assert!(JointDistribution::new(vec![(vec![1.0], 0.5), (vec![1.0, 2.0], 0.5)]).is_err());
        assert!(JointDistribution::new(vec![]).is_err());
    }

    #[test]
    fn opt_ratio_exponential_is_scale_exact() {
        let r = check_opt_ratio_mhr(&exp1(), 8, 8, 0.5, 2_000, &mut rng(10)).unwrap();
        assert!((r.worst_best_ratio.mean - 2.0).abs() < 1e-9);
        assert!((r.average_best_ratio.mean - 4.0).abs() < 1e-9);
        assert!(r.pass);
        let r = check_opt_ratio_mhr(&exp1(), 8, 8, 1.0, 100, &mut rng(10)).unwrap();
        assert_eq!(r.worst_best_ratio.mean, 1.0);
        assert_eq!(r.average_best_ratio.mean, 1.0);
        let p = DistributionSpec::pareto(3.0, 1.0).unwrap();
        assert!(check_opt_ratio_mhr(&p, 8, 8, 0.5, 10, &mut rng(10)).is_err());
    }

    #[test]
    fn hazard_identity_examples() {
        let u = DistributionSpec::uniform(0.0, 1.0).unwrap();
        let r = check_min_hazard_identity(&u, 3, &[0.5]).unwrap();
        assert!(r.pass && r.max_relative_error <= 1e-10);
        // implied hazard at 0.5: 3 (1/2)^2 / (1/2)^3 = 6
        assert!((u.min_of_k_pdf(3, 0.5).unwrap() / u.min_of_k_survival(3, 0.5) - 6.0).abs() < 1e-12);
        for spec in [exp1(), DistributionSpec::exponential(2.5).unwrap(), u.clone()] {
            for k in [1, 2, 7] {
                let grid = hazard_grid(&spec).unwrap();
                assert!(check_min_hazard_identity(&spec, k, &grid).unwrap().pass);
            }
        }
        let tp = DistributionSpec::two_point(1.0, 2.0, 0.5).unwrap();
        assert!(matches!(check_min_hazard_identity(&tp, 2, &[1.0]), Err(Error::NoClosedFormHazard(_))));
    }

    #[test]
    fn sieve_count_zero_with_infinite_reserve() {
        let r = sieve_unscheduled_with_beta(&exp1(), 20, 4, f64::INFINITY, 1.0, 50, &mut rng(11)).unwrap();
        assert_eq!(r.unscheduled.mean, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn record_serializes() {
        let rep = MomentReport::new(Estimate::exact(1.0), Estimate::exact(2.0));
        let rec = LemmaRecord::new("random-copies", serde_json::json!({"n": 1}), 10, &rep, None, rep.pass).unwrap();
        let text = serde_json::to_string(&rec).unwrap();
        let back: LemmaRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
    }
}
