//! Monte Carlo estimators of the two lower bounds on first-best makespan:
//! the expected worst best runtime `E[max_j min of m' draws]` and the
//! expected average best runtime `E[sum_j min of m' draws] / m'`.
//!
//! `specs` is either a single spec shared by all `n` jobs or one spec per job.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distkit::DistributionSpec;
use crate::instance::Instance;
use crate::stats::Moments;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    WorstBest,
    AverageBest,
    MaxOfBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptEstimate {
    pub kind: BoundKind,
    pub machines: usize,
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

fn job_spec(specs: &[DistributionSpec], j: usize) -> &DistributionSpec {
    if specs.len() == 1 {
        &specs[0]
    } else {
        &specs[j]
    }
}

fn check_args(specs: &[DistributionSpec], n: usize, machines: usize, trials: usize) -> Result<()> {
    if specs.is_empty() || !(specs.len() == 1 || specs.len() == n) {
        return Err(Error::InvalidParameters(format!(
            "need one spec or {n} specs, got {}",
            specs.len()
        )));
    }
    if n == 0 || machines == 0 || trials == 0 {
        return Err(Error::InvalidParameters("n, machines and trials must be positive".into()));
    }
    Ok(())
}

/// One trial: `(max_j B_j, sum_j B_j / machines)` with `B_j` the best of
/// `machines` fresh draws for job `j`.
pub fn sample_bounds<R: Rng + ?Sized>(specs: &[DistributionSpec], n: usize, machines: usize, rng: &mut R) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut sum = 0.0;
    for j in 0..n {
        let b = job_spec(specs, j).sample_min(machines, rng);
        worst = worst.max(b);
        sum += b;
    }
    (worst, sum / machines as f64)
}

/// Bounds on `small` and on `large` machines from coupled draws: continuous
/// families share one uniform per job through the inverse survival function,
/// step CDFs take the minimum over the first `small` of `large` draws.
pub fn coupled_bounds<R: Rng + ?Sized>(
    specs: &[DistributionSpec],
    n: usize,
    small: usize,
    large: usize,
    rng: &mut R,
) -> ((f64, f64), (f64, f64)) {
    let (mut ws, mut ss, mut wl, mut sl) = (0.0f64, 0.0, 0.0f64, 0.0);
    for j in 0..n {
        let spec = job_spec(specs, j);
        let (bs, bl) = if spec.is_continuous() {
            let log_s = (-rng.random::<f64>()).ln_1p();
            let inv = |k: usize| spec.inverse_survival((log_s / k as f64).exp()).unwrap();
            (inv(small), inv(large))
        } else {
            let draws: Vec<f64> = (0..small.max(large)).map(|_| spec.sample(rng)).collect();
            let min_of = |k: usize| draws[..k].iter().copied().fold(f64::INFINITY, f64::min);
            (min_of(small), min_of(large))
        };
        ws = ws.max(bs);
        ss += bs;
        wl = wl.max(bl);
        sl += bl;
    }
    ((ws, ss / small as f64), (wl, sl / large as f64))
}

/// The same pair computed from a realized instance restricted to `machines`.
pub fn instance_bounds(inst: &Instance, machines: &[usize]) -> Result<(f64, f64)> {
    let mut worst = 0.0f64;
    let mut sum = 0.0;
    for j in 0..inst.jobs() {
        let b = inst.best_runtime(j, machines)?;
        worst = worst.max(b);
        sum += b;
    }
    Ok((worst, sum / machines.len() as f64))
}

/// Both bounds from shared draws.
pub fn opt_bounds<R: Rng + ?Sized>(
    specs: &[DistributionSpec],
    n: usize,
    machines: usize,
    trials: usize,
    rng: &mut R,
) -> Result<(OptEstimate, OptEstimate)> {
    check_args(specs, n, machines, trials)?;
    let mut worst = Moments::default();
    let mut avg = Moments::default();
    for _ in 0..trials {
        let (w, a) = sample_bounds(specs, n, machines, rng);
        worst.push(w);
        avg.push(a);
    }
    let pack = |kind, m: Moments| {
        let e = m.estimate();
        OptEstimate {
            kind,
            machines,
            mean: e.mean,
            std_error: e.std_error,
            trials,
        }
    };
    Ok((pack(BoundKind::WorstBest, worst), pack(BoundKind::AverageBest, avg)))
}

pub fn expected_worst_best<R: Rng + ?Sized>(
    specs: &[DistributionSpec],
    n: usize,
    machines: usize,
    trials: usize,
    rng: &mut R,
) -> Result<OptEstimate> {
    Ok(opt_bounds(specs, n, machines, trials, rng)?.0)
}

pub fn expected_average_best<R: Rng + ?Sized>(
    specs: &[DistributionSpec],
    n: usize,
    machines: usize,
    trials: usize,
    rng: &mut R,
) -> Result<OptEstimate> {
    Ok(opt_bounds(specs, n, machines, trials, rng)?.1)
}

/// Machines used by the reduced reference: `round(delta m)`. Fails when
/// `delta m < 1`.
pub fn reference_machines(m: usize, delta: f64) -> Result<usize> {
    let x = delta * m as f64;
    if !(x >= 1.0 - 1e-9) {
        return Err(Error::ReferenceTooSmall(x));
    }
    Ok((x.round() as usize).max(1))
}

/// The larger of the two bounds on `round(delta m)` machines.
pub fn opt_reference<R: Rng + ?Sized>(
    specs: &[DistributionSpec],
    n: usize,
    m: usize,
    delta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<OptEstimate> {
    let machines = reference_machines(m, delta)?;
    let (w, a) = opt_bounds(specs, n, machines, trials, rng)?;
    let pick = if w.mean >= a.mean { w } else { a };
    Ok(OptEstimate {
        kind: BoundKind::MaxOfBoth,
        ..pick
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp1() -> Vec<DistributionSpec> {
        vec![DistributionSpec::exponential(1.0).unwrap()]
    }

    fn harmonic(n: usize) -> f64 {
        (1..=n).map(|i| 1.0 / i as f64).sum()
    }

    fn within(est: &OptEstimate, expected: f64, k: f64) -> bool {
        (est.mean - expected).abs() <= k * est.std_error
    }

    #[test]
    fn single_job_collapses_to_expected_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = expected_worst_best(&exp1(), 1, 4, 200_000, &mut rng).unwrap();
        assert!(within(&e, 0.25, 4.0), "{e:?}");
        let e = expected_average_best(&exp1(), 1, 2, 200_000, &mut rng).unwrap();
        assert!(within(&e, 0.25, 4.0), "{e:?}");
    }

    #[test]
    fn exponential_worst_best_is_harmonic() {
        // max of n Exp(m') draws has mean H_n / m'
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = expected_worst_best(&exp1(), 4, 4, 200_000, &mut rng).unwrap();
        assert!((harmonic(4) / 4.0 - 0.52083).abs() < 1e-5);
        assert!(within(&e, harmonic(4) / 4.0, 4.0), "{e:?}");
    }

    #[test]
    fn degenerate_all_high() {
        let spec = vec![DistributionSpec::two_point(1.0, 10.0, 1.0).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = expected_worst_best(&spec, 5, 3, 100, &mut rng).unwrap();
        assert_eq!((w.mean, w.std_error), (10.0, 0.0));
        let a = expected_average_best(&spec, 5, 3, 100, &mut rng).unwrap();
        assert!((a.mean - 50.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.std_error, 0.0);
    }

    #[test]
    fn average_best_is_linear_in_jobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a1 = expected_average_best(&exp1(), 3, 5, 100_000, &mut rng).unwrap();
        let a2 = expected_average_best(&exp1(), 6, 5, 100_000, &mut rng).unwrap();
        let se = (4.0 * a1.std_error.powi(2) + a2.std_error.powi(2)).sqrt();
        assert!((a2.mean - 2.0 * a1.mean).abs() < 4.0 * se);
        // exact: n / (m' * m')
        assert!(within(&a1, 3.0 / 25.0, 4.0));
    }

    #[test]
    fn reference_rounding() {
        assert_eq!(reference_machines(64, 0.5).unwrap(), 32);
        assert_eq!(reference_machines(32, 1.0 / 3.0).unwrap(), 11);
        assert_eq!(reference_machines(3, 1.0 / 3.0).unwrap(), 1);
        assert!(reference_machines(1, 0.5).is_err());
    }

    #[test]
    fn reference_half_for_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = opt_reference(&exp1(), 4, 4, 0.5, 200_000, &mut rng).unwrap();
        assert_eq!(r.machines, 2);
        assert_eq!(r.kind, BoundKind::MaxOfBoth);
        // worst-best H_4 / 2 exceeds average-best 4 / 4 = 1
        assert!(within(&r, harmonic(4) / 2.0, 4.0), "{r:?}");
        let full = opt_reference(&exp1(), 4, 4, 1.0, 10, &mut rng).unwrap();
        assert_eq!(full.machines, 4);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(expected_worst_best(&[], 2, 2, 10, &mut rng).is_err());
        assert!(expected_worst_best(&exp1(), 2, 0, 10, &mut rng).is_err());
        assert!(expected_worst_best(&exp1(), 2, 2, 0, &mut rng).is_err());
        let two = vec![exp1()[0].clone(); 2];
        assert!(expected_worst_best(&two, 3, 2, 10, &mut rng).is_err());
        assert!(expected_worst_best(&two, 2, 2, 10, &mut rng).is_ok());
    }

    #[test]
    fn instance_bounds_restrict_columns() {
        let inst = Instance::from_rows(&[vec![3.0, 1.0, 2.0], vec![5.0, 4.0, 0.5]]).unwrap();
        assert_eq!(instance_bounds(&inst, &[0, 1]).unwrap(), (4.0, 2.5));
        assert_eq!(instance_bounds(&inst, &[0, 1, 2]).unwrap(), (1.0, 0.5));
    }
}
