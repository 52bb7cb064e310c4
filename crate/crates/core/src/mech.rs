//! The four truthful scheduling mechanisms, their Clarke payments, the
//! last-entry diagnostic and an incentive-compatibility auditor.
//!
//! Every mechanism is VCG over a restricted range of schedules:
//!
//! | kind                     | range                                            |
//! |--------------------------|--------------------------------------------------|
//! | minimum work             | all schedules                                    |
//! | bounded overload         | at most `ceil(c n / m)` jobs per machine         |
//! | sieve                    | all schedules plus a dummy machine of runtime β  |
//! | sieve + bounded overload | sieve on the first machines, bounded overload on |
//! |                          | the rest for the jobs the sieve left unscheduled |
//!
//! Payments use the Clarke pivot with the paid machine removed from its
//! range. In the combined mechanism each machine is paid by the stage it
//! takes part in.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::{solve_min_work, RangeConstraint, Schedule};
use crate::distkit::DistributionSpec;
use crate::instance::Instance;
use crate::lemmalab::{compare_to_exact, DominanceReport};
use crate::{ceil_count, trial_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    MinimumWork,
    BoundedOverload,
    Sieve,
    SieveBoundedOverload,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 4] = [
        MechanismKind::MinimumWork,
        MechanismKind::BoundedOverload,
        MechanismKind::Sieve,
        MechanismKind::SieveBoundedOverload,
    ];

    pub fn uses_reserve(self) -> bool {
        matches!(self, MechanismKind::Sieve | MechanismKind::SieveBoundedOverload)
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::MinimumWork => "minimum-work",
            MechanismKind::BoundedOverload => "bounded-overload",
            MechanismKind::Sieve => "sieve",
            MechanismKind::SieveBoundedOverload => "sieve-bounded-overload",
        })
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimum-work" | "min-work" | "vcg" => Ok(MechanismKind::MinimumWork),
            "bounded-overload" | "overload" => Ok(MechanismKind::BoundedOverload),
            "sieve" | "reserve" => Ok(MechanismKind::Sieve),
            "sieve-bounded-overload" | "sieve-overload" => Ok(MechanismKind::SieveBoundedOverload),
            _ => Err(Error::Config(format!("unknown mechanism `{s}`"))),
        }
    }
}

/// Mechanism parameters. `beta` must be set for the sieve kinds before
/// running; [`derive_reserve`] computes it from the job-size distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    pub c: f64,
    pub beta: Option<f64>,
    pub delta: f64,
    pub k: Option<f64>,
}

impl MechanismConfig {
    pub fn new(kind: MechanismKind) -> Self {
        MechanismConfig {
            kind,
            c: 7.0,
            beta: None,
            delta: 2.0 / 3.0,
            k: None,
        }
    }

    pub fn minimum_work() -> Self {
        Self::new(MechanismKind::MinimumWork)
    }

    pub fn bounded_overload(c: f64) -> Self {
        Self::new(MechanismKind::BoundedOverload).with_c(c)
    }

    pub fn sieve(beta: f64) -> Self {
        Self::new(MechanismKind::Sieve).with_beta(beta)
    }

    pub fn sieve_bounded_overload(c: f64, beta: f64, delta: f64) -> Self {
        Self::new(MechanismKind::SieveBoundedOverload)
            .with_c(c)
            .with_beta(beta)
            .with_delta(delta)
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = Some(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameters(msg));
        if !(self.c > 1.0 && self.c.is_finite()) {
            return bad(format!("overload c must be > 1, got {}", self.c));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if let Some(b) = self.beta {
            if b.is_nan() || b < 0.0 {
                return bad(format!("beta must be >= 0, got {b}"));
            }
        }
        if let Some(k) = self.k {
            if !(k > 0.0) {
                return bad(format!("k must be > 0, got {k}"));
            }
        }
        if self.kind.uses_reserve() && self.beta.is_none() {
            return bad(format!("{} needs a reserve beta", self.kind));
        }
        Ok(())
    }

    /// Fills in `beta` from the [`ReserveRule::Markov`] tuning when only `k` is set.
    pub fn resolve_beta(mut self, spec: &DistributionSpec, n: usize, m: usize) -> Result<Self> {
        if self.kind.uses_reserve() && self.beta.is_none() {
            if let Some(k) = self.k {
                self.beta = Some(derive_reserve(spec, n, m, self.delta, ReserveRule::Markov { k })?.beta);
            }
        }
        Ok(self)
    }
}

/// Which stage scheduled a job in the combined mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Sieve,
    Overload,
    Unscheduled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payments {
    NotComputed,
    Computed(Vec<f64>),
    /// The Clarke pivot for `machine` has no feasible schedule.
    Infeasible { machine: usize },
}

impl Payments {
    pub fn as_slice(&self) -> Result<&[f64]> {
        match self {
            Payments::Computed(p) => Ok(p),
            Payments::Infeasible { machine } => Err(Error::PivotInfeasible { machine: *machine }),
            Payments::NotComputed => Err(Error::InvalidParameters("payments were not computed".into())),
        }
    }
}

/// How a machine's pivot is formed.
#[derive(Debug, Clone, PartialEq)]
enum PaymentPlan {
    Single(RangeConstraint),
    Staged {
        split: usize,
        beta: f64,
        stage2_jobs: Vec<usize>,
        stage2_cap: usize,
        stage1_objective: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub kind: MechanismKind,
    pub schedule: Schedule,
    pub payments: Payments,
    /// Rank of the assigned machine in the job's preference order over all
    /// machines; `None` when unscheduled.
    pub ranks: Vec<Option<usize>>,
    /// Per-job stage; only filled for the combined mechanism.
    pub stages: Vec<Stage>,
    /// Makespans of the sieve and overload stages (combined mechanism).
    pub stage_makespans: Option<(f64, f64)>,
    plan: PaymentPlan,
}

impl Outcome {
    pub fn payments(&self) -> Result<&[f64]> {
        self.payments.as_slice()
    }

    /// Payment to `machine` minus the true work it performs.
    pub fn utility(&self, truth: &Instance, machine: usize) -> Result<f64> {
        let pay = self.payments()?[machine];
        Ok(pay - true_work(truth, &self.schedule, machine))
    }
}

fn true_work(truth: &Instance, schedule: &Schedule, machine: usize) -> f64 {
    schedule
        .assignment
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Some(machine))
        .map(|(j, _)| truth.runtime(j, machine))
        .sum()
}

/// Per-machine job cap `ceil(c n / m)` of bounded overload.
pub fn overload_cap(c: f64, n: usize, m: usize) -> usize {
    ceil_count(c * n as f64 / m as f64).max(1)
}

/// Machines in the sieve stage: `ceil((1 - delta) m)`.
pub fn sieve_partition(m: usize, delta: f64) -> Result<usize> {
    let split = ceil_count((1.0 - delta) * m as f64).max(1);
    if split >= m {
        return Err(Error::InvalidParameters(format!(
            "overload stage is empty after rounding (m={m}, delta={delta})"
        )));
    }
    Ok(split)
}

fn ranks_of(inst: &Instance, schedule: &Schedule) -> Vec<Option<usize>> {
    schedule
        .assignment
        .iter()
        .enumerate()
        .map(|(j, a)| a.map(|i| inst.rank_of(j, i)))
        .collect()
}

/// Computes the schedule of a mechanism without payments.
pub fn allocate(config: &MechanismConfig, inst: &Instance) -> Result<Outcome> {
    config.validate()?;
    let (n, m) = (inst.jobs(), inst.machines());
    let single = |rc: RangeConstraint| -> Result<Outcome> {
        let schedule = solve_min_work(inst, &rc)?;
        Ok(Outcome {
            kind: config.kind,
            ranks: ranks_of(inst, &schedule),
            schedule,
            payments: Payments::NotComputed,
            stages: Vec::new(),
            stage_makespans: None,
            plan: PaymentPlan::Single(rc),
        })
    };
    match config.kind {
        MechanismKind::MinimumWork => single(RangeConstraint::none()),
        MechanismKind::BoundedOverload => single(RangeConstraint::none().with_cap(overload_cap(config.c, n, m))),
        MechanismKind::Sieve => single(RangeConstraint::none().with_reserve(config.beta.unwrap())),
        MechanismKind::SieveBoundedOverload => staged(config, inst),
    }
}

fn staged(config: &MechanismConfig, inst: &Instance) -> Result<Outcome> {
    let m = inst.machines();
    let beta = config.beta.unwrap();
    let split = sieve_partition(m, config.delta)?;
    let first: Vec<usize> = (0..split).collect();
    let second: Vec<usize> = (split..m).collect();

    let sieve_inst = inst.select_machines(&first)?;
    let sieve = solve_min_work(&sieve_inst, &RangeConstraint::none().with_reserve(beta))?;
    let leftover = sieve.unscheduled();

    let mut assignment = sieve.assignment.clone();
    let mut stages: Vec<Stage> = assignment
        .iter()
        .map(|a| if a.is_some() { Stage::Sieve } else { Stage::Unscheduled })
        .collect();
    let stage2_cap = overload_cap(config.c, leftover.len(), second.len());
    let mut stage2_makespan = 0.0;
    if !leftover.is_empty() {
        let sub = inst.select_jobs(&leftover)?.select_machines(&second)?;
        let overload = solve_min_work(&sub, &RangeConstraint::none().with_cap(stage2_cap))?;
        stage2_makespan = overload.makespan;
        for (local, &j) in leftover.iter().enumerate() {
            let i = overload.assignment[local].expect("bounded overload schedules every job");
            assignment[j] = Some(second[i]);
            stages[j] = Stage::Overload;
        }
    }
    let schedule = Schedule::from_assignment(inst, assignment, None);
    Ok(Outcome {
        kind: config.kind,
        ranks: ranks_of(inst, &schedule),
        stage_makespans: Some((sieve.makespan, stage2_makespan)),
        schedule,
        payments: Payments::NotComputed,
        stages,
        plan: PaymentPlan::Staged {
            split,
            beta,
            stage2_jobs: leftover,
            stage2_cap,
            stage1_objective: sieve.objective,
        },
    })
}

fn pivot(inst: &Instance, rc: &RangeConstraint, local: usize, machine: usize) -> Result<f64> {
    match solve_min_work(inst, &rc.clone().excluding(local)) {
        Ok(s) => Ok(s.objective),
        Err(Error::InfeasibleCapacity { .. } | Error::NoMachines) => Err(Error::PivotInfeasible { machine }),
        Err(e) => Err(e),
    }
}

/// Clarke payment to one machine: the optimum of its range without it,
/// minus the cost everyone else bears in the chosen outcome.
pub fn clarke_payment(inst: &Instance, outcome: &Outcome, machine: usize) -> Result<f64> {
    let works = &outcome.schedule.works;
    match &outcome.plan {
        PaymentPlan::Single(rc) => {
            let others = outcome.schedule.objective - works[machine];
            Ok(pivot(inst, rc, machine, machine)? - others)
        }
        PaymentPlan::Staged {
            split,
            beta,
            stage2_jobs,
            stage2_cap,
            stage1_objective,
        } => {
            let m = inst.machines();
            if machine < *split {
                let first: Vec<usize> = (0..*split).collect();
                let sub = inst.select_machines(&first)?;
                let rc = RangeConstraint::none().with_reserve(*beta);
                let others = stage1_objective - works[machine];
                Ok(pivot(&sub, &rc, machine, machine)? - others)
            } else {
                if stage2_jobs.is_empty() {
                    return Ok(0.0);
                }
                let second: Vec<usize> = (*split..m).collect();
                let sub = inst.select_jobs(stage2_jobs)?.select_machines(&second)?;
                let rc = RangeConstraint::none().with_cap(*stage2_cap);
                let stage_work: f64 = second.iter().map(|&i| works[i]).sum();
                let others = stage_work - works[machine];
                Ok(pivot(&sub, &rc, machine - split, machine)? - others)
            }
        }
    }
}

/// Schedule plus payments for every machine.
pub fn run(config: &MechanismConfig, inst: &Instance) -> Result<Outcome> {
    let mut outcome = allocate(config, inst)?;
    let mut payments = Vec::with_capacity(inst.machines());
    for i in 0..inst.machines() {
        match clarke_payment(inst, &outcome, i) {
            Ok(p) => payments.push(p),
            Err(Error::PivotInfeasible { machine }) => {
                outcome.payments = Payments::Infeasible { machine };
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        }
    }
    outcome.payments = Payments::Computed(payments);
    Ok(outcome)
}

pub fn run_minimum_work(inst: &Instance) -> Result<Outcome> {
    run(&MechanismConfig::minimum_work(), inst)
}

pub fn run_bounded_overload(inst: &Instance, c: f64) -> Result<Outcome> {
    run(&MechanismConfig::bounded_overload(c), inst)
}

pub fn run_sieve(inst: &Instance, beta: f64) -> Result<Outcome> {
    run(&MechanismConfig::sieve(beta), inst)
}

pub fn run_sieve_bounded_overload(inst: &Instance, c: f64, beta: f64, delta: f64) -> Result<Outcome> {
    run(&MechanismConfig::sieve_bounded_overload(c, beta, delta), inst)
}

/// Reserve tunings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReserveRule {
    /// `n / (m ln m) * E[min of (delta/2) m]`
    LogRatio,
    /// `2n / (m ln m) * E[min of (delta/2) m]`, meant for `n >= m ln m`
    DoubleLogRatio,
    /// `n / (k m) * E[min of m]`; at most `k m` jobs go unscheduled on average.
    Markov { k: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reserve {
    pub beta: f64,
    /// The order statistic `E[min of draws]` the reserve scales.
    pub tau: f64,
    pub draws: usize,
    pub warnings: Vec<String>,
}

/// Partition parameter `1 / ln ln m` used with the [`ReserveRule::DoubleLogRatio`] tuning.
pub fn loglog_delta(m: usize) -> f64 {
    1.0 / (m as f64).ln().ln()
}

pub fn derive_reserve(spec: &DistributionSpec, n: usize, m: usize, delta: f64, rule: ReserveRule) -> Result<Reserve> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameters("n and m must be positive".into()));
    }
    let (nf, mf) = (n as f64, m as f64);
    let mut warnings = Vec::new();
    let (scale, draws) = match rule {
        ReserveRule::LogRatio | ReserveRule::DoubleLogRatio => {
            if m < 2 {
                return Err(Error::InvalidParameters("ln m vanishes for m = 1".into()));
            }
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidParameters(format!("delta must lie in (0, 1), got {delta}")));
            }
            let draws = (delta / 2.0 * mf).round() as usize;
            if draws < 1 {
                return Err(Error::InvalidParameters(format!(
                    "(delta/2) m = {} rounds to zero draws",
                    delta / 2.0 * mf
                )));
            }
            let factor = if rule == ReserveRule::DoubleLogRatio {
                if nf < mf * mf.ln() {
                    warnings.push(format!("n = {n} is below m ln m = {:.2}", mf * mf.ln()));
                }
                2.0
            } else {
                1.0
            };
            (factor * nf / (mf * mf.ln()), draws)
        }
        ReserveRule::Markov { k } => {
            if !(k > 0.0) {
                return Err(Error::InvalidParameters(format!("k must be > 0, got {k}")));
            }
            if k >= mf.ln() {
                warnings.push(format!("k = {k} is not below ln m = {:.3}", mf.ln()));
            }
            (nf / (k * mf), m)
        }
    };
    let tau = spec.expected_min(draws)?.mean;
    Ok(Reserve {
        beta: scale * tau,
        tau,
        draws,
        warnings,
    })
}

/// Result of the last-entry procedure for one job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastEntry {
    pub rank: usize,
    pub machine: usize,
    pub runtime: f64,
}

/// Schedules every job except `job` by bounded overload (cap computed from
/// the full instance), then places `job` on its most preferred machine with
/// fewer than `cap` jobs.
pub fn last_entry(inst: &Instance, c: f64, job: usize) -> Result<LastEntry> {
    let (n, m) = (inst.jobs(), inst.machines());
    if !(c > 1.0) {
        return Err(Error::InvalidParameters(format!("overload c must be > 1, got {c}")));
    }
    last_entry_with_cap(inst, overload_cap(c, n, m), job)
}

/// [`last_entry`] with an explicit per-machine cap.
pub fn last_entry_with_cap(inst: &Instance, cap: usize, job: usize) -> Result<LastEntry> {
    let (n, m) = (inst.jobs(), inst.machines());
    if cap == 0 || cap.saturating_mul(m) < n {
        return Err(Error::InfeasibleCapacity { cap, machines: m, jobs: n });
    }
    let mut loads = vec![0usize; m];
    if n > 1 {
        let others: Vec<usize> = (0..n).filter(|&j| j != job).collect();
        let sub = inst.select_jobs(&others)?;
        let s = solve_min_work(&sub, &RangeConstraint::none().with_cap(cap))?;
        loads = s.loads;
    }
    let order = inst.preference_order(job);
    let (pos, &machine) = order
        .iter()
        .enumerate()
        .find(|(_, &i)| loads[i] < cap)
        .expect("n - 1 jobs cannot fill every machine");
    Ok(LastEntry {
        rank: pos + 1,
        machine,
        runtime: inst.runtime(job, machine),
    })
}

pub fn last_entry_rank(inst: &Instance, c: f64, job: usize) -> Result<usize> {
    Ok(last_entry(inst, c, job)?.rank)
}

/// `ceil(m / c)`, the largest rank last entry can produce.
pub fn rank_cap(c: f64, m: usize) -> usize {
    ceil_count(m as f64 / c).max(1)
}

/// Probability mass function of the capped geometric rank: `pmf[i - 1]` is
/// `Pr[R = i]` for `i = 1..=ceil(m/c)`.
pub fn geometric_rank_pmf(c: f64, m: usize) -> Vec<f64> {
    let top = rank_cap(c, m);
    let mut pmf: Vec<f64> = (1..top).map(|i| (1.0 - 1.0 / c) / c.powi(i as i32 - 1)).collect();
    let rest = 1.0 - pmf.iter().sum::<f64>();
    pmf.push(rest.max(0.0));
    pmf
}

/// Draw of the capped geometric rank with failure rate `1/c`.
pub fn sample_geometric_rank<R: Rng + ?Sized>(c: f64, m: usize, rng: &mut R) -> usize {
    let top = rank_cap(c, m);
    // rank i is reached when the first i - 1 trials fail (probability 1/c each)
    let mut rank = 1;
    while rank < top && rng.random::<f64>() < 1.0 / c {
        rank += 1;
    }
    rank
}

/// `Pr[R > r]` for the capped geometric rank: `c^-r` below the cap, 0 at it.
pub fn geometric_rank_tail(c: f64, m: usize, r: usize) -> f64 {
    if r >= rank_cap(c, m) {
        0.0
    } else {
        c.powi(-(r as i32))
    }
}

/// One job of one sampled instance, compared between bounded overload and
/// last entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastEntryProbe {
    pub job: usize,
    pub last_entry: LastEntry,
    /// Runtime and rank of the job in the bounded-overload schedule.
    pub overload_runtime: f64,
    pub overload_rank: usize,
    pub seed: u64,
}

/// Samples `probes` i.i.d. instances (probe `t` seeded by
/// `trial_seed(seed, t)`), picks a uniformly random job in each and runs both
/// bounded overload and last entry for it. Results are in probe order
/// whatever the thread count.
pub fn probe_last_entry(
    spec: &DistributionSpec,
    n: usize,
    m: usize,
    c: f64,
    probes: usize,
    seed: u64,
) -> Result<Vec<LastEntryProbe>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameters("n and m must be positive".into()));
    }
    let config = MechanismConfig::bounded_overload(c);
    config.validate()?;
    (0..probes as u64)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let inst = Instance::sample_iid(spec, n, m, &mut rng)?;
            let job = rng.random_range(0..n);
            let outcome = allocate(&config, &inst)?;
            let machine = outcome.schedule.assignment[job].expect("bounded overload schedules every job");
            Ok(LastEntryProbe {
                job,
                last_entry: last_entry(&inst, c, job)?,
                overload_runtime: inst.runtime(job, machine),
                overload_rank: inst.rank_of(job, machine),
                seed: s,
            })
        })
        .collect()
}

/// Compares the empirical tail of last-entry ranks with the exact tail of
/// the capped geometric rank at every rank `1..=ceil(m/c)`.
pub fn check_last_entry_geometric(probes: &[LastEntryProbe], c: f64, m: usize) -> DominanceReport {
    let ranks = probes.iter().map(|p| p.last_entry.rank as f64).collect();
    let grid = (1..=rank_cap(c, m)).map(|r| r as f64).collect();
    compare_to_exact(ranks, grid, |t| geometric_rank_tail(c, m, t as usize))
}

/// A candidate misreport for the audited machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Misreport {
    Truthful,
    ScaleAll(f64),
    ScaleEntry { job: usize, factor: f64 },
    Swap { a: usize, b: usize },
}

/// Finite grid of misreports: whole-column and single-entry scalings, and
/// pairwise swaps of entries. `f64::INFINITY` stands for a prohibitive
/// report, realized as a large finite sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct MisreportGrid {
    pub factors: Vec<f64>,
    pub swaps: bool,
}

impl Default for MisreportGrid {
    fn default() -> Self {
        MisreportGrid {
            factors: vec![0.0, 0.25, 0.5, 2.0, 4.0, f64::INFINITY],
            swaps: true,
        }
    }
}

impl MisreportGrid {
    pub fn candidates(&self, truth: &[f64], sentinel: f64) -> Vec<(Misreport, Vec<f64>)> {
        let scale = |x: f64, f: f64| if f.is_infinite() { sentinel } else { x * f };
        let mut out = vec![(Misreport::Truthful, truth.to_vec())];
        for &f in &self.factors {
            out.push((Misreport::ScaleAll(f), truth.iter().map(|&x| scale(x, f)).collect()));
            if truth.len() > 1 {
                for j in 0..truth.len() {
                    let mut col = truth.to_vec();
                    col[j] = scale(col[j], f);
                    out.push((Misreport::ScaleEntry { job: j, factor: f }, col));
                }
            }
        }
        if self.swaps {
            for a in 0..truth.len() {
                for b in a + 1..truth.len() {
                    let mut col = truth.to_vec();
                    col.swap(a, b);
                    out.push((Misreport::Swap { a, b }, col));
                }
            }
        }
        out
    }
}

/// A misreport that beats truth-telling by more than the audit tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub machine: usize,
    pub misreport: Misreport,
    pub truthful_utility: f64,
    pub misreport_utility: f64,
    pub gain: f64,
}

pub const IC_TOLERANCE: f64 = 1e-9;

/// Tries every misreport in `grid` for `machine` and returns those that
/// raise its utility (payment minus true work) by more than 1e-9.
pub fn ic_audit(
    config: &MechanismConfig,
    inst: &Instance,
    machine: usize,
    grid: &MisreportGrid,
) -> Result<Vec<Violation>> {
    let truthful = allocate(config, inst)?;
    let truthful_utility = clarke_payment(inst, &truthful, machine)? - true_work(inst, &truthful.schedule, machine);
    let max_entry = inst.runtimes().iter().copied().fold(0.0, f64::max);
    let sentinel = 1e6 * (1.0 + max_entry);
    let mut violations = Vec::new();
    for (misreport, column) in grid.candidates(&inst.column(machine), sentinel) {
        let reported = inst.with_column(machine, &column)?;
        let outcome = allocate(config, &reported)?;
        let pay = clarke_payment(&reported, &outcome, machine)?;
        let utility = pay - true_work(inst, &outcome.schedule, machine);
        let gain = utility - truthful_utility;
        if gain > IC_TOLERANCE {
            violations.push(Violation {
                machine,
                misreport,
                truthful_utility,
                misreport_utility: utility,
                gain,
            });
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(r: &[&[f64]]) -> Instance {
        Instance::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn minimum_work_payments() {
        let inst = rows(&[&[1.0, 3.0], &[2.0, 2.0]]);
        let out = run_minimum_work(&inst).unwrap();
        assert_eq!(out.schedule.assignment, vec![Some(0), Some(0)]);
        assert_eq!(out.payments().unwrap(), &[5.0, 0.0]);
        assert_eq!(out.ranks, vec![Some(1), Some(1)]);
    }

    #[test]
    fn minimum_work_single_machine_keeps_schedule() {
        let inst = rows(&[&[1.0], &[2.0]]);
        let out = run_minimum_work(&inst).unwrap();
        assert_eq!(out.schedule.total_work, 3.0);
        assert_eq!(out.payments, Payments::Infeasible { machine: 0 });
        assert!(matches!(out.payments(), Err(Error::PivotInfeasible { machine: 0 })));
    }

    #[test]
    fn zero_matrix_pays_nothing() {
        let inst = Instance::new(3, 2, vec![0.0; 6], vec![]).unwrap();
        assert_eq!(run_minimum_work(&inst).unwrap().payments().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn overload_cap_rounding() {
        assert_eq!(overload_cap(7.0, 4, 4), 7);
        assert_eq!(overload_cap(2.0, 4, 4), 2);
        assert_eq!(overload_cap(2.0, 4, 3), 3);
        assert_eq!(overload_cap(7.0, 64, 64), 7);
        assert_eq!(overload_cap(1.5, 2, 3), 1);
        assert_eq!(rank_cap(7.0, 64), 10);
        assert_eq!(rank_cap(7.0, 14), 2);
        assert_eq!(rank_cap(7.0, 5), 1);
    }

    #[test]
    fn bounded_overload_nonbinding_matches_minimum_work() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let inst = Instance::sample_iid(&spec, 4, 4, &mut rng).unwrap();
        let a = run_bounded_overload(&inst, 7.0).unwrap();
        let b = run_minimum_work(&inst).unwrap();
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.payments, b.payments);
    }

    #[test]
    fn bounded_overload_respects_cap() {
        let inst = rows(&[&[1.0, 5.0, 6.0, 7.0], &[1.0, 6.0, 5.0, 7.0], &[1.0, 7.0, 6.0, 5.0], &[1.0, 5.0, 5.0, 5.0]]);
        let out = run_bounded_overload(&inst, 2.0).unwrap();
        assert!(out.schedule.loads[0] <= 2);
        assert!(out.schedule.max_load() <= 2);
        assert!(out.payments().unwrap().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn bounded_overload_two_by_two() {
        // c = 2 with n = m = 2 gives cap = ceil(2) = 2, so the range is unrestricted
        let inst = rows(&[&[1.0, 10.0], &[2.0, 100.0]]);
        let out = run_bounded_overload(&inst, 2.0).unwrap();
        assert_eq!(out.schedule.assignment, vec![Some(0), Some(0)]);
        assert_eq!(out.payments().unwrap(), &[110.0, 0.0]);
    }

    #[test]
    fn bounded_overload_pivot_can_be_infeasible() {
        let inst = Instance::new(5, 3, (0..15).map(|x| x as f64).collect(), vec![]).unwrap();
        // cap = ceil(1.1 * 5 / 3) = 2: the full range fits 6 >= 5, each pivot only 4
        let out = run_bounded_overload(&inst, 1.1).unwrap();
        assert!(out.schedule.max_load() <= 2);
        assert_eq!(out.payments, Payments::Infeasible { machine: 0 });
    }

    #[test]
    fn bounded_overload_three_machine_payments_by_enumeration() {
        let inst = rows(&[&[1.0, 10.0, 4.0], &[2.0, 100.0, 3.0]]);
        // cap = ceil(2 * 2 / 3) = 2, so the optimum is both on machine 0
        let out = run_bounded_overload(&inst, 2.0).unwrap();
        assert_eq!(out.schedule.assignment, vec![Some(0), Some(0)]);
        // pivots: without m0 the best is j1 -> m2, j2 -> m2 = 7; without m1 or m2: 3
        assert_eq!(out.payments().unwrap(), &[7.0, 0.0, 0.0]);
    }

    #[test]
    fn sieve_examples() {
        let inst = rows(&[&[3.0, 4.0], &[7.0, 8.0]]);
        let out = run_sieve(&inst, 5.0).unwrap();
        assert_eq!(out.schedule.unscheduled_count(), 1);
        assert_eq!(out.ranks, vec![Some(1), None]);
        // without m0 job 0 runs on m1 (4) and job 1 stays on the dummy (5)
        assert_eq!(out.payments().unwrap(), &[9.0 - 5.0, 0.0]);

        let out = run_sieve(&inst, 0.0).unwrap();
        assert_eq!(out.schedule.unscheduled_count(), 2);
        let zero = rows(&[&[0.0, 1.0], &[2.0, 3.0]]);
        assert_eq!(run_sieve(&zero, 0.0).unwrap().schedule.unscheduled(), vec![1]);

        let huge = run_sieve(&inst, 1e12).unwrap();
        assert_eq!(huge.schedule, run_minimum_work(&inst).unwrap().schedule);
    }

    #[test]
    fn sieve_pivot_defined_for_one_machine() {
        let inst = rows(&[&[1.0], &[9.0]]);
        let out = run_sieve(&inst, 4.0).unwrap();
        // without the machine both jobs go to the dummy: 8; others pay 4
        assert_eq!(out.payments().unwrap(), &[4.0]);
    }

    #[test]
    fn partition_rounding() {
        assert_eq!(sieve_partition(3, 2.0 / 3.0).unwrap(), 1);
        assert_eq!(sieve_partition(12, 2.0 / 3.0).unwrap(), 4);
        assert_eq!(sieve_partition(32, 2.0 / 3.0).unwrap(), 11);
        assert!(sieve_partition(1, 0.5).is_err());
        assert!(sieve_partition(2, 0.1).is_err());
    }

    #[test]
    fn combined_with_huge_reserve_is_the_sieve_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let inst = Instance::sample_iid(&spec, 6, 3, &mut rng).unwrap();
        let out = run_sieve_bounded_overload(&inst, 7.0, 1e12, 2.0 / 3.0).unwrap();
        assert!(out.stages.iter().all(|&s| s == Stage::Sieve));
        assert!(out.schedule.assignment.iter().all(|a| *a == Some(0)));
        assert_eq!(out.stage_makespans.unwrap().1, 0.0);
        assert_eq!(&out.payments().unwrap()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn combined_routes_leftovers_to_overload_stage() {
        let inst = rows(&[&[1.0, 5.0, 5.0], &[9.0, 2.0, 3.0], &[8.0, 4.0, 1.0]]);
        let out = run_sieve_bounded_overload(&inst, 2.0, 5.0, 2.0 / 3.0).unwrap();
        assert_eq!(out.stages, vec![Stage::Sieve, Stage::Overload, Stage::Overload]);
        assert_eq!(out.schedule.assignment, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(out.stage_makespans, Some((1.0, 2.0)));
        assert_eq!(out.schedule.unscheduled_count(), 0);
        // stage 1: without m0 job 0 goes to the dummy (5), others paid 5 in
        // the sieve objective (1 + 5 + 5) minus m0's work 1 = 10 -> 15 - 10
        // stage 2: cap = ceil(2 * 2 / 2) = 2; without m1 both on m2 = 4, others 1
        //          without m2 both on m1 = 6, others 2
        assert_eq!(out.payments().unwrap(), &[5.0, 3.0, 4.0]);
    }

    #[test]
    fn reserve_tunings() {
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let r = derive_reserve(&spec, 100, 10, 0.5, ReserveRule::Markov { k: 2.0 }).unwrap();
        assert!((r.beta - 0.5).abs() < 1e-12);
        assert!(r.warnings.is_empty());

        let t2 = derive_reserve(&spec, 12, 12, 2.0 / 3.0, ReserveRule::LogRatio).unwrap();
        assert_eq!(t2.draws, 4);
        assert!((t2.tau - 0.25).abs() < 1e-15);
        assert!((t2.beta - 0.25 / 12f64.ln()).abs() < 1e-12);
        assert!((t2.beta - 0.10061).abs() < 1e-5);

        let t3 = derive_reserve(&spec, 12, 12, 2.0 / 3.0, ReserveRule::DoubleLogRatio).unwrap();
        assert!((t3.beta - 2.0 * t2.beta).abs() < 1e-15);
        assert!(!t3.warnings.is_empty());

        assert!(derive_reserve(&spec, 12, 1, 0.5, ReserveRule::LogRatio).is_err());
        assert!(derive_reserve(&spec, 12, 2, 0.4, ReserveRule::LogRatio).is_err());
        assert!(derive_reserve(&spec, 100, 10, 0.5, ReserveRule::Markov { k: 5.0 })
            .unwrap()
            .warnings
            .len()
            == 1);
    }

    #[test]
    fn last_entry_examples() {
        let inst = rows(&[&[1.0, 10.0], &[2.0, 100.0]]);
        // cap = 1: without job 1, job 0 sits on m0, so job 1 falls to rank 2
        let le = last_entry_with_cap(&inst, 1, 1).unwrap();
        assert_eq!(le, LastEntry { rank: 2, machine: 1, runtime: 100.0 });
        // c = 2 gives cap 2, and machine 0 stays open
        assert_eq!(last_entry_rank(&inst, 2.0, 1).unwrap(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let inst = Instance::sample_iid(&spec, 5, 4, &mut rng).unwrap();
        for j in 0..5 {
            // cap = ceil(7 * 5 / 4) = 9 >= n
            assert_eq!(last_entry_rank(&inst, 7.0, j).unwrap(), 1);
        }
    }

    #[test]
    fn geometric_pmf_values() {
        let pmf = geometric_rank_pmf(7.0, 64);
        assert_eq!(pmf.len(), 10);
        assert!((pmf[0] - 6.0 / 7.0).abs() < 1e-15);
        assert!((pmf[1] - 6.0 / 49.0).abs() < 1e-15);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(geometric_rank_pmf(7.0, 7), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| sample_geometric_rank(7.0, 5, &mut rng) == 1));
    }

    #[test]
    fn audit_includes_truthful_candidate() {
        let cands = MisreportGrid::default().candidates(&[1.0, 2.0, 3.0], 1e9);
        assert_eq!(cands[0], (Misreport::Truthful, vec![1.0, 2.0, 3.0]));
        // 6 whole-column + 18 single-entry scalings + 3 swaps
        assert_eq!(cands.len(), 1 + 6 + 18 + 3);
    }

    #[test]
    fn audit_minimum_work_two_by_two() {
        let inst = rows(&[&[1.0, 3.0], &[2.0, 2.5]]);
        for i in 0..2 {
            let v = ic_audit(&MechanismConfig::minimum_work(), &inst, i, &MisreportGrid::default()).unwrap();
            assert!(v.is_empty(), "{v:?}");
        }
    }

    #[test]
    fn geometric_tail_matches_pmf() {
        for (c, m) in [(7.0, 64), (2.0, 5), (3.0, 3)] {
            let pmf = geometric_rank_pmf(c, m);
            for r in 0..=pmf.len() {
                let tail: f64 = pmf[r.min(pmf.len())..].iter().sum();
                assert!((geometric_rank_tail(c, m, r) - tail).abs() < 1e-12, "c={c} m={m} r={r}");
            }
        }
    }

    #[test]
    fn last_entry_probes_respect_structure() {
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let probes = probe_last_entry(&spec, 16, 16, 7.0, 300, 42).unwrap();
        assert_eq!(probes.len(), 300);
        for p in &probes {
            assert!(p.last_entry.rank <= rank_cap(7.0, 16));
            assert!(p.overload_runtime <= p.last_entry.runtime + 1e-9);
        }
        let again = probe_last_entry(&spec, 16, 16, 7.0, 300, 42).unwrap();
        assert_eq!(probes, again);
        assert!(check_last_entry_geometric(&probes, 7.0, 16).pass);
    }
}
