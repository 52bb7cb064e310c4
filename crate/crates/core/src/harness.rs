//! Seeded simulation campaigns, incentive audits over sampled instances,
//! the verification suite and report emission.
//!
//! Trial `t` draws everything from `ChaCha8Rng::seed_from_u64(trial_seed(seed, t))`,
//! so results do not depend on the number of threads. Rows are kept in trial
//! order and aggregated sequentially.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assign::first_best_makespan_greedy;
use crate::bounds::{instance_bounds, reference_machines, sample_bounds, BoundKind};
use crate::distkit::DistributionSpec;
use crate::instance::Instance;
use crate::lemmalab::{
    check_correlation_gap, check_falsified_dominance, check_mhr_scaling, check_min_hazard_identity,
    check_opt_ratio_mhr, check_order_stat_dominance, check_random_copies, check_sieve_unscheduled, hazard_grid,
    CopiesQuery, CopyCount, GapMode, JointDistribution, LemmaRecord,
};
use crate::mech::{
    allocate, check_last_entry_geometric, derive_reserve, ic_audit, overload_cap, probe_last_entry, rank_cap,
    sieve_partition, MechanismConfig, MechanismKind, MisreportGrid, ReserveRule, Stage, Violation,
};
use crate::stats::{ratio_independent, ratio_paired, Estimate, Moments};
use crate::{trial_seed, Error, Result};

/// Version string written into report headers.
pub const VERSION: &str = env!("SCHEDLAB_VERSION");

/// What the mean makespan is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// Expected worst best runtime on `m/2` machines.
    OptHalf,
    /// Larger of both bounds on `m/3` machines.
    OptThird,
    /// Larger of both bounds on `(delta/2) m` machines.
    OptDeltaHalf,
    None,
}

impl Reference {
    /// Fraction of machines, given the mechanism's `delta`.
    pub fn fraction(self, delta: f64) -> Option<f64> {
        match self {
            Reference::OptHalf => Some(0.5),
            Reference::OptThird => Some(1.0 / 3.0),
            Reference::OptDeltaHalf => Some(delta / 2.0),
            Reference::None => None,
        }
    }

    fn worst_only(self) -> bool {
        self == Reference::OptHalf
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reference::OptHalf => "opt-half",
            Reference::OptThird => "opt-third",
            Reference::OptDeltaHalf => "opt-delta-half",
            Reference::None => "none",
        })
    }
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opt-half" => Ok(Reference::OptHalf),
            "opt-third" => Ok(Reference::OptThird),
            "opt-delta-half" => Ok(Reference::OptDeltaHalf),
            "none" => Ok(Reference::None),
            _ => Err(Error::Config(format!(
                "unknown reference `{s}` (expected opt-half, opt-third, opt-delta-half or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mechanism: MechanismConfig,
    /// One spec shared by all jobs, or one per job.
    pub specs: Vec<DistributionSpec>,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub reference: Reference,
    /// Estimate the reference on each trial's own instance instead of
    /// fresh draws.
    pub paired: bool,
    /// Derive `beta` from the job-size distribution when the mechanism has none.
    pub reserve_rule: Option<ReserveRule>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(mechanism: MechanismConfig, spec: DistributionSpec, n: usize, m: usize, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            mechanism,
            specs: vec![spec],
            n,
            m,
            trials,
            seed,
            reference: Reference::None,
            paired: false,
            reserve_rule: None,
            threads: None,
        }
    }

    pub fn with_reference(mut self, reference: Reference) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_paired(mut self, paired: bool) -> Self {
        self.paired = paired;
        self
    }

    pub fn with_reserve_rule(mut self, rule: ReserveRule) -> Self {
        self.reserve_rule = Some(rule);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    fn homogeneous(&self) -> bool {
        self.specs.windows(2).all(|w| w[0] == w[1])
    }

    /// Checks the configuration and fills in the reserve.
    pub fn resolve(&self) -> Result<MechanismConfig> {
        if self.trials == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::Config("trials, n and m must be positive".into()));
        }
        if self.specs.is_empty() || !(self.specs.len() == 1 || self.specs.len() == self.n) {
            return Err(Error::Config(format!("need 1 or {} job specs, got {}", self.n, self.specs.len())));
        }
        let mut mech = self.mechanism.clone();
        if mech.kind.uses_reserve() {
            if !self.homogeneous() {
                return Err(Error::Config(format!(
                    "{} needs i.i.d. jobs; per-job specs differ",
                    mech.kind
                )));
            }
            if mech.beta.is_none() {
                let rule = match (self.reserve_rule, mech.k) {
                    (Some(rule), _) => rule,
                    (None, Some(k)) => ReserveRule::Markov { k },
                    (None, None) => {
                        return Err(Error::Config(format!("{} needs --beta, --k or a reserve tuning", mech.kind)))
                    }
                };
                mech.beta = Some(derive_reserve(&self.specs[0], self.n, self.m, mech.delta, rule)?.beta);
            }
        }
        mech.validate()?;
        if let Some(frac) = self.reference.fraction(mech.delta) {
            reference_machines(self.m, frac)?;
        }
        Ok(mech)
    }
}

/// Per-trial output. Stage makespans are only present for the combined
/// mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial: usize,
    pub makespan: f64,
    pub total_work: f64,
    pub max_load: usize,
    pub stage1_makespan: Option<f64>,
    pub stage2_makespan: Option<f64>,
    /// Greedy list-scheduling makespan on the same instance, for context.
    pub greedy_first_best: Option<f64>,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 8] = [
    "trial",
    "makespan",
    "total_work",
    "max_load",
    "stage1_makespan",
    "stage2_makespan",
    "greedy_first_best",
    "seed",
];

/// Echo of the configuration in reports. Thread count is left out so that
/// reports match across thread counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mechanism: MechanismKind,
    pub c: f64,
    pub beta: Option<f64>,
    pub delta: f64,
    pub k: Option<f64>,
    pub dist: Vec<String>,
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub reference: Reference,
    pub paired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub reference: Reference,
    pub bound: BoundKind,
    pub machines: usize,
    pub estimate: Estimate,
    /// Mean makespan over the reference.
    pub ratio: Estimate,
    pub paired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub version: String,
    pub config: ConfigEcho,
    pub makespan: Estimate,
    pub total_work: Estimate,
    pub max_load: Estimate,
    pub greedy_first_best: Estimate,
    pub unscheduled: Estimate,
    pub reference: Option<ReferenceSummary>,
    /// Structural invariants that failed, one message per failure.
    pub violations: Vec<String>,
    pub rows: Vec<ReportRow>,
}

struct TrialOutput {
    row: ReportRow,
    unscheduled: usize,
    bounds: Option<(f64, f64)>,
    violations: Vec<String>,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn sample_instance<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<Instance> {
    if config.specs.len() == 1 {
        Instance::sample_iid(&config.specs[0], config.n, config.m, rng)
    } else {
        Instance::sample(&config.specs, config.m, rng)
    }
}

fn run_trial(config: &ExperimentConfig, mech: &MechanismConfig, reference: Option<usize>, trial: usize) -> Result<TrialOutput> {
    let seed = trial_seed(config.seed, trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = sample_instance(config, &mut rng)?;
    let outcome = allocate(mech, &inst)?;
    let s = &outcome.schedule;
    let (n, m) = (inst.jobs(), inst.machines());
    let mut violations = Vec::new();

    let longest = s
        .assignment
        .iter()
        .enumerate()
        .filter_map(|(j, a)| a.map(|i| inst.runtime(j, i)))
        .fold(0.0, f64::max);
    if s.makespan < longest {
        violations.push(format!("trial {trial}: makespan {} below a scheduled runtime {longest}", s.makespan));
    }
    match mech.kind {
        MechanismKind::BoundedOverload => {
            let cap = overload_cap(mech.c, n, m);
            if s.max_load() > cap {
                violations.push(format!("trial {trial}: max load {} exceeds cap {cap}", s.max_load()));
            }
        }
        MechanismKind::SieveBoundedOverload => {
            if s.unscheduled_count() > 0 {
                violations.push(format!("trial {trial}: {} jobs left unscheduled", s.unscheduled_count()));
            }
            let split = sieve_partition(m, mech.delta)?;
            let overflow = outcome.stages.iter().filter(|&&st| st == Stage::Overload).count();
            let cap = overload_cap(mech.c, overflow, m - split);
            if let Some(l) = s.loads[split..].iter().copied().max().filter(|&l| overflow > 0 && l > cap) {
                violations.push(format!("trial {trial}: overload-stage load {l} exceeds cap {cap}"));
            }
        }
        MechanismKind::MinimumWork | MechanismKind::Sieve => {}
    }

    let bounds = match reference {
        Some(k) if config.paired => {
            let cols: Vec<usize> = (0..k).collect();
            Some(instance_bounds(&inst, &cols)?)
        }
        Some(k) => Some(sample_bounds(&config.specs, n, k, &mut rng)),
        None => None,
    };
    let (stage1, stage2) = match outcome.stage_makespans {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(TrialOutput {
        row: ReportRow {
            trial,
            makespan: s.makespan,
            total_work: s.total_work,
            max_load: s.max_load(),
            stage1_makespan: stage1,
            stage2_makespan: stage2,
            greedy_first_best: Some(first_best_makespan_greedy(&inst)),
            seed,
        },
        unscheduled: s.unscheduled_count(),
        bounds,
        violations,
    })
}

/// Runs `config.trials` independent trials and aggregates them.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignReport> {
    let mech = config.resolve()?;
    let frac = config.reference.fraction(mech.delta);
    let ref_machines = frac.map(|f| reference_machines(config.m, f)).transpose()?;
    let outputs: Vec<TrialOutput> = with_pool(config.threads, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &mech, ref_machines, t))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut makespan = Moments::default();
    let mut work = Moments::default();
    let mut load = Moments::default();
    let mut greedy = Moments::default();
    let mut unscheduled = Moments::default();
    let mut worst = Moments::default();
    let mut avg = Moments::default();
    let mut violations = Vec::new();
    for o in &outputs {
        makespan.push(o.row.makespan);
        work.push(o.row.total_work);
        load.push(o.row.max_load as f64);
        greedy.push(o.row.greedy_first_best.unwrap_or(f64::NAN));
        unscheduled.push(o.unscheduled as f64);
        if let Some((w, a)) = o.bounds {
            worst.push(w);
            avg.push(a);
        }
        violations.extend(o.violations.iter().cloned());
    }

    let reference = ref_machines.map(|machines| {
        let use_worst = config.reference.worst_only() || worst.mean() >= avg.mean();
        let (bound, est) = if use_worst {
            (BoundKind::WorstBest, worst.estimate())
        } else {
            (BoundKind::AverageBest, avg.estimate())
        };
        let ratio = if config.paired {
            let pairs: Vec<(f64, f64)> = outputs
                .iter()
                .map(|o| {
                    let (w, a) = o.bounds.unwrap();
                    (o.row.makespan, if use_worst { w } else { a })
                })
                .collect();
            ratio_paired(&pairs)
        } else {
            ratio_independent(makespan.estimate(), est)
        };
        ReferenceSummary {
            reference: config.reference,
            bound,
            machines,
            estimate: est,
            ratio,
            paired: config.paired,
        }
    });

    Ok(CampaignReport {
        version: VERSION.to_string(),
        config: ConfigEcho {
            mechanism: mech.kind,
            c: mech.c,
            beta: mech.beta,
            delta: mech.delta,
            k: mech.k,
            dist: config.specs.iter().map(|s| s.to_string()).collect(),
            n: config.n,
            m: config.m,
            trials: config.trials,
            seed: config.seed,
            reference: config.reference,
            paired: config.paired,
        },
        makespan: makespan.estimate(),
        total_work: work.estimate(),
        max_load: load.estimate(),
        greedy_first_best: greedy.estimate(),
        unscheduled: unscheduled.estimate(),
        reference,
        violations,
        rows: outputs.into_iter().map(|o| o.row).collect(),
    })
}

fn fmt_estimate(e: &Estimate) -> String {
    format!("{} ± {}", e.mean, e.std_error)
}

fn header_lines(report: &CampaignReport) -> Vec<String> {
    let c = &report.config;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
    let mut lines = vec![
        format!("schedlab {}", report.version),
        format!("mechanism: {}", c.mechanism),
        format!("c: {}", c.c),
        format!("beta: {}", opt(c.beta)),
        format!("delta: {}", c.delta),
        format!("k: {}", opt(c.k)),
        format!("dist: {}", c.dist.join(" ")),
        format!("n: {}", c.n),
        format!("m: {}", c.m),
        format!("trials: {}", c.trials),
        format!("seed: {}", c.seed),
        format!("reference: {}", c.reference),
        format!("paired: {}", c.paired),
        format!("mean makespan: {}", fmt_estimate(&report.makespan)),
        format!("mean total work: {}", fmt_estimate(&report.total_work)),
        format!("mean max load: {}", fmt_estimate(&report.max_load)),
        format!("mean greedy first-best makespan: {}", fmt_estimate(&report.greedy_first_best)),
        format!("mean unscheduled: {}", fmt_estimate(&report.unscheduled)),
    ];
    if let Some(r) = &report.reference {
        lines.push(format!(
            "reference {} ({} on {} machines): {}",
            r.reference,
            serde_json::to_value(r.bound).unwrap().as_str().unwrap(),
            r.machines,
            fmt_estimate(&r.estimate)
        ));
        lines.push(format!("makespan / reference: {}", fmt_estimate(&r.ratio)));
    }
    lines.push(format!("invariant violations: {}", report.violations.len()));
    lines
}

/// Writes `report` as CSV (a `#` comment block followed by one row per
/// trial) or as JSON.
pub fn write_report<W: Write>(report: &CampaignReport, format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
        OutputFormat::Csv => {
            for line in header_lines(report) {
                writeln!(out, "# {line}")?;
            }
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
            w.write_record(CSV_COLUMNS)?;
            for row in &report.rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn emit_report(report: &CampaignReport, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_report(report, format, &mut buf)?;
    buf.flush()?;
    Ok(())
}

/// Parses the rows of a CSV report, skipping the comment block.
pub fn read_csv_rows(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Config(format!("unexpected CSV columns: {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Outcome of auditing every machine of many sampled instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSummary {
    pub mechanism: MechanismKind,
    pub instances: usize,
    pub audits: usize,
    /// Audits skipped because a Clarke pivot had no feasible schedule.
    pub infeasible: usize,
    pub violations: Vec<(usize, Violation)>,
}

/// Audits every machine of `config.trials` sampled instances against `grid`.
pub fn run_ic_campaign(config: &ExperimentConfig, grid: &MisreportGrid) -> Result<IcSummary> {
    let mech = config.resolve()?;
    let per_trial: Vec<(usize, usize, Vec<(usize, Violation)>)> = with_pool(config.threads, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| -> Result<_> {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, t as u64));
                let inst = sample_instance(config, &mut rng)?;
                let (mut audits, mut infeasible, mut found) = (0, 0, Vec::new());
                for i in 0..inst.machines() {
                    match ic_audit(&mech, &inst, i, grid) {
                        Ok(v) => {
                            audits += 1;
                            found.extend(v.into_iter().map(|v| (t, v)));
                        }
                        Err(Error::PivotInfeasible { .. }) => infeasible += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok((audits, infeasible, found))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut summary = IcSummary {
        mechanism: mech.kind,
        instances: config.trials,
        audits: 0,
        infeasible: 0,
        violations: Vec::new(),
    };
    for (a, i, v) in per_trial {
        summary.audits += a;
        summary.infeasible += i;
        summary.violations.extend(v);
    }
    Ok(summary)
}

/// Identifiers accepted by [`verify_suite`].
pub const CHECK_IDS: [&str; 9] = [
    "order-stat-dominance",
    "mhr-scaling",
    "random-copies",
    "correlation-gap",
    "opt-ratio-mhr",
    "min-hazard-identity",
    "sieve-unscheduled",
    "last-entry-geometric",
    "negative-control",
];

type Job = Box<dyn Fn(&mut ChaCha8Rng) -> Result<LemmaRecord> + Send + Sync>;

fn spec(s: &str) -> DistributionSpec {
    s.parse().expect("built-in spec")
}

fn dominance_jobs(trials: usize) -> Vec<Job> {
    let mut jobs: Vec<Job> = Vec::new();
    for dist in ["exp:1", "twopoint:1,10,0.5"] {
        for m in [8usize, 16] {
            for i in [1usize, 2, 3] {
                jobs.push(Box::new(move |rng| {
                    let r = check_order_stat_dominance(&spec(dist), m, i, trials, rng)?;
                    LemmaRecord::new(
                        "order-stat-dominance",
                        json!({"dist": dist, "m": m, "i": i}),
                        trials,
                        &r,
                        Some(r.band),
                        r.pass,
                    )
                }));
            }
        }
    }
    jobs
}

fn suite_jobs(id: &str, trials: Option<usize>) -> Vec<Job> {
    let t = |default: usize| trials.unwrap_or(default);
    match id {
        "order-stat-dominance" => dominance_jobs(t(200_000)),
        "mhr-scaling" => [("exp:1", 1usize), ("exp:1", 4), ("uniform:0,1", 2), ("uniform:0,1", 1)]
            .into_iter()
            .map(|(dist, r)| {
                let trials = t(100_000);
                Box::new(move |rng: &mut ChaCha8Rng| {
                    let rep = check_mhr_scaling(&spec(dist), r, trials, rng)?;
                    LemmaRecord::new("mhr-scaling", json!({"dist": dist, "r": r}), trials, &rep, Some(rep.band), rep.pass)
                }) as Job
            })
            .collect(),
        "random-copies" => {
            let cases: Vec<(CopyCount, &'static str, f64, usize)> = vec![
                (CopyCount::Constant(2), "exp:1", 2.0, 1),
                (CopyCount::Constant(3), "twopoint:5,6,0", 3.0, 3),
                (CopyCount::UniformRange { lo: 2, hi: 3 }, "uniform:0,1", 2.0, 4),
            ];
            cases
                .into_iter()
                .map(|(k, w, c, n)| {
                    let trials = t(100_000);
                    Box::new(move |rng: &mut ChaCha8Rng| {
                        let q = CopiesQuery::new(k, spec(w), c, n)?;
                        let rep = check_random_copies(&q, trials, rng)?;
                        LemmaRecord::new(
                            "random-copies",
                            json!({"k": k, "w": w, "c": c, "n": n}),
                            trials,
                            &rep,
                            None,
                            rep.pass,
                        )
                    }) as Job
                })
                .collect()
        }
        "correlation-gap" => {
            let trials = t(200_000);
            let cases: Vec<(&'static str, GapMode)> = vec![
                ("one-hot-5", GapMode::Exact),
                ("one-hot-5", GapMode::MonteCarlo { trials }),
                ("comonotone-2", GapMode::Exact),
                ("independent-2", GapMode::Exact),
            ];
            cases
                .into_iter()
                .map(|(name, mode)| {
                    Box::new(move |rng: &mut ChaCha8Rng| {
                        let joint = match name {
                            "one-hot-5" => JointDistribution::one_hot(5)?,
                            "comonotone-2" => JointDistribution::comonotone_bernoulli(2, 0.5)?,
                            _ => JointDistribution::independent(&[vec![(0.0, 0.5), (1.0, 0.5)], vec![(0.0, 0.5), (1.0, 0.5)]])?,
                        };
                        let rep = check_correlation_gap(&joint, mode, rng)?;
                        let n = match mode {
                            GapMode::Exact => 0,
                            GapMode::MonteCarlo { trials } => trials,
                        };
                        LemmaRecord::new("correlation-gap", json!({"joint": name, "mode": mode}), n, &rep, None, rep.pass)
                    }) as Job
                })
                .collect()
        }
        "opt-ratio-mhr" => [("exp:1", 16usize, 0.5), ("exp:1", 16, 1.0), ("uniform:0,1", 8, 0.5)]
            .into_iter()
            .map(|(dist, nm, delta)| {
                let trials = t(20_000);
                Box::new(move |rng: &mut ChaCha8Rng| {
                    let rep = check_opt_ratio_mhr(&spec(dist), nm, nm, delta, trials, rng)?;
                    LemmaRecord::new(
                        "opt-ratio-mhr",
                        json!({"dist": dist, "n": nm, "m": nm, "delta": delta}),
                        trials,
                        &rep,
                        None,
                        rep.pass,
                    )
                }) as Job
            })
            .collect(),
        "min-hazard-identity" => [("exp:1", 1usize), ("exp:2.5", 5), ("uniform:0,1", 3), ("pareto:3,1", 4)]
            .into_iter()
            .map(|(dist, k)| {
                Box::new(move |_: &mut ChaCha8Rng| {
                    let s = spec(dist);
                    let rep = check_min_hazard_identity(&s, k, &hazard_grid(&s)?)?;
                    LemmaRecord::new("min-hazard-identity", json!({"dist": dist, "k": k}), 0, &rep, None, rep.pass)
                }) as Job
            })
            .collect(),
        "sieve-unscheduled" => [("exp:1", 100usize, 10usize, 2.0), ("pareto:3,1", 100, 10, 2.0)]
            .into_iter()
            .map(|(dist, n, m, k)| {
                let trials = t(10_000);
                Box::new(move |rng: &mut ChaCha8Rng| {
                    let rep = check_sieve_unscheduled(&spec(dist), n, m, k, trials, rng)?;
                    LemmaRecord::new(
                        "sieve-unscheduled",
                        json!({"dist": dist, "n": n, "m": m, "k": k}),
                        trials,
                        &rep,
                        None,
                        rep.pass,
                    )
                }) as Job
            })
            .collect(),
        "last-entry-geometric" => {
            let trials = t(20_000);
            vec![Box::new(move |rng: &mut ChaCha8Rng| {
                let (c, m) = (7.0, 64);
                let probes = probe_last_entry(&spec("exp:1"), m, m, c, trials, rng.random())?;
                let rep = check_last_entry_geometric(&probes, c, m);
                let cap = rank_cap(c, m);
                let ranks_ok = probes.iter().all(|p| p.last_entry.rank <= cap);
                let runtime_ok = probes.iter().all(|p| p.overload_runtime <= p.last_entry.runtime + 1e-9);
                LemmaRecord::new(
                    "last-entry-geometric",
                    json!({"dist": "exp:1", "n": m, "m": m, "c": c}),
                    trials,
                    &json!({"dominance": rep, "rank_within_cap": ranks_ok, "overload_not_worse": runtime_ok}),
                    Some(rep.band),
                    rep.pass && ranks_ok && runtime_ok,
                )
            }) as Job]
        }
        "negative-control" => {
            let trials = t(20_000);
            vec![Box::new(move |rng: &mut ChaCha8Rng| {
                let rep = check_falsified_dominance(&spec("exp:1"), 16, trials, rng)?;
                LemmaRecord::new(
                    "negative-control",
                    json!({"dist": "exp:1", "m": 16, "claim": "min of m/2 dominated by min of m"}),
                    trials,
                    &rep,
                    Some(rep.band),
                    !rep.pass,
                )
            }) as Job]
        }
        _ => Vec::new(),
    }
}

/// Runs the checks named by `selection` (`all` or one of [`CHECK_IDS`]).
/// `trials` overrides each check's default sample size. Records come back in
/// a fixed order; a record's `pass` says whether the check behaved as
/// expected (for the negative control, that the false claim was rejected).
pub fn verify_suite(selection: &str, trials: Option<usize>, seed: u64, threads: Option<usize>) -> Result<Vec<LemmaRecord>> {
    let ids: Vec<&str> = if selection == "all" {
        CHECK_IDS.to_vec()
    } else if CHECK_IDS.contains(&selection) {
        vec![selection]
    } else {
        return Err(Error::Config(format!(
            "unknown check `{selection}`; expected all or one of {}",
            CHECK_IDS.join(", ")
        )));
    };
    let jobs: Vec<Job> = ids.iter().flat_map(|id| suite_jobs(id, trials)).collect();
    with_pool(threads, || {
        jobs.par_iter()
            .enumerate()
            .map(|(idx, job)| job(&mut ChaCha8Rng::seed_from_u64(trial_seed(seed, idx as u64))))
            .collect()
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> DistributionSpec {
        DistributionSpec::exponential(1.0).unwrap()
    }

    #[test]
    fn single_job_single_machine_makespan_is_the_draw() {
        let cfg = ExperimentConfig::new(MechanismConfig::minimum_work(), exp1(), 1, 1, 5, 9);
        let rep = run_campaign(&cfg).unwrap();
        for row in &rep.rows {
            let mut rng = ChaCha8Rng::seed_from_u64(row.seed);
            let x = Instance::sample_iid(&exp1(), 1, 1, &mut rng).unwrap().runtime(0, 0);
            assert_eq!(row.makespan, x);
        }
        let bad = cfg.with_reference(Reference::OptHalf);
        assert!(matches!(run_campaign(&bad), Err(Error::ReferenceTooSmall(_))));
    }

    #[test]
    fn sieve_rejects_heterogeneous_jobs() {
        let mut cfg = ExperimentConfig::new(MechanismConfig::sieve(1.0), exp1(), 2, 2, 5, 1);
        cfg.specs = vec![exp1(), DistributionSpec::exponential(2.0).unwrap()];
        assert!(matches!(run_campaign(&cfg), Err(Error::Config(_))));
        cfg.mechanism = MechanismConfig::minimum_work();
        assert!(run_campaign(&cfg).is_ok());
    }

    #[test]
    fn sieve_needs_a_reserve_source() {
        let cfg = ExperimentConfig::new(MechanismConfig::new(MechanismKind::Sieve), exp1(), 4, 4, 5, 1);
        assert!(run_campaign(&cfg).is_err());
        let tuned = cfg.clone().with_reserve_rule(ReserveRule::Markov { k: 1.0 });
        let rep = run_campaign(&tuned).unwrap();
        assert!((rep.config.beta.unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rows_are_independent_of_threads() {
        let cfg = ExperimentConfig::new(MechanismConfig::bounded_overload(2.0), exp1(), 6, 4, 40, 77)
            .with_reference(Reference::OptHalf);
        let a = run_campaign(&cfg.clone().with_threads(1)).unwrap();
        let b = run_campaign(&cfg.with_threads(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().enumerate().all(|(i, r)| r.trial == i));
    }

    #[test]
    fn csv_round_trip_and_empty_report() {
        let cfg = ExperimentConfig::new(MechanismConfig::sieve_bounded_overload(2.0, 0.3, 0.5), exp1(), 5, 4, 8, 3)
            .with_reference(Reference::OptDeltaHalf);
        let mut rep = run_campaign(&cfg).unwrap();
        let mut buf = Vec::new();
        write_report(&rep, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(read_csv_rows(&text).unwrap(), rep.rows);
        assert!(rep.rows.iter().all(|r| r.stage1_makespan.is_some()));

        rep.rows.clear();
        let mut buf = Vec::new();
        write_report(&rep, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(), vec![CSV_COLUMNS.join(",")]);
        assert!(read_csv_rows(&text).unwrap().is_empty());
    }

    #[test]
    fn non_combined_rows_leave_stage_columns_empty() {
        let cfg = ExperimentConfig::new(MechanismConfig::minimum_work(), exp1(), 3, 3, 2, 3);
        let rep = run_campaign(&cfg).unwrap();
        let mut buf = Vec::new();
        write_report(&rep, OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().find(|l| l.starts_with("0,")).unwrap();
        assert_eq!(row.split(',').nth(4), Some(""));
        assert_eq!(row.split(',').nth(5), Some(""));
    }

    #[test]
    fn json_report_round_trips() {
        let cfg = ExperimentConfig::new(MechanismConfig::minimum_work(), exp1(), 3, 4, 4, 5)
            .with_reference(Reference::OptThird)
            .with_paired(true);
        let rep = run_campaign(&cfg).unwrap();
        let mut buf = Vec::new();
        write_report(&rep, OutputFormat::Json, &mut buf).unwrap();
        let back: CampaignReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn paired_reference_uses_instance_columns() {
        let cfg = ExperimentConfig::new(MechanismConfig::minimum_work(), exp1(), 2, 4, 1, 11)
            .with_reference(Reference::OptHalf)
            .with_paired(true);
        let rep = run_campaign(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(rep.rows[0].seed);
        let inst = Instance::sample_iid(&exp1(), 2, 4, &mut rng).unwrap();
        let (w, _) = instance_bounds(&inst, &[0, 1]).unwrap();
        let r = rep.reference.unwrap();
        assert_eq!(r.machines, 2);
        assert_eq!(r.estimate.mean, w);
    }

    #[test]
    fn unknown_check_is_rejected() {
        assert!(verify_suite("nope", None, 1, None).is_err());
        let recs = verify_suite("min-hazard-identity", None, 1, None).unwrap();
        assert!(recs.iter().all(|r| r.pass && r.lemma_id == "min-hazard-identity"));
    }

    #[test]
    fn reference_parsing() {
        for r in [Reference::OptHalf, Reference::OptThird, Reference::OptDeltaHalf, Reference::None] {
            assert_eq!(r.to_string().parse::<Reference>().unwrap(), r);
        }
        assert!("opt".parse::<Reference>().is_err());
    }
}
