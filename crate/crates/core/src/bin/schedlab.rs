use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use schedlab::bounds::{opt_bounds, opt_reference, reference_machines};
use schedlab::harness::{
    run_campaign, run_ic_campaign, verify_suite, write_report, ExperimentConfig, OutputFormat, Reference,
};
use schedlab::mech::{loglog_delta, MisreportGrid, ReserveRule};
use schedlab::{DistributionSpec, MechanismConfig, MechanismKind, Result};

#[derive(Parser)]
#[command(name = "schedlab", version, about = "Simulate and audit truthful makespan-scheduling mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded campaign and write per-trial rows.
    Simulate(SimArgs),
    /// Run the statistical verification suite.
    Verify(VerifyArgs),
    /// Search for profitable misreports on sampled instances.
    IcAudit(SimArgs),
    /// Estimate the makespan lower bounds.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tuning {
    LogRatio,
    DoubleLogRatio,
}

#[derive(Args)]
struct Common {
    /// Job-size distribution, e.g. exp:1, uniform:0,1, pareto:3,1,
    /// twopoint:1,10,0.5 or empirical:PATH. Repeat once per job for
    /// heterogeneous jobs.
    #[arg(long = "dist", default_value = "exp:1", num_args = 1..)]
    dist: Vec<String>,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (1 forces serial execution).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value = "bounded-overload")]
    mechanism: String,
    #[arg(long, default_value_t = 7.0)]
    c: f64,
    /// Reserve for the sieve kinds.
    #[arg(long)]
    beta: Option<f64>,
    /// Fraction of machines in the overload stage; defaults to 2/3, or to
    /// 1/ln ln m with `--tuning double-log-ratio`.
    #[arg(long)]
    delta: Option<f64>,
    /// Reserve `n/(k m) E[min of m]` when no beta is given.
    #[arg(long)]
    k: Option<f64>,
    /// Reserve scaled by `n/(m ln m)` (log-ratio) or twice that.
    #[arg(long, value_enum)]
    tuning: Option<Tuning>,
    #[arg(long, default_value = "none")]
    reference: String,
    /// Estimate the reference on each trial's own instance.
    #[arg(long)]
    paired: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// `all` or a single check id.
    #[arg(long, default_value = "all")]
    lemma: String,
    /// Overrides every check's default sample size.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Fraction of machines for the reduced reference.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[command(flatten)]
    common: Common,
}

fn specs(dist: &[String]) -> Result<Vec<DistributionSpec>> {
    dist.iter().map(|d| d.parse()).collect()
}

fn experiment(a: &SimArgs) -> Result<ExperimentConfig> {
    let kind: MechanismKind = a.mechanism.parse()?;
    let c = &a.common;
    let delta = match (a.delta, a.tuning) {
        (Some(d), _) => d,
        (None, Some(Tuning::DoubleLogRatio)) => loglog_delta(c.m),
        (None, _) => 2.0 / 3.0,
    };
    let mut mech = MechanismConfig::new(kind).with_c(a.c).with_delta(delta);
    if let Some(b) = a.beta {
        mech = mech.with_beta(b);
    }
    if let Some(k) = a.k {
        mech = mech.with_k(k);
    }
    let mut cfg = ExperimentConfig::new(mech, specs(&c.dist)?.remove(0), c.n, c.m, c.trials, c.seed)
        .with_reference(a.reference.parse::<Reference>()?)
        .with_paired(a.paired);
    cfg.specs = specs(&c.dist)?;
    cfg.threads = c.threads;
    cfg.reserve_rule = a.tuning.map(|t| match t {
        Tuning::LogRatio => ReserveRule::LogRatio,
        Tuning::DoubleLogRatio => ReserveRule::DoubleLogRatio,
    });
    Ok(cfg)
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn simulate(a: &SimArgs) -> Result<bool> {
    let cfg = experiment(a)?;
    let report = run_campaign(&cfg)?;
    let format = match a.common.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let mut w = output(&a.common.out)?;
    write_report(&report, format, &mut w)?;
    w.flush()?;
    for v in &report.violations {
        eprintln!("invariant violated: {v}");
    }
    if let Some(r) = &report.reference {
        eprintln!(
            "mean makespan {:.6} ± {:.6}; ratio to {} {:.6} ± {:.6}",
            report.makespan.mean, report.makespan.std_error, r.reference, r.ratio.mean, r.ratio.std_error
        );
    } else {
        eprintln!("mean makespan {:.6} ± {:.6}", report.makespan.mean, report.makespan.std_error);
    }
    Ok(report.violations.is_empty())
}

fn verify(a: &VerifyArgs) -> Result<bool> {
    let records = verify_suite(&a.lemma, a.trials, a.seed, a.threads)?;
    let mut w = output(&a.out)?;
    for r in &records {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
        eprintln!("{} {} {}", if r.pass { "PASS" } else { "FAIL" }, r.lemma_id, r.parameters);
    }
    w.flush()?;
    Ok(records.iter().all(|r| r.pass))
}

fn ic(a: &SimArgs) -> Result<bool> {
    let cfg = experiment(a)?;
    let summary = run_ic_campaign(&cfg, &MisreportGrid::default())?;
    write_json(&a.common.out, &serde_json::to_value(&summary)?)?;
    eprintln!(
        "{}: {} audits on {} instances, {} skipped (infeasible pivot), {} violations",
        summary.mechanism,
        summary.audits,
        summary.instances,
        summary.infeasible,
        summary.violations.len()
    );
    Ok(summary.violations.is_empty())
}

fn bounds(a: &BoundsArgs) -> Result<bool> {
    let c = &a.common;
    let specs = specs(&c.dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let (worst, avg) = opt_bounds(&specs, c.n, c.m, c.trials, &mut rng)?;
    let reduced = reference_machines(c.m, a.delta)?;
    let (rworst, ravg) = opt_bounds(&specs, c.n, reduced, c.trials, &mut rng)?;
    let reference = opt_reference(&specs, c.n, c.m, a.delta, c.trials, &mut rng)?;
    write_json(
        &c.out,
        &json!({
            "dist": c.dist,
            "n": c.n,
            "m": c.m,
            "delta": a.delta,
            "trials": c.trials,
            "seed": c.seed,
            "full": {"worst_best": worst, "average_best": avg},
            "reduced": {"worst_best": rworst, "average_best": ravg},
            "reference": reference,
        }),
    )?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::IcAudit(a) => ic(a),
        Command::Bounds(a) => bounds(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
