//! Python bindings. Structured results come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use schedlab_core::assign::{self, RangeConstraint};
use schedlab_core::harness::{self, ExperimentConfig, Reference};
use schedlab_core::lemmalab;
use schedlab_core::mech::{self, MisreportGrid, ReserveRule};
use schedlab_core::{DistributionSpec as CoreSpec, Instance as CoreInstance, MechanismConfig, MechanismKind};

fn err(e: schedlab_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A job-size distribution parsed from `exp:RATE`, `uniform:LO,HI`,
/// `pareto:SHAPE,SCALE`, `twopoint:LOW,HIGH,PHIGH` or `empirical:PATH`.
#[pyclass(name = "DistributionSpec", frozen)]
struct DistributionSpec(CoreSpec);

#[pymethods]
impl DistributionSpec {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        spec.parse().map(DistributionSpec).map_err(err)
    }

    fn cdf(&self, t: f64) -> f64 {
        self.0.cdf(t)
    }

    fn survival(&self, t: f64) -> f64 {
        self.0.survival(t)
    }

    fn pdf(&self, t: f64) -> Option<f64> {
        self.0.pdf(t)
    }

    fn hazard(&self, t: f64) -> Option<f64> {
        self.0.hazard(t)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn expected_min(&self, k: usize) -> PyResult<f64> {
        self.0.expected_min(k).map(|e| e.mean).map_err(err)
    }

    fn alpha_quantile(&self, m: usize) -> PyResult<f64> {
        if m == 0 {
            return Err(PyValueError::new_err("m must be >= 1"));
        }
        Ok(self.0.alpha_quantile(m))
    }

    #[pyo3(signature = (count, seed=0))]
    fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..count).map(|_| self.0.sample(&mut r)).collect()
    }

    #[pyo3(signature = (k, count, seed=0))]
    fn sample_min(&self, k: usize, count: usize, seed: u64) -> PyResult<Vec<f64>> {
        if k == 0 {
            return Err(PyValueError::new_err("k must be >= 1"));
        }
        let mut r = rng(seed);
        Ok((0..count).map(|_| self.0.sample_min(k, &mut r)).collect())
    }

    #[getter]
    fn is_mhr(&self) -> bool {
        self.0.is_mhr()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("DistributionSpec('{}')", self.0)
    }
}

/// A realized `n x m` runtime matrix.
#[pyclass(name = "Instance", frozen)]
struct Instance(CoreInstance);

#[pymethods]
impl Instance {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        CoreInstance::from_rows(&rows).map(Instance).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (spec, n, m, seed=0))]
    fn sample(spec: &DistributionSpec, n: usize, m: usize, seed: u64) -> PyResult<Self> {
        CoreInstance::sample_iid(&spec.0, n, m, &mut rng(seed))
            .map(Instance)
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        CoreInstance::from_json(text).map(Instance).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn jobs(&self) -> usize {
        self.0.jobs()
    }

    #[getter]
    fn machines(&self) -> usize {
        self.0.machines()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.jobs()).map(|j| self.0.row(j).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Instance(n={}, m={})", self.0.jobs(), self.0.machines())
    }
}

/// Minimum-total-work schedule with an optional per-machine cap and reserve.
#[pyfunction]
#[pyo3(signature = (instance, cap=None, reserve=None))]
fn solve_min_work<'py>(
    py: Python<'py>,
    instance: &Instance,
    cap: Option<usize>,
    reserve: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut rc = RangeConstraint::none();
    if let Some(c) = cap {
        rc = rc.with_cap(c);
    }
    if let Some(b) = reserve {
        rc = rc.with_reserve(b);
    }
    let s = assign::solve_min_work(&instance.0, &rc).map_err(err)?;
    to_py(py, &s)
}

fn mechanism(kind: &str, c: f64, beta: Option<f64>, delta: f64) -> PyResult<MechanismConfig> {
    let kind: MechanismKind = kind.parse().map_err(err)?;
    let mut cfg = MechanismConfig::new(kind).with_c(c).with_delta(delta);
    if let Some(b) = beta {
        cfg = cfg.with_beta(b);
    }
    Ok(cfg)
}

/// Runs a mechanism: `minimum-work`, `bounded-overload`, `sieve` or
/// `sieve-bounded-overload`. `payments` is `None` when some Clarke pivot
/// has no feasible schedule.
#[pyfunction]
#[pyo3(signature = (instance, kind, c=7.0, beta=None, delta=2.0/3.0))]
fn run_mechanism<'py>(
    py: Python<'py>,
    instance: &Instance,
    kind: &str,
    c: f64,
    beta: Option<f64>,
    delta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = mechanism(kind, c, beta, delta)?;
    let out = mech::run(&cfg, &instance.0).map_err(err)?;
    let payments = out.payments().ok().map(|p| p.to_vec());
    to_py(
        py,
        &serde_json::json!({
            "kind": out.kind,
            "schedule": out.schedule,
            "payments": payments,
            "ranks": out.ranks,
            "stages": out.stages,
            "stage_makespans": out.stage_makespans,
        }),
    )
}

/// Misreports of `machine` that beat truth-telling.
#[pyfunction]
#[pyo3(signature = (instance, kind, machine, c=7.0, beta=None, delta=2.0/3.0))]
fn ic_audit<'py>(
    py: Python<'py>,
    instance: &Instance,
    kind: &str,
    machine: usize,
    c: f64,
    beta: Option<f64>,
    delta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    if machine >= instance.0.machines() {
        return Err(PyValueError::new_err("machine index out of range"));
    }
    let cfg = mechanism(kind, c, beta, delta)?;
    let v = mech::ic_audit(&cfg, &instance.0, machine, &MisreportGrid::default()).map_err(err)?;
    to_py(py, &v)
}

/// Reserve tunings: `log-ratio`, `double-log-ratio` or `markov` (needs `k`).
#[pyfunction]
#[pyo3(signature = (spec, n, m, rule, delta=2.0/3.0, k=None))]
fn derive_reserve<'py>(
    py: Python<'py>,
    spec: &DistributionSpec,
    n: usize,
    m: usize,
    rule: &str,
    delta: f64,
    k: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let rule = match (rule, k) {
        ("log-ratio", _) => ReserveRule::LogRatio,
        ("double-log-ratio", _) => ReserveRule::DoubleLogRatio,
        ("markov", Some(k)) => ReserveRule::Markov { k },
        ("markov", None) => return Err(PyValueError::new_err("markov rule needs k")),
        _ => return Err(PyValueError::new_err(format!("unknown rule `{rule}`"))),
    };
    to_py(py, &mech::derive_reserve(&spec.0, n, m, delta, rule).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (spec, m, i, trials, seed=0))]
fn check_order_stat_dominance<'py>(
    py: Python<'py>,
    spec: &DistributionSpec,
    m: usize,
    i: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| lemmalab::check_order_stat_dominance(&spec.0, m, i, trials, &mut rng(seed)))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (spec, r, trials, seed=0))]
fn check_mhr_scaling<'py>(
    py: Python<'py>,
    spec: &DistributionSpec,
    r: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = lemmalab::check_mhr_scaling(&spec.0, r, trials, &mut rng(seed)).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn check_min_hazard_identity<'py>(py: Python<'py>, spec: &DistributionSpec, k: usize) -> PyResult<Bound<'py, PyAny>> {
    let grid = lemmalab::hazard_grid(&spec.0).map_err(err)?;
    to_py(py, &lemmalab::check_min_hazard_identity(&spec.0, k, &grid).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (spec, n, m, k, trials, seed=0))]
fn check_sieve_unscheduled<'py>(
    py: Python<'py>,
    spec: &DistributionSpec,
    n: usize,
    m: usize,
    k: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| lemmalab::check_sieve_unscheduled(&spec.0, n, m, k, trials, &mut rng(seed)))
        .map_err(err)?;
    to_py(py, &r)
}

/// Exact correlation-gap ratio for `n` coordinates of which one, chosen
/// uniformly, equals 1.
#[pyfunction]
fn correlation_gap_one_hot<'py>(py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyAny>> {
    let joint = lemmalab::JointDistribution::one_hot(n).map_err(err)?;
    let r = lemmalab::check_correlation_gap(&joint, lemmalab::GapMode::Exact, &mut rng(0)).map_err(err)?;
    to_py(py, &r)
}

/// Runs the verification suite (`all` or one check id).
#[pyfunction]
#[pyo3(signature = (check="all", trials=None, seed=0))]
fn verify<'py>(py: Python<'py>, check: &str, trials: Option<usize>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let check = check.to_string();
    let recs = py
        .detach(move || harness::verify_suite(&check, trials, seed, None))
        .map_err(err)?;
    to_py(py, &recs)
}

/// Seeded campaign. Returns the aggregate report including per-trial rows.
#[pyfunction]
#[pyo3(signature = (
    kind, dist, n, m, trials, seed=0, reference="none", c=7.0, beta=None,
    delta=2.0/3.0, k=None, tuning=None, paired=false, threads=None
))]
#[allow(clippy::too_many_arguments)]
fn run_campaign<'py>(
    py: Python<'py>,
    kind: &str,
    dist: &DistributionSpec,
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
    reference: &str,
    c: f64,
    beta: Option<f64>,
    delta: f64,
    k: Option<f64>,
    tuning: Option<&str>,
    paired: bool,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut mech = mechanism(kind, c, beta, delta)?;
    if let Some(k) = k {
        mech = mech.with_k(k);
    }
    let mut cfg = ExperimentConfig::new(mech, dist.0.clone(), n, m, trials, seed)
        .with_reference(reference.parse::<Reference>().map_err(err)?)
        .with_paired(paired);
    cfg.threads = threads;
    cfg.reserve_rule = match tuning {
        None => None,
        Some("log-ratio") => Some(ReserveRule::LogRatio),
        Some("double-log-ratio") => Some(ReserveRule::DoubleLogRatio),
        Some(t) => return Err(PyValueError::new_err(format!("unknown tuning `{t}`"))),
    };
    let report = py.detach(|| harness::run_campaign(&cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn schedlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<DistributionSpec>()?;
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(solve_min_work, m)?)?;
    m.add_function(wrap_pyfunction!(run_mechanism, m)?)?;
    m.add_function(wrap_pyfunction!(ic_audit, m)?)?;
    m.add_function(wrap_pyfunction!(derive_reserve, m)?)?;
    m.add_function(wrap_pyfunction!(check_order_stat_dominance, m)?)?;
    m.add_function(wrap_pyfunction!(check_mhr_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(check_min_hazard_identity, m)?)?;
    m.add_function(wrap_pyfunction!(check_sieve_unscheduled, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_gap_one_hot, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add("__version__", harness::VERSION)?;
    Ok(())
}
