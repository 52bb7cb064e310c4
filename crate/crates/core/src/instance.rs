//! Realized scheduling instances: an `n x m` matrix of job runtimes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distkit::DistributionSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n: usize,
    m: usize,
    runtimes: Vec<f64>,
    /// One spec per job, or empty when the matrix was given directly.
    specs: Vec<DistributionSpec>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n: usize,
    m: usize,
    runtimes: Vec<f64>,
    specs: Vec<String>,
}

impl Instance {
    /// Builds an instance from a row-major matrix.
    pub fn new(n: usize, m: usize, runtimes: Vec<f64>, specs: Vec<DistributionSpec>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInstance(format!("need n, m >= 1 (got n={n}, m={m})")));
        }
        if runtimes.len() != n * m {
            return Err(Error::InvalidInstance(format!(
                "matrix has {} entries, expected {n} x {m}",
                runtimes.len()
            )));
        }
        if let Some(bad) = runtimes.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidInstance(format!(
                "runtimes must be finite and nonnegative, found {bad}"
            )));
        }
        if !(specs.is_empty() || specs.len() == n) {
            return Err(Error::InvalidInstance(format!(
                "{} specs for {n} jobs",
                specs.len()
            )));
        }
        Ok(Instance {
            n,
            m,
            runtimes,
            specs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInstance("ragged rows".into()));
        }
        Self::new(n, m, rows.concat(), Vec::new())
    }

    /// Entry `(j, i)` is drawn from `specs[j]`; all entries independent.
    pub fn sample<R: Rng + ?Sized>(specs: &[DistributionSpec], m: usize, rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidInstance("no jobs".into()));
        }
        if m == 0 {
            return Err(Error::InvalidInstance("no machines".into()));
        }
        let mut runtimes = Vec::with_capacity(specs.len() * m);
        for spec in specs {
            runtimes.extend((0..m).map(|_| spec.sample(rng)));
        }
        Ok(Instance {
            n: specs.len(),
            m,
            runtimes,
            specs: specs.to_vec(),
        })
    }

    /// `n` i.i.d. jobs.
    pub fn sample_iid<R: Rng + ?Sized>(spec: &DistributionSpec, n: usize, m: usize, rng: &mut R) -> Result<Self> {
        Self::sample(&vec![spec.clone(); n], m, rng)
    }

    pub fn jobs(&self) -> usize {
        self.n
    }

    pub fn machines(&self) -> usize {
        self.m
    }

    pub fn load_factor(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn specs(&self) -> &[DistributionSpec] {
        &self.specs
    }

    pub fn runtimes(&self) -> &[f64] {
        &self.runtimes
    }

    #[inline]
    pub fn runtime(&self, job: usize, machine: usize) -> f64 {
        self.runtimes[job * self.m + machine]
    }

    pub fn row(&self, job: usize) -> &[f64] {
        &self.runtimes[job * self.m..(job + 1) * self.m]
    }

    /// Replaces machine `machine`'s column (its report vector).
    pub fn with_column(&self, machine: usize, column: &[f64]) -> Result<Self> {
        assert_eq!(column.len(), self.n);
        let mut runtimes = self.runtimes.clone();
        for (j, &v) in column.iter().enumerate() {
            runtimes[j * self.m + machine] = v;
        }
        Self::new(self.n, self.m, runtimes, self.specs.clone())
    }

    pub fn column(&self, machine: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.runtime(j, machine)).collect()
    }

    /// Keeps only the listed jobs (in the given order).
    pub fn select_jobs(&self, jobs: &[usize]) -> Result<Self> {
        let runtimes = jobs.iter().flat_map(|&j| self.row(j).iter().copied()).collect();
        let specs = if self.specs.is_empty() {
            Vec::new()
        } else {
            jobs.iter().map(|&j| self.specs[j].clone()).collect()
        };
        Self::new(jobs.len(), self.m, runtimes, specs)
    }

    /// Keeps only the listed machines (in the given order).
    pub fn select_machines(&self, machines: &[usize]) -> Result<Self> {
        let runtimes = (0..self.n)
            .flat_map(|j| machines.iter().map(move |&i| self.runtime(j, i)))
            .collect();
        Self::new(self.n, machines.len(), runtimes, self.specs.clone())
    }

    /// Minimum of row `job` over `machines`.
    pub fn best_runtime(&self, job: usize, machines: &[usize]) -> Result<f64> {
        if machines.is_empty() {
            return Err(Error::NoMachines);
        }
        Ok(machines
            .iter()
            .map(|&i| self.runtime(job, i))
            .fold(f64::INFINITY, f64::min))
    }

    /// Minimum of row `job` over all machines.
    pub fn best_runtime_all(&self, job: usize) -> f64 {
        self.row(job).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Machines ordered from the job's favorite to its least favorite.
    /// Ties go to the lower machine index.
    pub fn preference_order(&self, job: usize) -> Vec<usize> {
        let row = self.row(job);
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        order
    }

    /// 1-based rank of `machine` in the job's preference order.
    pub fn rank_of(&self, job: usize, machine: usize) -> usize {
        let row = self.row(job);
        let t = row[machine];
        1 + row
            .iter()
            .enumerate()
            .filter(|&(i, &x)| x < t || (x == t && i < machine))
            .count()
    }

    /// `r`-th smallest entry of row `job` (1-based).
    pub fn rank_runtime(&self, job: usize, r: usize) -> Result<f64> {
        if r == 0 || r > self.m {
            return Err(Error::RankOutOfRange { rank: r, max: self.m });
        }
        let mut row = self.row(job).to_vec();
        let (_, nth, _) = row.select_nth_unstable_by(r - 1, f64::total_cmp);
        Ok(*nth)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = InstanceJson {
            n: self.n,
            m: self.m,
            runtimes: self.runtimes.clone(),
            specs: self.specs.iter().map(ToString::to_string).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceJson = serde_json::from_str(text)?;
        let specs = doc
            .specs
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<DistributionSpec>>>()?;
        Self::new(doc.n, doc.m, doc.runtimes, specs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row_instance() -> Instance {
        Instance::from_rows(&[vec![3.0, 1.0, 2.0]]).unwrap()
    }

    #[test]
    fn degenerate_sample() {
        let spec = DistributionSpec::two_point(1.0, 10.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inst = Instance::sample(&[spec], 1, &mut rng).unwrap();
        assert_eq!(inst.runtimes(), &[1.0]);
    }

    #[test]
    fn continuous_entries_distinct() {
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = Instance::sample_iid(&spec, 2, 3, &mut rng).unwrap();
        let mut v = inst.runtimes().to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        assert_eq!(v.len(), 6);
        assert_eq!(inst.load_factor(), 2.0 / 3.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(Instance::new(2, 2, vec![1.0; 3], vec![]).is_err());
        assert!(Instance::new(1, 2, vec![1.0, -1.0], vec![]).is_err());
        assert!(Instance::new(1, 2, vec![1.0, f64::INFINITY], vec![]).is_err());
        assert!(Instance::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Instance::sample(&[], 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn best_runtime_examples() {
        let inst = row_instance();
        assert_eq!(inst.best_runtime(0, &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(inst.best_runtime(0, &[0]).unwrap(), 3.0);
        assert_eq!(inst.best_runtime(0, &[2]).unwrap(), 2.0);
        assert!(inst.best_runtime(0, &[]).is_err());
    }

    #[test]
    fn rank_runtime_examples() {
        let inst = row_instance();
        assert_eq!(inst.rank_runtime(0, 1).unwrap(), 1.0);
        assert_eq!(inst.rank_runtime(0, 2).unwrap(), 2.0);
        assert_eq!(inst.rank_runtime(0, 3).unwrap(), 3.0);
        assert!(inst.rank_runtime(0, 0).is_err());
        assert!(inst.rank_runtime(0, 4).is_err());
    }

    #[test]
    fn preference_order_breaks_ties_by_index() {
        let inst = Instance::from_rows(&[vec![2.0, 1.0, 2.0, 1.0]]).unwrap();
        assert_eq!(inst.preference_order(0), vec![1, 3, 0, 2]);
        assert_eq!(inst.rank_of(0, 1), 1);
        assert_eq!(inst.rank_of(0, 3), 2);
        assert_eq!(inst.rank_of(0, 0), 3);
        assert_eq!(inst.rank_of(0, 2), 4);
    }

    #[test]
    fn json_fixture_roundtrip() {
        let spec = DistributionSpec::exponential(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = Instance::sample_iid(&spec, 3, 2, &mut rng).unwrap();
        let text = inst.to_json().unwrap();
        assert!(text.contains("\"specs\":[\"exp:1\",\"exp:1\",\"exp:1\"]"));
        assert_eq!(Instance::from_json(&text).unwrap(), inst);

        let fixture = r#"{"n":2,"m":2,"runtimes":[1,10,2,100],"specs":[]}"#;
        let inst = Instance::from_json(fixture).unwrap();
        assert_eq!(inst.runtime(1, 1), 100.0);
    }
}
