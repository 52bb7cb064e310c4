//! Exact minimum-total-work assignment.
//!
//! The range of admissible schedules is shaped by a [`RangeConstraint`]:
//! an optional per-machine job cap, an optional reserve (a dummy machine
//! with runtime `beta` for every job and unbounded capacity; jobs placed
//! there are unscheduled) and a set of excluded machines.
//!
//! Without a cap every job independently takes its cheapest option. With a
//! cap the problem is a transportation problem, solved by inserting jobs one
//! at a time along shortest augmenting paths in the machine exchange graph
//! (an edge `a -> b` moves one job currently on `a` to `b`). Each insertion
//! keeps the partial assignment optimal, so the final schedule is optimal.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::{Error, Result};

/// Upper bound on the number of assignments enumerated by the oracles.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// Absolute tolerance for comparing total work between solvers.
pub const WORK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Machine per job; `None` means unscheduled (sent to the dummy).
    pub assignment: Vec<Option<usize>>,
    pub loads: Vec<usize>,
    pub works: Vec<f64>,
    pub total_work: f64,
    pub makespan: f64,
    /// Total work plus `beta` for each unscheduled job.
    pub objective: f64,
}

impl Schedule {
    pub fn from_assignment(inst: &Instance, assignment: Vec<Option<usize>>, reserve: Option<f64>) -> Self {
        let m = inst.machines();
        let mut loads = vec![0; m];
        let mut works = vec![0.0; m];
        let mut unscheduled = 0usize;
        for (j, a) in assignment.iter().enumerate() {
            match a {
                Some(i) => {
                    loads[*i] += 1;
                    works[*i] += inst.runtime(j, *i);
                }
                None => unscheduled += 1,
            }
        }
        let total_work: f64 = works.iter().sum();
        let makespan = works.iter().copied().fold(0.0, f64::max);
        let objective = if unscheduled == 0 {
            total_work
        } else {
            total_work + unscheduled as f64 * reserve.expect("unscheduled jobs need a reserve")
        };
        Schedule {
            assignment,
            loads,
            works,
            total_work,
            makespan,
            objective,
        }
    }

    pub fn max_load(&self) -> usize {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    pub fn unscheduled(&self) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(j, a)| a.is_none().then_some(j))
            .collect()
    }

    pub fn unscheduled_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }
}

/// Restriction of the schedule range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeConstraint {
    pub cap: Option<usize>,
    pub reserve: Option<f64>,
    pub excluded: Vec<usize>,
}

impl RangeConstraint {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn with_reserve(mut self, beta: f64) -> Self {
        self.reserve = Some(beta);
        self
    }

    pub fn excluding(mut self, machine: usize) -> Self {
        if !self.excluded.contains(&machine) {
            self.excluded.push(machine);
        }
        self
    }

    fn validate(&self) -> Result<()> {
        if self.cap == Some(0) {
            return Err(Error::InvalidParameters("cap must be >= 1".into()));
        }
        if let Some(b) = self.reserve {
            if b.is_nan() || b < 0.0 {
                return Err(Error::InvalidParameters(format!("reserve must be >= 0, got {b}")));
            }
        }
        Ok(())
    }

    fn available(&self, m: usize) -> Vec<usize> {
        (0..m).filter(|i| !self.excluded.contains(i)).collect()
    }

    /// An infinite reserve never binds, so it is treated as absent.
    fn finite_reserve(&self) -> Option<f64> {
        self.reserve.filter(|b| b.is_finite())
    }
}

/// Node set of the assignment problem: available machines, then the dummy.
struct Nodes<'a> {
    inst: &'a Instance,
    machines: Vec<usize>,
    reserve: Option<f64>,
    cap: usize,
}

impl Nodes<'_> {
    fn len(&self) -> usize {
        self.machines.len() + usize::from(self.reserve.is_some())
    }

    fn is_dummy(&self, v: usize) -> bool {
        v == self.machines.len()
    }

    #[inline]
    fn cost(&self, job: usize, v: usize) -> f64 {
        if self.is_dummy(v) {
            self.reserve.unwrap()
        } else {
            self.inst.runtime(job, self.machines[v])
        }
    }

    fn capacity(&self, v: usize) -> usize {
        if self.is_dummy(v) {
            usize::MAX
        } else {
            self.cap
        }
    }

    fn argmin(&self, job: usize) -> usize {
        let mut best = 0;
        let mut best_cost = self.cost(job, 0);
        for v in 1..self.len() {
            let c = self.cost(job, v);
            if c < best_cost {
                best = v;
                best_cost = c;
            }
        }
        best
    }

    fn to_schedule(&self, node_of: &[usize]) -> Schedule {
        let assignment = node_of
            .iter()
            .map(|&v| (!self.is_dummy(v)).then(|| self.machines[v]))
            .collect();
        Schedule::from_assignment(self.inst, assignment, self.reserve)
    }
}

fn setup<'a>(inst: &'a Instance, rc: &RangeConstraint) -> Result<Nodes<'a>> {
    rc.validate()?;
    let machines = rc.available(inst.machines());
    let reserve = rc.finite_reserve();
    let n = inst.jobs();
    if reserve.is_none() {
        if machines.is_empty() {
            return Err(Error::NoMachines);
        }
        if let Some(cap) = rc.cap {
            if cap.saturating_mul(machines.len()) < n {
                return Err(Error::InfeasibleCapacity {
                    cap,
                    machines: machines.len(),
                    jobs: n,
                });
            }
        }
    }
    Ok(Nodes {
        inst,
        machines,
        reserve,
        cap: rc.cap.unwrap_or(usize::MAX),
    })
}

/// Minimum-total-work schedule within the constrained range.
///
/// Uncapacitated jobs go to their cheapest machine, ties to the lowest
/// index; with a reserve a job is unscheduled iff its best available
/// runtime exceeds `beta` strictly.
pub fn solve_min_work(inst: &Instance, rc: &RangeConstraint) -> Result<Schedule> {
    let nodes = setup(inst, rc)?;
    let n = inst.jobs();
    if nodes.len() == 0 {
        return Err(Error::NoMachines);
    }
    if rc.cap.is_none_or(|cap| cap >= n) {
        let node_of: Vec<usize> = (0..n).map(|j| nodes.argmin(j)).collect();
        return Ok(nodes.to_schedule(&node_of));
    }
    Ok(nodes.to_schedule(&capacitated(&nodes)))
}

fn capacitated(nodes: &Nodes<'_>) -> Vec<usize> {
    let n = nodes.inst.jobs();
    let nv = nodes.len();
    let mut node_of = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nv];

    let mut dist = vec![0.0; nv];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; nv];
    let mut in_queue = vec![false; nv];
    let mut queue = VecDeque::with_capacity(nv);

    for j in 0..n {
        let fav = nodes.argmin(j);
        if members[fav].len() < nodes.capacity(fav) {
            node_of[j] = fav;
            members[fav].push(j);
            continue;
        }

        // shortest paths from the new job over the exchange graph (SPFA)
        for v in 0..nv {
            dist[v] = nodes.cost(j, v);
            pred[v] = None;
            in_queue[v] = true;
            queue.push_back(v);
        }
        let mut relaxations = 0usize;
        let limit = nv * nv * (n + 1);
        while let Some(u) = queue.pop_front() {
            in_queue[u] = false;
            for &moved in &members[u] {
                let leave = nodes.cost(moved, u);
                for v in 0..nv {
                    if v == u {
                        continue;
                    }
                    let cand = dist[u] + nodes.cost(moved, v) - leave;
                    if cand < dist[v] - 1e-12 * (1.0 + dist[v].abs()) {
                        dist[v] = cand;
                        pred[v] = Some((u, moved));
                        if !in_queue[v] {
                            in_queue[v] = true;
                            queue.push_back(v);
                        }
                    }
                }
            }
            relaxations += 1;
            if relaxations > limit {
                // Only reachable through float noise near a zero-cost cycle.
                queue.clear();
                break;
            }
        }

        let mut target = usize::MAX;
        for v in 0..nv {
            if members[v].len() < nodes.capacity(v) && (target == usize::MAX || dist[v] < dist[target]) {
                target = v;
            }
        }
        debug_assert!(target != usize::MAX, "feasibility checked in setup");

        // walk the path back, shifting one job along each edge
        let mut v = target;
        let mut steps = 0;
        while let Some((u, moved)) = pred[v] {
            let pos = members[u].iter().position(|&x| x == moved).expect("member");
            members[u].swap_remove(pos);
            members[v].push(moved);
            node_of[moved] = v;
            v = u;
            steps += 1;
            assert!(steps <= nv, "augmenting path must be simple");
        }
        node_of[j] = v;
        members[v].push(j);
    }
    node_of
}

fn enumeration_guard(options: usize, n: usize) -> Result<()> {
    let count = (options as f64).powi(n as i32);
    if count > ENUMERATION_LIMIT as f64 {
        return Err(Error::TooLarge {
            assignments: count,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Calls `visit` with every assignment of `n` jobs to `options` choices in
/// lexicographic order (job 0 most significant).
fn for_each_assignment(n: usize, options: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; n];
    loop {
        visit(&idx);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < options {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Exhaustive oracle for [`solve_min_work`]. Among equal-cost optima it
/// returns the lexicographically first by (job, machine), dummy last.
pub fn brute_force_min_work(inst: &Instance, rc: &RangeConstraint) -> Result<Schedule> {
    let nodes = setup(inst, rc)?;
    let nv = nodes.len();
    if nv == 0 {
        return Err(Error::NoMachines);
    }
    let n = inst.jobs();
    enumeration_guard(nv, n)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut loads = vec![0usize; nv];
    for_each_assignment(n, nv, |a| {
        loads.iter_mut().for_each(|l| *l = 0);
        for &v in a {
            loads[v] += 1;
        }
        if (0..nv).any(|v| loads[v] > nodes.capacity(v)) {
            return;
        }
        let cost: f64 = a.iter().enumerate().map(|(j, &v)| nodes.cost(j, v)).sum();
        if best.as_ref().is_none_or(|(b, _)| cost < b - WORK_TOLERANCE) {
            best = Some((cost, a.to_vec()));
        }
    });
    let (_, node_of) = best.expect("feasibility checked in setup");
    Ok(nodes.to_schedule(&node_of))
}

/// Minimum makespan over all assignments, ignoring incentives.
pub fn first_best_makespan_exact(inst: &Instance) -> Result<f64> {
    let (n, m) = (inst.jobs(), inst.machines());
    enumeration_guard(m, n)?;
    let mut best = f64::INFINITY;
    let mut works = vec![0.0; m];
    for_each_assignment(n, m, |a| {
        works.iter_mut().for_each(|w| *w = 0.0);
        for (j, &i) in a.iter().enumerate() {
            works[i] += inst.runtime(j, i);
        }
        best = best.min(works.iter().copied().fold(0.0, f64::max));
    });
    Ok(best)
}

/// Greedy first-best reference: jobs in decreasing order of best runtime,
/// each on the machine that minimizes its resulting work (ties to the
/// lowest index).
pub fn first_best_makespan_greedy(inst: &Instance) -> f64 {
    let (n, m) = (inst.jobs(), inst.machines());
    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (inst.best_runtime_all(j), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut works = vec![0.0; m];
    for (_, j) in order {
        let row = inst.row(j);
        let mut best = 0;
        for i in 1..m {
            if works[i] + row[i] < works[best] + row[best] {
                best = i;
            }
        }
        works[best] += row[best];
    }
    works.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(r: &[&[f64]]) -> Instance {
        Instance::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn uncapacitated_argmin_with_index_ties() {
        let inst = rows(&[&[1.0, 3.0], &[2.0, 2.0]]);
        let s = solve_min_work(&inst, &RangeConstraint::none()).unwrap();
        assert_eq!(s.assignment, vec![Some(0), Some(0)]);
        assert_eq!(s.total_work, 3.0);
        assert_eq!(s.loads, vec![2, 0]);
        assert_eq!(s.makespan, 3.0);
    }

    #[test]
    fn cap_one_forces_swap() {
        let inst = rows(&[&[1.0, 10.0], &[2.0, 100.0]]);
        let rc = RangeConstraint::none().with_cap(1);
        let s = solve_min_work(&inst, &rc).unwrap();
        assert_eq!(s.assignment, vec![Some(1), Some(0)]);
        assert_eq!(s.total_work, 12.0);
        let b = brute_force_min_work(&inst, &rc).unwrap();
        assert_eq!(b.total_work, 12.0);
        assert_eq!(b.assignment, s.assignment);
    }

    #[test]
    fn reserve_threshold() {
        let inst = rows(&[&[3.0, 4.0], &[7.0, 8.0]]);
        let s = solve_min_work(&inst, &RangeConstraint::none().with_reserve(5.0)).unwrap();
        assert_eq!(s.assignment, vec![Some(0), None]);
        assert_eq!(s.unscheduled(), vec![1]);
        assert_eq!(s.objective, 8.0);
        // ties stay scheduled
        let s = solve_min_work(&inst, &RangeConstraint::none().with_reserve(7.0)).unwrap();
        assert_eq!(s.unscheduled_count(), 0);
    }

    #[test]
    fn reserve_without_machines_sends_everything_to_dummy() {
        let inst = rows(&[&[3.0], &[1.0]]);
        let rc = RangeConstraint::none().with_reserve(2.0).excluding(0);
        let s = solve_min_work(&inst, &rc).unwrap();
        assert_eq!(s.assignment, vec![None, None]);
        assert_eq!(s.objective, 4.0);
    }

    #[test]
    fn errors() {
        let inst = rows(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert!(matches!(
            solve_min_work(&inst, &RangeConstraint::none().with_cap(1)),
            Err(Error::InfeasibleCapacity { .. })
        ));
        assert!(matches!(
            solve_min_work(&inst, &RangeConstraint::none().excluding(0).excluding(1)),
            Err(Error::NoMachines)
        ));
        assert!(solve_min_work(&inst, &RangeConstraint::none().with_cap(0)).is_err());
        assert!(solve_min_work(&inst, &RangeConstraint::none().with_reserve(-1.0)).is_err());
        // a reserve absorbs any overflow
        let s = solve_min_work(&inst, &RangeConstraint::none().with_cap(1).with_reserve(5.0)).unwrap();
        assert_eq!(s.unscheduled_count(), 1);
        assert_eq!(s.total_work, 3.0);
    }

    #[test]
    fn brute_force_small_cases() {
        let inst = rows(&[&[4.0, 2.0, 3.0]]);
        let s = brute_force_min_work(&inst, &RangeConstraint::none()).unwrap();
        assert_eq!(s.assignment, vec![Some(1)]);
        let flat = Instance::new(4, 2, vec![5.0; 8], vec![]).unwrap();
        let s = brute_force_min_work(&flat, &RangeConstraint::none().with_cap(2)).unwrap();
        assert_eq!(s.total_work, 20.0);
        assert_eq!(s.loads, vec![2, 2]);
        let big = Instance::new(7, 8, vec![1.0; 56], vec![]).unwrap();
        assert!(matches!(
            brute_force_min_work(&big, &RangeConstraint::none()),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn first_best_examples() {
        let inst = rows(&[&[1.0, 3.0], &[2.0, 2.0]]);
        assert_eq!(first_best_makespan_exact(&inst).unwrap(), 2.0);
        let single = rows(&[&[1.0], &[2.5], &[4.0]]);
        assert_eq!(first_best_makespan_exact(&single).unwrap(), 7.5);
        assert_eq!(first_best_makespan_greedy(&single), 7.5);
        let one = rows(&[&[4.0, 2.0, 3.0]]);
        assert_eq!(first_best_makespan_exact(&one).unwrap(), 2.0);
        assert_eq!(first_best_makespan_greedy(&one), 2.0);
    }

    #[test]
    fn greedy_breaks_ties_toward_lower_index() {
        // job 1 (best 2) goes first and ties onto machine 0; job 0 then ties
        // at work 3 on both machines, so greedy ends at 3 while the optimum is 2
        let inst = rows(&[&[1.0, 3.0], &[2.0, 2.0]]);
        assert_eq!(first_best_makespan_greedy(&inst), 3.0);
        assert!(first_best_makespan_greedy(&inst) >= first_best_makespan_exact(&inst).unwrap());
    }

    #[test]
    fn capacitated_needs_multi_hop_paths() {
        // three jobs all favor machine 0, cap 1: optimum is a 3-cycle shift
        let inst = rows(&[&[1.0, 2.0, 9.0], &[1.0, 9.0, 2.0], &[1.0, 5.0, 5.0]]);
        let rc = RangeConstraint::none().with_cap(1);
        let s = solve_min_work(&inst, &rc).unwrap();
        let b = brute_force_min_work(&inst, &rc).unwrap();
        assert!((s.total_work - b.total_work).abs() < WORK_TOLERANCE);
        // j0 -> 1, j1 -> 2, j2 -> 0
        assert_eq!(s.total_work, 5.0);
        assert_eq!(s.assignment, vec![Some(1), Some(2), Some(0)]);
    }
}
