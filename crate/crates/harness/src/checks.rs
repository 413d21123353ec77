//! Post-hoc protocol checks over a finished run.
//!
//! Everything here reads only the run output (update rows, state changes,
//! regret rows and the fault log), so the same checks apply to any run.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use dmbsim_core::record::{ChangeCause, RunOutput};
use dmbsim_core::simnet::{Edge, NodeId};

use crate::periods::BadInterval;

/// Gradient reuse audit for the asynchronous protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UniquenessReport {
    pub updates: u64,
    /// Distinct examples whose gradient entered at least one update.
    pub examples_used: u64,
    /// Examples listed twice inside a single update.
    pub duplicated_in_update: u64,
    /// Updates whose provenance length differs from their batch count.
    pub count_mismatches: u64,
    /// Gradients applied to a predictor other than the one they were taken at.
    pub stale: u64,
    /// Examples used by updates with different parents, that is by two
    /// updates on one lineage chain.
    pub reused_on_chain: u64,
    /// Examples shared by concurrent updates of the same parent on different
    /// nodes. Allowed: these updates belong to competing branches of which
    /// at most one survives on any chain.
    pub shared_by_siblings: u64,
}

impl UniquenessReport {
    pub fn violations(&self) -> u64 {
        self.duplicated_in_update + self.count_mismatches + self.stale + self.reused_on_chain
    }
}

/// `None` when the run did not record provenance.
pub fn gradient_uniqueness(out: &RunOutput) -> Option<UniquenessReport> {
    let at: HashMap<u64, u64> = out.regret.rows().iter().map(|r| (r.seq_id, r.gradient_at)).collect();
    let mut r = UniquenessReport::default();
    // seq → (parent of first use, number of uses)
    let mut uses: HashMap<u64, (u64, u64)> = HashMap::new();
    let mut reused = BTreeSet::new();
    for u in &out.updates {
        let prov = u.provenance.as_ref()?;
        r.updates += 1;
        if prov.len() as u64 != u.batch_count {
            r.count_mismatches += 1;
        }
        let mut sorted = prov.clone();
        sorted.sort_unstable();
        let before = sorted.len();
        sorted.dedup();
        r.duplicated_in_update += (before - sorted.len()) as u64;
        for s in &sorted {
            if at.get(s) != Some(&u.parent) {
                r.stale += 1;
            }
            let e = uses.entry(*s).or_insert((u.parent, 0));
            e.1 += 1;
            if e.0 != u.parent {
                reused.insert(*s);
            }
        }
    }
    r.examples_used = uses.len() as u64;
    r.reused_on_chain = reused.len() as u64;
    r.shared_by_siblings = uses.iter().filter(|(s, (_, n))| *n > 1 && !reused.contains(*s)).count() as u64;
    Some(r)
}

/// Piecewise-constant version and lineage of every node.
#[derive(Debug, Clone)]
pub struct Timeline {
    nodes: Vec<NodeId>,
    /// Per node: `(time, version, lineage, alive)` in time order.
    steps: Vec<Vec<(f64, u64, u64, bool)>>,
    /// Every change as `(time, node index, version, alive)` in time order.
    changes: Vec<(f64, usize, u64, bool)>,
}

impl Timeline {
    pub fn new(out: &RunOutput) -> Self {
        let nodes = out.topology.nodes().to_vec();
        let mut steps = vec![Vec::new(); nodes.len()];
        let mut changes = Vec::new();
        let mut states = out.states.clone();
        states.sort_by(|a, b| a.time.total_cmp(&b.time));
        for s in &states {
            let Some(i) = out.topology.index_of(s.node) else {
                continue;
            };
            let alive = s.cause != ChangeCause::Crash;
            steps[i].push((s.time, s.version, s.lineage, alive));
            changes.push((s.time, i, s.version, alive));
        }
        Timeline { nodes, steps, changes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// `(version, lineage, alive)` after every change at or before `time`.
    pub fn at(&self, node: usize, time: f64) -> (u64, u64, bool) {
        let s = &self.steps[node];
        let k = s.partition_point(|x| x.0 <= time);
        if k == 0 {
            (0, 0, false)
        } else {
            let (_, v, l, a) = s[k - 1];
            (v, l, a)
        }
    }

    fn versions_at(&self, time: f64) -> Vec<(u64, bool)> {
        (0..self.nodes.len())
            .map(|i| {
                let (v, _, a) = self.at(i, time);
                (v, a)
            })
            .collect()
    }

    /// Earliest time in `[from, until]` at which every node is alive with a
    /// version of at least `v`.
    pub fn all_reach(&self, v: u64, from: f64, until: f64) -> Option<f64> {
        let mut cur = self.versions_at(from);
        let done = |c: &[(u64, bool)]| c.iter().all(|(x, a)| *a && *x >= v);
        if done(&cur) {
            return Some(from);
        }
        let k = self.changes.partition_point(|c| c.0 <= from);
        for &(t, i, ver, alive) in &self.changes[k..] {
            if t > until {
                break;
            }
            cur[i] = (ver, alive);
            if done(&cur) {
                return Some(t);
            }
        }
        None
    }

    pub fn max_version(&self, members: &[usize], time: f64) -> u64 {
        members.iter().map(|i| self.at(*i, time).0).max().unwrap_or(0)
    }
}

fn clean(bad: &[BadInterval], a: f64, b: f64) -> bool {
    !bad.iter().any(|x| x.overlaps(a, b))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PropagationReport {
    pub windows: u64,
    pub violations: u64,
    /// Largest observed time for a version to reach every node.
    pub worst_lag: f64,
    pub bound: f64,
}

/// Every update and every recovery is a trigger: some node holds version `v`
/// at `T0`. When all nodes stay good on `[T0, T0 + bound]`, every node must
/// hold at least `v` by the end of that window.
pub fn propagation(out: &RunOutput, tl: &Timeline, bad: &[BadInterval], bound: f64) -> PropagationReport {
    let mut triggers: Vec<(f64, u64)> = out
        .states
        .iter()
        .filter(|s| s.cause == ChangeCause::Update)
        .map(|s| (s.time, s.version))
        .collect();
    let all: Vec<usize> = (0..tl.nodes().len()).collect();
    for f in &out.faults {
        if matches!(f.kind, dmbsim_core::simnet::FaultKind::Recover(_)) {
            triggers.push((f.time, tl.max_version(&all, f.time)));
        }
    }
    let mut r = PropagationReport {
        bound,
        ..Default::default()
    };
    for (t0, v) in triggers {
        let t1 = t0 + bound;
        if t1 > out.end_time || !clean(bad, t0, t1) {
            continue;
        }
        if tl.versions_at(t0).iter().any(|(_, a)| !a) {
            continue;
        }
        r.windows += 1;
        match tl.all_reach(v, t0, t1) {
            Some(t) => r.worst_lag = r.worst_lag.max(t - t0),
            None => r.violations += 1,
        }
    }
    r
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CadenceReport {
    pub windows: u64,
    pub violations: u64,
    /// Most examples serviced between every node reaching `v` and every node
    /// reaching `v+1`.
    pub worst_examples: u64,
    pub bound: f64,
}

/// Each time the minimum version over all nodes rises to `v`, counts the
/// examples serviced until it reaches `v+1`; windows touching a bad interval
/// are skipped. A window still open at the end of the run fails only if it
/// has already seen more than `bound` examples.
pub fn update_cadence(out: &RunOutput, tl: &Timeline, bad: &[BadInterval], bound: f64) -> CadenceReport {
    let times: Vec<f64> = out.regret.rows().iter().map(|r| r.time).collect();
    let count = |a: f64, b: f64| (times.partition_point(|t| *t <= b) - times.partition_point(|t| *t <= a)) as u64;
    let n = tl.nodes().len();
    let mut cur: Vec<Option<u64>> = vec![None; n];
    let mut r = CadenceReport {
        bound,
        ..Default::default()
    };
    let mut open: Option<(f64, u64)> = None;
    let mut min_prev: Option<u64> = None;
    let mut k = 0;
    while k < tl.changes.len() {
        // Apply every change at one instant before reading the minimum.
        let t = tl.changes[k].0;
        while k < tl.changes.len() && tl.changes[k].0 == t {
            let (_, i, v, alive) = tl.changes[k];
            cur[i] = alive.then_some(v);
            k += 1;
        }
        let min = if cur.iter().all(Option::is_some) {
            cur.iter().map(|x| x.unwrap()).min()
        } else {
            None
        };
        match (min_prev, min) {
            (_, None) => open = None,
            (Some(a), Some(b)) if b > a => {
                if let Some((start, _)) = open.take() {
                    if clean(bad, start, t) {
                        let c = count(start, t);
                        r.windows += 1;
                        r.worst_examples = r.worst_examples.max(c);
                        if c as f64 > bound {
                            r.violations += 1;
                        }
                    }
                }
                open = Some((t, b));
            }
            (Some(a), Some(b)) if b < a => open = Some((t, b)),
            (None, Some(b)) => open = Some((t, b)),
            _ => {}
        }
        min_prev = min;
    }
    if let Some((start, _)) = open {
        let c = count(start, out.end_time);
        if c as f64 > bound && clean(bad, start, out.end_time) {
            r.windows += 1;
            r.violations += 1;
            r.worst_examples = r.worst_examples.max(c);
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub split: f64,
    pub heal: f64,
    pub components: Vec<Vec<NodeId>>,
    /// Per component: largest version at the split and at the heal.
    pub progress: Vec<(u64, u64)>,
    /// Time at which lineages were compared.
    pub settle: f64,
    /// Component whose split-era updates every node's lineage descends from.
    pub winner: Option<usize>,
    pub converged: bool,
}

impl PartitionReport {
    pub fn all_progressed(&self) -> bool {
        self.progress.iter().all(|(a, b)| b > a)
    }

    pub fn passed(&self) -> bool {
        self.all_progressed() && self.converged
    }
}

/// Splits the topology along `cut` during `[split, heal)` and checks that
/// every component kept updating, and that `settle` time-units after the
/// heal every node's lineage contains split-era updates from one and the
/// same component only.
pub fn partition(out: &RunOutput, tl: &Timeline, cut: &[Edge], split: f64, heal: f64, settle: f64) -> PartitionReport {
    let cut: BTreeSet<Edge> = cut.iter().copied().collect();
    let components = out.topology.components(&cut, |_| true);
    let comp_of: BTreeMap<NodeId, usize> = components
        .iter()
        .enumerate()
        .flat_map(|(c, ns)| ns.iter().map(move |n| (*n, c)))
        .collect();
    let idx = |ns: &[NodeId]| -> Vec<usize> { ns.iter().filter_map(|n| out.topology.index_of(*n)).collect() };
    let progress = components
        .iter()
        .map(|ns| {
            let m = idx(ns);
            (tl.max_version(&m, split), tl.max_version(&m, heal))
        })
        .collect();

    let parent: HashMap<u64, (u64, NodeId, f64)> = out
        .updates
        .iter()
        .map(|u| (u.child, (u.parent, u.node, u.time)))
        .collect();
    let at = heal + settle;
    let mut winners = BTreeSet::new();
    let mut converged = at <= out.end_time;
    for i in 0..tl.nodes().len() {
        let (_, mut key, alive) = tl.at(i, at);
        converged &= alive;
        let mut seen = BTreeSet::new();
        let mut guard = 0;
        while let Some(&(p, node, time)) = parent.get(&key) {
            if (split..heal).contains(&time) {
                seen.insert(comp_of[&node]);
            }
            key = p;
            guard += 1;
            if guard > out.updates.len() {
                break;
            }
        }
        converged &= seen.len() == 1;
        winners.extend(seen);
    }
    converged &= winners.len() == 1;
    PartitionReport {
        split,
        heal,
        components,
        progress,
        settle: at,
        winner: if winners.len() == 1 {
            winners.first().copied()
        } else {
            None
        },
        converged,
    }
}

/// Largest number of inputs serviced at a closed version whose gradients
/// never entered the update that closed it, over updates after `after`.
pub fn max_dropped(out: &RunOutput, after: f64) -> u64 {
    out.dropped_per_update()
        .iter()
        .zip(&out.updates)
        .filter(|(_, u)| u.time > after)
        .map(|((_, d), _)| *d)
        .max()
        .unwrap_or(0)
}
