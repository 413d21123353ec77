use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::topology::{Edge, NodeId, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum FaultKind {
    /// Volatile state is lost; the node handles nothing until it recovers.
    Crash(NodeId),
    /// The node restarts from the zero state.
    Recover(NodeId),
    /// Handler execution time is multiplied by `factor` from now on.
    Slowdown { node: NodeId, factor: f64 },
    /// The listed edges deliver nothing until healed; messages in flight over
    /// them are lost.
    Partition(Vec<Edge>),
    /// Restores the listed edges.
    Heal(Vec<Edge>),
    /// Restores every cut edge.
    HealAll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultEntry {
    pub time: f64,
    pub kind: FaultKind,
}

impl FaultEntry {
    pub fn new(time: f64, kind: FaultKind) -> Self {
        FaultEntry { time, kind }
    }
}

/// Time-ordered list of faults. Entries with equal times keep their
/// insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSchedule {
    entries: Vec<FaultEntry>,
}

impl FaultSchedule {
    pub fn new(mut entries: Vec<FaultEntry>) -> Self {
        entries.sort_by(|a, b| a.time.total_cmp(&b.time));
        FaultSchedule { entries }
    }

    pub fn entries(&self) -> &[FaultEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = FaultEntry>) {
        self.entries.extend(more);
        self.entries.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    /// Checks times, factors and that every node and edge exists.
    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let mut problems = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.time.is_finite() && e.time >= 0.0) {
                problems.push(format!("fault {i}: time must be finite and ≥ 0"));
            }
            match &e.kind {
                FaultKind::Crash(n) | FaultKind::Recover(n) => {
                    if !topo.contains(*n) {
                        problems.push(format!("fault {i}: unknown node {n}"));
                    }
                }
                FaultKind::Slowdown { node, factor } => {
                    if !topo.contains(*node) {
                        problems.push(format!("fault {i}: unknown node {node}"));
                    }
                    if !(factor.is_finite() && *factor > 0.0) {
                        problems.push(format!("fault {i}: slowdown factor must be finite and > 0"));
                    }
                }
                FaultKind::Partition(edges) | FaultKind::Heal(edges) => {
                    for edge in edges {
                        if !topo.has_edge(edge.0, edge.1) {
                            problems.push(format!("fault {i}: ({}, {}) is not an edge", edge.0, edge.1));
                        }
                    }
                }
                FaultKind::HealAll => {}
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// Random crash/recover and single-edge partition/heal episodes.
///
/// Episodes for one node (or one edge) never overlap, and every episode ends
/// before `horizon`, so the run always finishes with the full graph healthy.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFaultPlan {
    pub crashes: usize,
    pub partitions: usize,
    pub min_duration: f64,
    pub max_duration: f64,
}

impl RandomFaultPlan {
    pub fn generate(&self, topo: &Topology, horizon: f64, rng: &mut ChaCha8Rng) -> Result<Vec<FaultEntry>> {
        if !(self.min_duration > 0.0 && self.max_duration >= self.min_duration) {
            return Err(Error::config("random faults need 0 < min_duration ≤ max_duration"));
        }
        let latest_start = horizon - self.max_duration;
        if latest_start <= 0.0 {
            return Err(Error::config("random fault durations exceed the run length"));
        }
        let mut out = Vec::new();
        let mut busy_nodes: Vec<(NodeId, f64, f64)> = Vec::new();
        for _ in 0..self.crashes {
            let node = topo.nodes()[rng.random_range(0..topo.len())];
            let start = rng.random_range(0.0..latest_start);
            let end = start + rng.random_range(self.min_duration..=self.max_duration);
            if busy_nodes.iter().any(|&(n, s, e)| n == node && start <= e && s <= end) {
                continue;
            }
            busy_nodes.push((node, start, end));
            out.push(FaultEntry::new(start, FaultKind::Crash(node)));
            out.push(FaultEntry::new(end, FaultKind::Recover(node)));
        }
        let mut busy_edges: Vec<(Edge, f64, f64)> = Vec::new();
        if !topo.edges().is_empty() {
            for _ in 0..self.partitions {
                let edge = topo.edges()[rng.random_range(0..topo.edges().len())];
                let start = rng.random_range(0.0..latest_start);
                let end = start + rng.random_range(self.min_duration..=self.max_duration);
                if busy_edges.iter().any(|&(x, s, e)| x == edge && start <= e && s <= end) {
                    continue;
                }
                busy_edges.push((edge, start, end));
                out.push(FaultEntry::new(start, FaultKind::Partition(alloc::vec![edge])));
                out.push(FaultEntry::new(end, FaultKind::Heal(alloc::vec![edge])));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{build_topology, TopologySpec};
    use alloc::vec;
    use rand::SeedableRng;

    #[test]
    fn schedule_is_sorted_stably() {
        let s = FaultSchedule::new(vec![
            FaultEntry::new(2.0, FaultKind::Recover(NodeId(1))),
            FaultEntry::new(1.0, FaultKind::Crash(NodeId(1))),
            FaultEntry::new(2.0, FaultKind::HealAll),
        ]);
        let kinds: Vec<_> = s.entries().iter().map(|e| e.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                FaultKind::Crash(NodeId(1)),
                FaultKind::Recover(NodeId(1)),
                FaultKind::HealAll
            ]
        );
    }

    #[test]
    fn validation_reports_every_problem() {
        let topo = build_topology(&TopologySpec::Path(3), true).unwrap();
        let s = FaultSchedule::new(vec![
            FaultEntry::new(-1.0, FaultKind::Crash(NodeId(9))),
            FaultEntry::new(1.0, FaultKind::Partition(vec![Edge::new(NodeId(0), NodeId(2))])),
        ]);
        let Err(Error::Config(msg)) = s.validate(&topo) else {
            panic!("expected a configuration error");
        };
        assert_eq!(msg.matches("fault").count(), 3, "{msg}");
    }

    #[test]
    fn random_episodes_close_before_horizon() {
        let topo = build_topology(&TopologySpec::Path(5), true).unwrap();
        let plan = RandomFaultPlan {
            crashes: 6,
            partitions: 4,
            min_duration: 2.0,
            max_duration: 10.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let entries = plan.generate(&topo, 100.0, &mut rng).unwrap();
        assert!(!entries.is_empty());
        assert!(entries.iter().all(|e| e.time < 100.0));
        let s = FaultSchedule::new(entries);
        s.validate(&topo).unwrap();
        let crashes = s
            .entries()
            .iter()
            .filter(|e| matches!(e.kind, FaultKind::Crash(_)))
            .count();
        let recovers = s
            .entries()
            .iter()
            .filter(|e| matches!(e.kind, FaultKind::Recover(_)))
            .count();
        assert_eq!(crashes, recovers);
    }
}
