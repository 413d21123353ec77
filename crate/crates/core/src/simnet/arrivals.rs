use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::topology::NodeId;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalPattern {
    /// Evenly spaced global ticks `φ + n/M` with a random phase `φ ∈ [0, 1/M)`.
    /// Every half-open window of length one holds exactly `M` ticks.
    #[default]
    Paced,
    /// `M` uniform times inside each aligned window `[u, u+1)`.
    Jittered,
}

/// A global arrival process of `rate` examples per time-unit, shared among
/// the serving nodes in proportion to their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSpec {
    pub rate: u32,
    pub weights: Vec<(NodeId, f64)>,
    pub pattern: ArrivalPattern,
    pub total: u64,
}

impl ArrivalSpec {
    pub fn uniform(nodes: &[NodeId], rate: u32, total: u64) -> Self {
        ArrivalSpec {
            rate,
            weights: nodes.iter().map(|n| (*n, 1.0)).collect(),
            pattern: ArrivalPattern::Paced,
            total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate > 0 && self.weights.is_empty() {
            return Err(Error::config("arrivals need at least one serving node"));
        }
        if self.weights.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("arrival weights must be finite and > 0"));
        }
        let mut ids: Vec<NodeId> = self.weights.iter().map(|(n, _)| *n).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.weights.len() {
            return Err(Error::config("arrival weights list a node twice"));
        }
        Ok(())
    }

    /// Time by which every arrival has been emitted.
    pub fn horizon(&self) -> f64 {
        if self.rate == 0 {
            0.0
        } else {
            libm::ceil(self.total as f64 / self.rate as f64)
        }
    }

    /// Share of `rate` a node receives per time-unit.
    pub fn node_share(&self, node: NodeId) -> f64 {
        let total: f64 = self.weights.iter().map(|(_, w)| w).sum();
        self.weights
            .iter()
            .find(|(n, _)| *n == node)
            .map_or(0.0, |(_, w)| self.rate as f64 * w / total)
    }
}

/// Lazily generated `(time, node)` arrivals in nondecreasing time order.
///
/// Nodes are chosen by smooth weighted round-robin, so with integer weight
/// ratios dividing `rate` each node receives exactly its share in every
/// block of `rate` consecutive arrivals.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    spec: ArrivalSpec,
    rng: ChaCha8Rng,
    emitted: u64,
    phase: f64,
    window: u64,
    pending: Vec<f64>,
    credit: Vec<f64>,
    weight_sum: f64,
}

impl ArrivalStream {
    pub fn new(spec: ArrivalSpec, mut rng: ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let phase = if spec.rate == 0 {
            0.0
        } else {
            rng.random_range(0.0..1.0 / spec.rate as f64)
        };
        let weight_sum = spec.weights.iter().map(|(_, w)| w).sum();
        Ok(ArrivalStream {
            credit: alloc::vec![0.0; spec.weights.len()],
            spec,
            rng,
            emitted: 0,
            phase,
            window: 0,
            pending: Vec::new(),
            weight_sum,
        })
    }

    pub fn spec(&self) -> &ArrivalSpec {
        &self.spec
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    fn next_node(&mut self) -> NodeId {
        let mut best = 0;
        for (i, (_, w)) in self.spec.weights.iter().enumerate() {
            self.credit[i] += w;
            if self.credit[i] > self.credit[best] {
                best = i;
            }
        }
        self.credit[best] -= self.weight_sum;
        self.spec.weights[best].0
    }

    fn next_time(&mut self) -> f64 {
        let m = self.spec.rate as f64;
        match self.spec.pattern {
            ArrivalPattern::Paced => self.phase + self.emitted as f64 / m,
            ArrivalPattern::Jittered => {
                if self.pending.is_empty() {
                    let base = self.window as f64;
                    self.pending = (0..self.spec.rate).map(|_| base + self.rng.random::<f64>()).collect();
                    // Popped from the back, so sort descending.
                    self.pending.sort_by(|a, b| b.total_cmp(a));
                    self.window += 1;
                }
                self.pending.pop().expect("window refilled")
            }
        }
    }
}

impl Iterator for ArrivalStream {
    type Item = (f64, NodeId);

    fn next(&mut self) -> Option<Self::Item> {
        if self.spec.rate == 0 || self.emitted >= self.spec.total {
            return None;
        }
        let t = self.next_time();
        let node = self.next_node();
        self.emitted += 1;
        Some((t, node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeMap;
    use alloc::vec;
    use rand::SeedableRng;

    fn nodes(k: u32) -> Vec<NodeId> {
        (0..k).map(NodeId).collect()
    }

    fn stream(spec: ArrivalSpec, seed: u64) -> Vec<(f64, NodeId)> {
        ArrivalStream::new(spec, ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .collect()
    }

    #[test]
    fn zero_rate_emits_nothing() {
        assert!(stream(ArrivalSpec::uniform(&nodes(3), 0, 100), 1).is_empty());
    }

    /// Counts arrivals in each aligned unit window.
    fn per_window(arrivals: &[(f64, NodeId)]) -> BTreeMap<(i64, Option<NodeId>), u64> {
        let mut counts = BTreeMap::new();
        for (t, n) in arrivals {
            let w = libm::floor(*t) as i64;
            *counts.entry((w, None)).or_insert(0) += 1;
            *counts.entry((w, Some(*n))).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn cap_holds_for_both_patterns() {
        for pattern in [ArrivalPattern::Paced, ArrivalPattern::Jittered] {
            let mut spec = ArrivalSpec::uniform(&nodes(3), 6, 600);
            spec.pattern = pattern;
            let arrivals = stream(spec, 9);
            assert_eq!(arrivals.len(), 600);
            assert!(arrivals.iter().all(|(t, _)| *t < 100.0));
            for ((_, node), c) in per_window(&arrivals) {
                assert!(c <= if node.is_some() { 2 } else { 6 });
            }
            assert!(arrivals.windows(2).all(|p| p[0].0 <= p[1].0));
        }
    }

    #[test]
    fn paced_sliding_windows_hold_exactly_rate() {
        let arrivals = stream(ArrivalSpec::uniform(&nodes(2), 5, 200), 4);
        let times: Vec<f64> = arrivals.iter().map(|a| a.0).collect();
        for start in [0.13, 3.77, 20.5, 38.999] {
            let c = times.iter().filter(|t| **t >= start && **t < start + 1.0).count();
            assert_eq!(c, 5, "window at {start}");
        }
    }

    #[test]
    fn weighted_shares_are_exact_per_block() {
        let spec = ArrivalSpec {
            rate: 14,
            weights: vec![(NodeId(1), 1.0), (NodeId(2), 2.0), (NodeId(3), 4.0)],
            pattern: ArrivalPattern::Paced,
            total: 1400,
        };
        let arrivals = stream(spec, 0);
        for block in arrivals.chunks(14) {
            let count = |n| block.iter().filter(|a| a.1 == NodeId(n)).count();
            assert_eq!((count(1), count(2), count(3)), (2, 4, 8));
        }
    }

    #[test]
    fn seeded_stream_replays() {
        let mut spec = ArrivalSpec::uniform(&nodes(4), 7, 500);
        spec.pattern = ArrivalPattern::Jittered;
        assert_eq!(stream(spec.clone(), 11), stream(spec.clone(), 11));
        assert_ne!(stream(spec.clone(), 11), stream(spec, 12));
    }
}
