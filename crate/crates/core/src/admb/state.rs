use alloc::vec::Vec;

use crate::digest::{Fingerprint, Fingerprinter};
use crate::learn::{GradientAccumulator, Predictor, UpdateRule};
use crate::simnet::NodeId;
use crate::{Error, Result};

/// Identity of a predictor: which update produced it.
///
/// Two states hold the same predictor exactly when their lineages are equal.
/// Every zero state shares [`Lineage::ORIGIN`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lineage {
    pub version: u64,
    pub origin: NodeId,
    /// `incarnation << 32 | local update counter` of the origin node.
    pub nonce: u64,
}

impl Lineage {
    pub const ORIGIN: Lineage = Lineage {
        version: 0,
        origin: NodeId(0),
        nonce: 0,
    };

    pub fn key(&self) -> u64 {
        let mut f = Fingerprinter::new();
        f.u64(self.version).u64(self.origin.0.into()).u64(self.nonce);
        f.finish()
    }
}

/// Node state `(w, w̄, v)`. The update rule carries `w` and any internal rule
/// state, so adopting a state continues the same rule trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub rule: UpdateRule,
    pub avg: Predictor,
    pub v: u64,
    pub lineage: Lineage,
    /// Every predictor folded into `avg`, oldest first; kept only when
    /// auditing the running average.
    pub history: Option<Vec<Predictor>>,
}

impl NodeState {
    pub fn zero(rule: &UpdateRule, track_history: bool) -> Self {
        NodeState {
            avg: Predictor::zeros(rule.current().dim()),
            rule: rule.clone(),
            v: 0,
            lineage: Lineage::ORIGIN,
            history: track_history.then(Vec::new),
        }
    }

    pub fn w(&self) -> &Predictor {
        self.rule.current()
    }

    /// One step with the averaged gradient; `w̄ ← v/(v+1)·w̄ + 1/(v+1)·w_new`.
    pub fn advance(&mut self, avg_gradient: &[f64], count: u64, lineage: Lineage) -> Result<()> {
        self.rule.step(avg_gradient, count)?;
        let v = self.v as f64;
        let (a, b) = (v / (v + 1.0), 1.0 / (v + 1.0));
        let avg: Vec<f64> = self
            .avg
            .as_slice()
            .iter()
            .zip(self.rule.current().as_slice())
            .map(|(m, w)| a * m + b * w)
            .collect();
        self.avg = Predictor::from_vec(avg);
        self.v += 1;
        self.lineage = lineage;
        if let Some(h) = &mut self.history {
            h.push(self.rule.current().clone());
        }
        Ok(())
    }
}

/// True iff node `i` must adopt node `j`'s state: more updates win, and on a
/// tie between different predictors the lower index wins.
pub fn precedes(sj: &NodeState, j: NodeId, si: &NodeState, i: NodeId) -> bool {
    sj.v > si.v || (sj.v == si.v && sj.lineage != si.lineage && j < i)
}

/// Own gradient sum plus one slot per neighbor. Every stored gradient was
/// taken at the node's current predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLedger {
    pub own: GradientAccumulator,
    slots: Vec<(NodeId, GradientAccumulator)>,
}

impl NeighborLedger {
    pub fn new(dim: usize, neighbors: &[NodeId], track: bool) -> Self {
        NeighborLedger {
            own: GradientAccumulator::new(dim, track),
            slots: neighbors
                .iter()
                .map(|n| (*n, GradientAccumulator::new(dim, track)))
                .collect(),
        }
    }

    pub fn slot(&self, j: NodeId) -> Option<&GradientAccumulator> {
        self.slots.iter().find(|(n, _)| *n == j).map(|(_, a)| a)
    }

    /// Overwrites `j`'s slot.
    pub fn set_slot(&mut self, j: NodeId, g: GradientAccumulator) -> Result<()> {
        let slot = self
            .slots
            .iter_mut()
            .find(|(n, _)| *n == j)
            .ok_or_else(|| Error::protocol("gradient slot for a non-neighbor"))?;
        slot.1 = g;
        Ok(())
    }

    pub fn total_count(&self) -> u64 {
        self.own.count() + self.slots.iter().map(|(_, a)| a.count()).sum::<u64>()
    }

    /// Own sum plus every slot except `exclude`'s.
    pub fn outgoing(&self, exclude: Option<NodeId>) -> Result<GradientAccumulator> {
        let mut out = self.own.clone();
        for (n, a) in &self.slots {
            if Some(*n) != exclude {
                out.merge(a)?;
            }
        }
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.own.reset();
        self.slots.iter_mut().for_each(|(_, a)| a.reset());
    }
}

/// `(j, S_j, g, c)`; `g` never contains anything the destination sent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmbMessage {
    pub state: NodeState,
    pub g: GradientAccumulator,
}

impl Fingerprint for AdmbMessage {
    fn fingerprint(&self, f: &mut Fingerprinter) {
        f.u64(self.state.v)
            .u64(self.state.lineage.key())
            .u64(self.g.count())
            .f64s(self.g.sum());
    }
}
