//! Per-run records shared by every protocol.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::learn::{Example, LossModel, Predictor, RegretLedger, RegretRow};
use crate::simnet::{FaultEntry, NodeId, SendRecord, SimStats, Topology, TraceRecord};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolKind {
    Serial,
    DmbSync,
    Mawo,
    MawoDb,
    Admb,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Serial => "serial",
            ProtocolKind::DmbSync => "dmb-sync",
            ProtocolKind::Mawo => "mawo",
            ProtocolKind::MawoDb => "mawo-db",
            ProtocolKind::Admb => "admb",
        }
    }
}

/// One applied predictor update.
///
/// `parent` and `child` identify the predictor before and after the update:
/// a lineage key for the asynchronous protocol, a predictor fingerprint for
/// the others. Every gradient in the batch was taken at `parent`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRow {
    pub time: f64,
    pub node: NodeId,
    pub version_before: u64,
    pub version_after: u64,
    pub batch_count: u64,
    pub parent: u64,
    pub child: u64,
    pub provenance: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeCause {
    /// Zero state at start-up or after recovery.
    Init,
    /// The node applied an update itself.
    Update,
    /// The node took over a newer state. `by_index` marks adoptions decided
    /// by the lower-index tie-break rather than a larger version.
    Adopt {
        from: NodeId,
        by_index: bool,
    },
    Crash,
}

/// A node's predictor version changed (or the node went down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateChange {
    pub time: f64,
    pub node: NodeId,
    pub version: u64,
    pub lineage: u64,
    pub cause: ChangeCause,
}

/// Loss bookkeeping shared by the protocol state machines.
#[derive(Debug, Clone)]
pub struct Recorder {
    model: LossModel,
    comparator: Predictor,
    track_provenance: bool,
    pub regret: RegretLedger,
    pub updates: Vec<UpdateRow>,
    pub states: Vec<StateChange>,
}

impl Recorder {
    pub fn new(model: LossModel, track_provenance: bool) -> Self {
        let comparator = model.comparator.clone();
        Recorder {
            model,
            comparator,
            track_provenance,
            regret: RegretLedger::new(),
            updates: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn model(&self) -> &LossModel {
        &self.model
    }

    pub fn track_provenance(&self) -> bool {
        self.track_provenance
    }

    /// Logs a prediction made with `w` for `z`. `predictor` fingerprints `w`;
    /// `gradient_at` identifies where the example's gradient will be taken.
    #[allow(clippy::too_many_arguments)]
    pub fn predict(
        &mut self,
        z: &Example,
        node: NodeId,
        time: f64,
        w: &Predictor,
        predictor: u64,
        version: u64,
        gradient_at: u64,
    ) -> Result<()> {
        let loss_at_prediction = self.model.value(w.as_slice(), &z.payload, z.label)?;
        let loss_at_comparator = self.model.value(self.comparator.as_slice(), &z.payload, z.label)?;
        self.regret.push(RegretRow {
            seq_id: z.seq_id,
            node,
            time,
            loss_at_prediction,
            loss_at_comparator,
            version,
            predictor,
            gradient_at,
        });
        Ok(())
    }

    pub fn update(&mut self, row: UpdateRow) {
        self.updates.push(row);
    }

    pub fn state(&mut self, time: f64, node: NodeId, version: u64, lineage: u64, cause: ChangeCause) {
        self.states.push(StateChange {
            time,
            node,
            version,
            lineage,
            cause,
        });
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub protocol: ProtocolKind,
    pub topology: Topology,
    pub model: LossModel,
    pub batch: u64,
    pub regret: RegretLedger,
    pub updates: Vec<UpdateRow>,
    pub states: Vec<StateChange>,
    pub faults: Vec<FaultEntry>,
    pub stats: SimStats,
    pub end_time: f64,
    pub trace_digest: String,
    pub trace: Option<Vec<TraceRecord>>,
    pub sends: Option<Vec<SendRecord>>,
    /// Messages rejected as malformed by the receiving protocol.
    pub malformed: u64,
}

impl RunOutput {
    pub fn examples_serviced(&self) -> u64 {
        self.regret.len() as u64
    }

    /// Inputs serviced at each closed version whose gradients never entered
    /// the update that closed it, as `(version_before, dropped)` in update
    /// order. Meaningful for protocols with one global version sequence.
    pub fn dropped_per_update(&self) -> Vec<(u64, u64)> {
        let mut served: BTreeMap<u64, u64> = BTreeMap::new();
        for r in self.regret.rows() {
            *served.entry(r.version).or_default() += 1;
        }
        self.updates
            .iter()
            .map(|u| {
                let n = served.get(&u.version_before).copied().unwrap_or(0);
                (u.version_before, n.saturating_sub(u.batch_count))
            })
            .collect()
    }

    /// Version reached by the last update, or zero.
    pub fn final_version(&self) -> u64 {
        self.updates.iter().map(|u| u.version_after).max().unwrap_or(0)
    }
}
