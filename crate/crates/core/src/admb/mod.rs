//! Asynchronous decentralized mini-batch over an acyclic graph.
//!
//! Every node holds a state `(w, w̄, v)`, predicts with the running average
//! `w̄` and takes gradients at `w`. Each send period it tells every neighbor
//! its state together with all gradients it holds for the current `w` except
//! those that came from that neighbor. A receiver either adopts the sender's
//! state (more updates, or equal updates and a lower sender index), merges
//! the gradients if both hold the same predictor, or ignores the message.
//! Whoever first holds `b` gradients for its predictor applies the update.
//!
//! Acyclicity plus the exclusion rule means a gradient reaches each node at
//! most once along any path.

mod state;

use alloc::vec::Vec;

pub use state::{precedes, AdmbMessage, Lineage, NeighborLedger, NodeState};

use crate::learn::{Example, GradientAccumulator, UpdateRule};
use crate::record::{ChangeCause, Recorder, UpdateRow};
use crate::simnet::{Context, NodeId, Protocol, Topology};
use crate::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmbParams {
    pub batch: u64,
    /// Send period `t`.
    pub send_period: f64,
    /// Start each node's send timer at a random offset in `[0, t)` instead
    /// of exactly one period after (re)initialization.
    pub random_phase: bool,
    /// Keep every node's list of averaged predictors.
    pub track_history: bool,
}

#[derive(Debug, Clone)]
pub struct AdmbNode {
    pub state: NodeState,
    pub ledger: NeighborLedger,
    updates_here: u64,
    avg_fingerprint: u64,
    lineage_key: u64,
}

impl AdmbNode {
    fn fresh(rule: &UpdateRule, neighbors: &[NodeId], track_provenance: bool, track_history: bool) -> Self {
        let state = NodeState::zero(rule, track_history);
        AdmbNode {
            ledger: NeighborLedger::new(rule.current().dim(), neighbors, track_provenance),
            avg_fingerprint: state.avg.fingerprint(),
            lineage_key: state.lineage.key(),
            state,
            updates_here: 0,
        }
    }

    fn refresh(&mut self) {
        self.avg_fingerprint = self.state.avg.fingerprint();
        self.lineage_key = self.state.lineage.key();
    }
}

pub const SEND_TIMER: u64 = 1;

#[derive(Debug, Clone)]
pub struct Admb {
    params: AdmbParams,
    template: UpdateRule,
    topology: Topology,
    nodes: Vec<AdmbNode>,
    /// Messages dropped for failing validation.
    pub malformed: u64,
    pub recorder: Recorder,
}

impl Admb {
    pub fn new(params: AdmbParams, rule: UpdateRule, topology: &Topology, recorder: Recorder) -> Result<Self> {
        if params.batch == 0 {
            return Err(Error::config("batch size must be ≥ 1"));
        }
        if !(params.send_period > 0.0 && params.send_period.is_finite()) {
            return Err(Error::config("send period t must be finite and > 0"));
        }
        if !topology.is_acyclic() {
            return Err(Error::config("the asynchronous protocol needs an acyclic graph"));
        }
        let track = recorder.track_provenance();
        let nodes = topology
            .nodes()
            .iter()
            .map(|n| AdmbNode::fresh(&rule, topology.neighbors(*n), track, params.track_history))
            .collect();
        Ok(Admb {
            params,
            template: rule,
            topology: topology.clone(),
            nodes,
            malformed: 0,
            recorder,
        })
    }

    pub fn node(&self, n: NodeId) -> Option<&AdmbNode> {
        self.topology.index_of(n).map(|i| &self.nodes[i])
    }

    fn idx(&self, n: NodeId) -> usize {
        self.topology.index_of(n).expect("node belongs to the topology")
    }

    /// Averages everything held for the current predictor and steps.
    fn update_predictor(&mut self, ctx: &Context<'_, AdmbMessage>) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        let node = &mut self.nodes[i];
        let batch = node.ledger.outgoing(None)?;
        if batch.is_empty() {
            return Err(Error::protocol("predictor update with no gradients"));
        }
        let parent = node.lineage_key;
        let before = node.state.v;
        node.updates_here += 1;
        let lineage = Lineage {
            version: before + 1,
            origin: me,
            nonce: (ctx.incarnation() << 32) | node.updates_here,
        };
        node.state.advance(&batch.average()?, batch.count(), lineage)?;
        node.ledger.reset();
        node.refresh();
        let child = node.lineage_key;
        self.recorder.update(UpdateRow {
            time: ctx.now(),
            node: me,
            version_before: before,
            version_after: before + 1,
            batch_count: batch.count(),
            parent,
            child,
            provenance: batch.into_provenance(),
        });
        self.recorder
            .state(ctx.now(), me, before + 1, child, ChangeCause::Update);
        Ok(())
    }

    fn well_formed(&self, i: usize, msg: &AdmbMessage) -> bool {
        let d = self.nodes[i].state.w().dim();
        let g_zero_iff_empty = msg.g.count() > 0 || msg.g.sum().iter().all(|x| *x == 0.0);
        msg.g.dim() == d && msg.state.w().dim() == d && msg.state.avg.dim() == d && g_zero_iff_empty
    }
}

impl Protocol for Admb {
    type Msg = AdmbMessage;

    fn init(&mut self, ctx: &mut Context<'_, AdmbMessage>) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        self.nodes[i] = AdmbNode::fresh(
            &self.template,
            self.topology.neighbors(me),
            self.recorder.track_provenance(),
            self.params.track_history,
        );
        let key = self.nodes[i].lineage_key;
        self.recorder.state(ctx.now(), me, 0, key, ChangeCause::Init);
        let t = self.params.send_period;
        let first = if self.params.random_phase {
            ctx.rng().random_range(0.0..t)
        } else {
            t
        };
        ctx.set_timer(first, SEND_TIMER);
        Ok(())
    }

    fn on_example(&mut self, ctx: &mut Context<'_, AdmbMessage>, z: Example) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        let node = &mut self.nodes[i];
        self.recorder.predict(
            &z,
            me,
            ctx.now(),
            &node.state.avg,
            node.avg_fingerprint,
            node.state.v,
            node.lineage_key,
        )?;
        node.ledger
            .own
            .add_example(self.recorder.model(), node.state.w().as_slice(), &z)?;
        if node.ledger.total_count() >= self.params.batch {
            self.update_predictor(ctx)?;
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, AdmbMessage>, tag: u64) -> Result<()> {
        if tag != SEND_TIMER {
            return Ok(());
        }
        ctx.set_timer(self.params.send_period, SEND_TIMER);
        let me = ctx.node();
        let i = self.idx(me);
        let node = &self.nodes[i];
        for &j in self.topology.neighbors(me) {
            let msg = AdmbMessage {
                state: node.state.clone(),
                g: node.ledger.outgoing(Some(j))?,
            };
            ctx.send(j, msg);
        }
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Context<'_, AdmbMessage>, from: NodeId, msg: AdmbMessage) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        if !self.well_formed(i, &msg) {
            self.malformed += 1;
            return Ok(());
        }
        let node = &mut self.nodes[i];
        if precedes(&msg.state, from, &node.state, me) {
            let by_index = msg.state.v == node.state.v;
            node.state = msg.state;
            node.ledger.reset();
            node.ledger.set_slot(from, msg.g)?;
            node.refresh();
            let (v, key) = (node.state.v, node.lineage_key);
            self.recorder
                .state(ctx.now(), me, v, key, ChangeCause::Adopt { from, by_index });
        } else if msg.state.lineage == node.state.lineage {
            node.ledger.set_slot(from, msg.g)?;
            if node.ledger.total_count() >= self.params.batch {
                self.update_predictor(ctx)?;
            }
        }
        Ok(())
    }

    fn on_crash(&mut self, node: NodeId, time: f64) {
        self.recorder.state(time, node, 0, 0, ChangeCause::Crash);
    }
}

/// Gradients a node currently holds, for inspection.
pub fn pending(node: &AdmbNode) -> Result<GradientAccumulator> {
    node.ledger.outgoing(None)
}
