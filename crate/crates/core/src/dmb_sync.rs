//! Synchronous distributed mini-batch: every node predicts with one shared
//! predictor, gradients are summed up a BFS spanning tree once `b` of them
//! have been accumulated system-wide, and the root broadcasts the update.
//!
//! The tree is rooted at the lowest-index node. Counts travel up the tree
//! every `report_period`; the root starts the vector-sum when its own count
//! plus its children's reported subtree counts reach `b`. While a node waits
//! for the new predictor it keeps predicting but drops gradients.
//!
//! Failure handling is deliberately minimal. If the sum does not complete
//! within `sum_timeout`, the root discards the round, rebuilds the tree over
//! the nodes the membership service reports alive and rebroadcasts the
//! unchanged predictor. A crashed root stalls the protocol.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::digest::{Fingerprint, Fingerprinter};
use crate::learn::{Example, GradientAccumulator, UpdateRule};
use crate::record::{ChangeCause, Recorder, UpdateRow};
use crate::simnet::{Context, NodeId, Protocol, SpanningTree, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmbParams {
    pub batch: u64,
    pub report_period: f64,
    pub sum_timeout: f64,
    /// Time the root spends computing the new predictor (`τ_u`).
    pub update_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncMsg {
    /// Gradients accumulated in the sender's subtree this round.
    CountReport {
        epoch: u64,
        round: u64,
        count: u64,
    },
    SumRequest {
        epoch: u64,
        round: u64,
    },
    SumReply {
        epoch: u64,
        round: u64,
        batch: GradientAccumulator,
    },
    /// New shared predictor; `aborted` rounds carry the old one.
    NewPredictor {
        epoch: u64,
        round: u64,
        rule: UpdateRule,
        aborted: bool,
    },
}

impl Fingerprint for SyncMsg {
    fn fingerprint(&self, f: &mut Fingerprinter) {
        match self {
            SyncMsg::CountReport { epoch, round, count } => f.u64(1).u64(*epoch).u64(*round).u64(*count),
            SyncMsg::SumRequest { epoch, round } => f.u64(2).u64(*epoch).u64(*round),
            SyncMsg::SumReply { epoch, round, batch } => {
                f.u64(3).u64(*epoch).u64(*round).u64(batch.count()).f64s(batch.sum())
            }
            SyncMsg::NewPredictor {
                epoch,
                round,
                rule,
                aborted,
            } => f
                .u64(4)
                .u64(*epoch)
                .u64(*round)
                .u64(u64::from(*aborted))
                .f64s(rule.current().as_slice()),
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Accumulating,
    Summing,
}

const REPORT_TIMER: u64 = 0;

#[derive(Debug, Clone)]
struct SyncNode {
    rule: UpdateRule,
    fingerprint: u64,
    epoch: u64,
    round: u64,
    mode: Mode,
    acc: GradientAccumulator,
    child_counts: Vec<(NodeId, u64)>,
    last_reported: u64,
    awaiting: BTreeSet<NodeId>,
    collected: Option<GradientAccumulator>,
    deferred_request: Option<(u64, u64)>,
    /// Tag of the root's live sum timeout.
    timeout_tag: u64,
}

impl SyncNode {
    fn fresh(rule: &UpdateRule, track: bool) -> Self {
        SyncNode {
            fingerprint: rule.current().fingerprint(),
            rule: rule.clone(),
            epoch: 0,
            round: 0,
            mode: Mode::Accumulating,
            acc: GradientAccumulator::new(rule.current().dim(), track),
            child_counts: Vec::new(),
            last_reported: 0,
            awaiting: BTreeSet::new(),
            collected: None,
            deferred_request: None,
            timeout_tag: 0,
        }
    }

    fn subtree_count(&self) -> u64 {
        self.acc.count() + self.child_counts.iter().map(|(_, c)| c).sum::<u64>()
    }

    fn reset_round(&mut self) {
        self.mode = Mode::Accumulating;
        self.acc.reset();
        self.child_counts.clear();
        self.last_reported = 0;
        self.awaiting.clear();
        self.collected = None;
    }
}

#[derive(Debug, Clone)]
pub struct DmbSync {
    params: DmbParams,
    template: UpdateRule,
    topology: Topology,
    tree: SpanningTree,
    nodes: Vec<SyncNode>,
    next_tag: u64,
    pub recorder: Recorder,
}

impl DmbSync {
    pub fn new(params: DmbParams, rule: UpdateRule, topology: &Topology, recorder: Recorder) -> Result<Self> {
        if params.batch == 0 {
            return Err(Error::config("batch size must be ≥ 1"));
        }
        if !(params.report_period > 0.0 && params.sum_timeout > 0.0 && params.update_time >= 0.0) {
            return Err(Error::config(
                "report period and sum timeout must be > 0, update time ≥ 0",
            ));
        }
        let root = topology.nodes()[0];
        let track = recorder.track_provenance();
        Ok(DmbSync {
            params,
            tree: topology.spanning_tree(root, |_| true),
            nodes: topology.nodes().iter().map(|_| SyncNode::fresh(&rule, track)).collect(),
            template: rule,
            topology: topology.clone(),
            next_tag: 1,
            recorder,
        })
    }

    pub fn root(&self) -> NodeId {
        self.tree.root
    }

    fn idx(&self, n: NodeId) -> usize {
        self.topology.index_of(n).expect("node belongs to the topology")
    }

    fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.tree.parent.get(&n).copied()
    }

    fn children(&self, n: NodeId) -> Vec<NodeId> {
        self.tree.children_of(n).to_vec()
    }

    /// Root only: start the vector-sum once enough gradients are reported.
    fn maybe_trigger(&mut self, ctx: &mut Context<'_, SyncMsg>) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        if me != self.tree.root || self.nodes[i].mode != Mode::Accumulating {
            return Ok(());
        }
        if self.nodes[i].subtree_count() < self.params.batch {
            return Ok(());
        }
        let tag = self.next_tag;
        self.next_tag += 1;
        self.nodes[i].timeout_tag = tag;
        ctx.set_timer(self.params.sum_timeout, tag);
        let (epoch, round) = (self.nodes[i].epoch, self.nodes[i].round);
        self.begin_sum(ctx, epoch, round)
    }

    /// Switch to summing: freeze the local batch and ask the children for
    /// theirs.
    fn begin_sum(&mut self, ctx: &mut Context<'_, SyncMsg>, epoch: u64, round: u64) -> Result<()> {
        let me = ctx.node();
        let children = self.children(me);
        let i = self.idx(me);
        let node = &mut self.nodes[i];
        node.mode = Mode::Summing;
        node.collected = Some(node.acc.take());
        node.awaiting = children.iter().copied().collect();
        for c in children {
            ctx.send(c, SyncMsg::SumRequest { epoch, round });
        }
        self.maybe_finish_sum(ctx)
    }

    fn maybe_finish_sum(&mut self, ctx: &mut Context<'_, SyncMsg>) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        if self.nodes[i].mode != Mode::Summing || !self.nodes[i].awaiting.is_empty() {
            return Ok(());
        }
        let Some(batch) = self.nodes[i].collected.take() else {
            return Ok(());
        };
        let (epoch, round) = (self.nodes[i].epoch, self.nodes[i].round);
        if let Some(p) = self.parent(me) {
            ctx.send(p, SyncMsg::SumReply { epoch, round, batch });
            return Ok(());
        }
        if batch.is_empty() {
            return self.abort(ctx);
        }
        let node = &mut self.nodes[i];
        let parent_fp = node.fingerprint;
        let mut rule = node.rule.clone();
        rule.step(&batch.average()?, batch.count())?;
        ctx.consume(self.params.update_time);
        let child_fp = rule.current().fingerprint();
        self.recorder.update(UpdateRow {
            time: ctx.now(),
            node: me,
            version_before: epoch,
            version_after: epoch + 1,
            batch_count: batch.count(),
            parent: parent_fp,
            child: child_fp,
            provenance: batch.into_provenance(),
        });
        // The next round runs over whoever is alive now.
        let alive: BTreeSet<NodeId> = ctx.alive_nodes().into_iter().collect();
        self.tree = self.topology.spanning_tree(me, |n| alive.contains(&n));
        self.broadcast(ctx, epoch + 1, 0, rule, false)
    }

    fn abort(&mut self, ctx: &mut Context<'_, SyncMsg>) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        let (epoch, round) = (self.nodes[i].epoch, self.nodes[i].round);
        let rule = self.nodes[i].rule.clone();
        let alive: BTreeSet<NodeId> = ctx.alive_nodes().into_iter().collect();
        self.tree = self.topology.spanning_tree(me, |n| alive.contains(&n));
        self.broadcast(ctx, epoch, round + 1, rule, true)
    }

    /// Root: apply locally and push down the tree.
    fn broadcast(
        &mut self,
        ctx: &mut Context<'_, SyncMsg>,
        epoch: u64,
        round: u64,
        rule: UpdateRule,
        aborted: bool,
    ) -> Result<()> {
        self.adopt(ctx, epoch, round, rule, aborted)
    }

    /// Install a new (epoch, round) and forward it to the children.
    fn adopt(
        &mut self,
        ctx: &mut Context<'_, SyncMsg>,
        epoch: u64,
        round: u64,
        rule: UpdateRule,
        aborted: bool,
    ) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        let node = &mut self.nodes[i];
        if (epoch, round) <= (node.epoch, node.round) {
            return Ok(());
        }
        let changed = epoch != node.epoch;
        node.epoch = epoch;
        node.round = round;
        if changed {
            node.fingerprint = rule.current().fingerprint();
            node.rule = rule.clone();
        }
        node.reset_round();
        let fp = node.fingerprint;
        let deferred = node.deferred_request.take();
        if changed {
            self.recorder.state(ctx.now(), me, epoch, fp, ChangeCause::Update);
        }
        for c in self.children(me) {
            ctx.send(
                c,
                SyncMsg::NewPredictor {
                    epoch,
                    round,
                    rule: rule.clone(),
                    aborted,
                },
            );
        }
        if let Some((e, r)) = deferred {
            if (e, r) == (epoch, round) {
                self.begin_sum(ctx, e, r)?;
            }
        }
        self.maybe_trigger(ctx)
    }
}

impl Protocol for DmbSync {
    type Msg = SyncMsg;

    fn init(&mut self, ctx: &mut Context<'_, SyncMsg>) -> Result<()> {
        let i = self.idx(ctx.node());
        self.nodes[i] = SyncNode::fresh(&self.template, self.recorder.track_provenance());
        let fp = self.nodes[i].fingerprint;
        self.recorder.state(ctx.now(), ctx.node(), 0, fp, ChangeCause::Init);
        ctx.set_timer(self.params.report_period, REPORT_TIMER);
        Ok(())
    }

    fn on_example(&mut self, ctx: &mut Context<'_, SyncMsg>, z: Example) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        let node = &mut self.nodes[i];
        let fp = node.fingerprint;
        self.recorder
            .predict(&z, me, ctx.now(), node.rule.current(), fp, node.epoch, fp)?;
        if node.mode == Mode::Accumulating {
            node.acc
                .add_example(self.recorder.model(), node.rule.current().as_slice(), &z)?;
            self.maybe_trigger(ctx)?;
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, SyncMsg>, tag: u64) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        if tag == REPORT_TIMER {
            ctx.set_timer(self.params.report_period, REPORT_TIMER);
            let Some(p) = self.parent(me) else {
                return Ok(());
            };
            let node = &mut self.nodes[i];
            let count = node.subtree_count();
            if node.mode == Mode::Accumulating && count != node.last_reported {
                node.last_reported = count;
                let (epoch, round) = (node.epoch, node.round);
                ctx.send(p, SyncMsg::CountReport { epoch, round, count });
            }
            return Ok(());
        }
        if tag == self.nodes[i].timeout_tag && self.nodes[i].mode == Mode::Summing && me == self.tree.root {
            self.abort(ctx)?;
        }
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Context<'_, SyncMsg>, from: NodeId, msg: SyncMsg) -> Result<()> {
        let me = ctx.node();
        let i = self.idx(me);
        let current = (self.nodes[i].epoch, self.nodes[i].round);
        match msg {
            SyncMsg::CountReport { epoch, round, count } => {
                if (epoch, round) != current || self.parent(from) != Some(me) {
                    return Ok(());
                }
                let node = &mut self.nodes[i];
                match node.child_counts.iter_mut().find(|(c, _)| *c == from) {
                    Some(slot) => slot.1 = count,
                    None => node.child_counts.push((from, count)),
                }
                self.maybe_trigger(ctx)
            }
            SyncMsg::SumRequest { epoch, round } => {
                if (epoch, round) > current {
                    self.nodes[i].deferred_request = Some((epoch, round));
                    return Ok(());
                }
                if (epoch, round) == current && self.nodes[i].mode == Mode::Accumulating {
                    self.begin_sum(ctx, epoch, round)?;
                }
                Ok(())
            }
            SyncMsg::SumReply { epoch, round, batch } => {
                let node = &mut self.nodes[i];
                if (epoch, round) != current || node.mode != Mode::Summing || !node.awaiting.remove(&from) {
                    return Ok(());
                }
                if let Some(c) = &mut node.collected {
                    c.merge(&batch)?;
                }
                self.maybe_finish_sum(ctx)
            }
            SyncMsg::NewPredictor {
                epoch,
                round,
                rule,
                aborted,
            } => self.adopt(ctx, epoch, round, rule, aborted),
        }
    }

    fn on_crash(&mut self, node: NodeId, time: f64) {
        self.recorder.state(time, node, 0, 0, ChangeCause::Crash);
    }
}
