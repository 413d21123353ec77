//! Master-worker distributed mini-batch.
//!
//! Workers predict with the last predictor they received, accumulate
//! gradients there and ship `(ĝ, count, j)` every send period `T`. The master
//! keeps only gradients tagged with its current epoch; once `b` of them are
//! in it averages over the actual count, steps, and broadcasts `(w, j+1)`.
//! A worker adopts a broadcast only if its epoch is strictly newer, dropping
//! whatever it had accumulated.
//!
//! [`db`] replaces the master with a lock-protected shared record so that
//! any worker can apply an update.

pub mod db;

use alloc::vec::Vec;

use crate::digest::{Fingerprint, Fingerprinter};
use crate::learn::{Example, GradientAccumulator, Predictor, UpdateRule};
use crate::record::{ChangeCause, Recorder, UpdateRow};
use crate::simnet::{Context, NodeId, Protocol, Topology, TopologyKind};
use crate::{Error, Result};

pub use db::{MawoDb, StoreParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MawoParams {
    pub batch: u64,
    /// Worker send period `T`.
    pub send_period: f64,
    /// Time the updater spends computing a new predictor (`τ_u`).
    pub update_time: f64,
}

impl MawoParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("batch size must be ≥ 1"));
        }
        if !(self.send_period > 0.0 && self.send_period.is_finite()) {
            return Err(Error::config("send period T must be finite and > 0"));
        }
        if !(self.update_time >= 0.0 && self.update_time.is_finite()) {
            return Err(Error::config("update time τ_u must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// The master of a star topology is its centre, node 0 by construction.
pub fn master_of(topology: &Topology) -> Result<NodeId> {
    let master = topology.nodes()[0];
    let others = topology.len() - 1;
    let ok = matches!(topology.kind(), TopologyKind::Star | TopologyKind::Tree)
        && topology.neighbors(master).len() == others
        && others >= 1;
    if !ok {
        return Err(Error::config(
            "master-worker protocols need a star whose lowest-index node is the centre",
        ));
    }
    Ok(master)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MawoMsg {
    Gradients { batch: GradientAccumulator, epoch: u64 },
    Predictor { w: Predictor, epoch: u64 },
}

impl Fingerprint for MawoMsg {
    fn fingerprint(&self, f: &mut Fingerprinter) {
        match self {
            MawoMsg::Gradients { batch, epoch } => f.u64(1).u64(*epoch).u64(batch.count()).f64s(batch.sum()),
            MawoMsg::Predictor { w, epoch } => f.u64(2).u64(*epoch).f64s(w.as_slice()),
        };
    }
}

/// Worker state shared by both variants. `count = 0 ⟺ ĝ = 0`, and the epoch
/// never decreases between restarts.
#[derive(Debug, Clone)]
pub struct Worker {
    pub w: Predictor,
    pub fingerprint: u64,
    pub epoch: u64,
    pub acc: GradientAccumulator,
}

impl Worker {
    pub fn new(w: Predictor, epoch: u64, track: bool) -> Self {
        Worker {
            fingerprint: w.fingerprint(),
            acc: GradientAccumulator::new(w.dim(), track),
            w,
            epoch,
        }
    }

    pub fn on_example(&mut self, rec: &mut Recorder, z: &Example, node: NodeId, now: f64) -> Result<()> {
        rec.predict(z, node, now, &self.w, self.fingerprint, self.epoch, self.fingerprint)?;
        self.acc.add_example(rec.model(), self.w.as_slice(), z)
    }

    /// Takes the accumulated batch if there is one.
    pub fn take_batch(&mut self) -> Option<GradientAccumulator> {
        (!self.acc.is_empty()).then(|| self.acc.take())
    }

    /// Adopts `(w, epoch)` if strictly newer; stale gradients are dropped.
    pub fn adopt(&mut self, w: &Predictor, epoch: u64) -> bool {
        if epoch <= self.epoch {
            return false;
        }
        self.w = w.clone();
        self.fingerprint = w.fingerprint();
        self.epoch = epoch;
        self.acc.reset();
        true
    }
}

pub const SEND_TIMER: u64 = 1;

/// First epoch; workers start there with the initial predictor and restart
/// at zero, below any epoch the master can broadcast.
pub const FIRST_EPOCH: u64 = 1;

#[derive(Debug, Clone)]
pub struct Mawo {
    params: MawoParams,
    master: NodeId,
    topology: Topology,
    rule: UpdateRule,
    initial: UpdateRule,
    epoch: u64,
    acc: GradientAccumulator,
    master_alive: bool,
    workers: Vec<Worker>,
    pub recorder: Recorder,
}

impl Mawo {
    pub fn new(params: MawoParams, rule: UpdateRule, topology: &Topology, recorder: Recorder) -> Result<Self> {
        params.validate()?;
        let master = master_of(topology)?;
        let track = recorder.track_provenance();
        let w0 = rule.current().clone();
        Ok(Mawo {
            params,
            master,
            acc: GradientAccumulator::new(w0.dim(), track),
            workers: topology
                .nodes()
                .iter()
                .map(|_| Worker::new(w0.clone(), FIRST_EPOCH, track))
                .collect(),
            topology: topology.clone(),
            initial: rule.clone(),
            rule,
            epoch: FIRST_EPOCH,
            master_alive: true,
            recorder,
        })
    }

    pub fn master(&self) -> NodeId {
        self.master
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Gradients the master holds for its current epoch.
    pub fn master_batch(&self) -> &GradientAccumulator {
        &self.acc
    }

    /// The master's current predictor.
    pub fn predictor(&self) -> &Predictor {
        self.rule.current()
    }

    pub fn worker(&self, n: NodeId) -> Option<&Worker> {
        self.topology.index_of(n).map(|i| &self.workers[i])
    }

    fn idx(&self, n: NodeId) -> usize {
        self.topology.index_of(n).expect("node belongs to the topology")
    }

    /// `(ĝ, count, j)` from a worker; stale epochs are ignored.
    fn master_receive(&mut self, ctx: &mut Context<'_, MawoMsg>, batch: GradientAccumulator, epoch: u64) -> Result<()> {
        if epoch != self.epoch {
            return Ok(());
        }
        self.acc.merge(&batch)?;
        if self.acc.count() < self.params.batch {
            return Ok(());
        }
        let batch = self.acc.take();
        let parent = self.rule.current().fingerprint();
        self.rule.step(&batch.average()?, batch.count())?;
        let child = self.rule.current().fingerprint();
        ctx.consume(self.params.update_time);
        self.recorder.update(UpdateRow {
            time: ctx.now(),
            node: ctx.node(),
            version_before: self.epoch,
            version_after: self.epoch + 1,
            batch_count: batch.count(),
            parent,
            child,
            provenance: batch.into_provenance(),
        });
        self.epoch += 1;
        self.recorder
            .state(ctx.now(), ctx.node(), self.epoch, child, ChangeCause::Update);
        let w = self.rule.current().clone();
        for &n in self.topology.neighbors(self.master) {
            ctx.send(
                n,
                MawoMsg::Predictor {
                    w: w.clone(),
                    epoch: self.epoch,
                },
            );
        }
        Ok(())
    }
}

impl Protocol for Mawo {
    type Msg = MawoMsg;

    fn init(&mut self, ctx: &mut Context<'_, MawoMsg>) -> Result<()> {
        let me = ctx.node();
        let first = ctx.incarnation() == 0;
        let track = self.recorder.track_provenance();
        if me == self.master {
            // A restarted master has lost the predictor; the protocol stalls.
            if !first {
                self.master_alive = false;
            }
            self.recorder.state(
                ctx.now(),
                me,
                self.epoch,
                self.rule.current().fingerprint(),
                ChangeCause::Init,
            );
            return Ok(());
        }
        let i = self.idx(me);
        let epoch = if first { FIRST_EPOCH } else { 0 };
        self.workers[i] = Worker::new(self.initial.current().clone(), epoch, track);
        let fp = self.workers[i].fingerprint;
        self.recorder.state(ctx.now(), me, epoch, fp, ChangeCause::Init);
        ctx.set_timer_at(ctx.now() + self.params.send_period, SEND_TIMER);
        Ok(())
    }

    fn on_example(&mut self, ctx: &mut Context<'_, MawoMsg>, z: Example) -> Result<()> {
        let me = ctx.node();
        if me == self.master {
            return Err(Error::protocol("the master serves no examples"));
        }
        let i = self.idx(me);
        self.workers[i].on_example(&mut self.recorder, &z, me, ctx.now())
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, MawoMsg>, tag: u64) -> Result<()> {
        if tag != SEND_TIMER {
            return Ok(());
        }
        // Fixed grid: consecutive sends are exactly T apart unless delayed.
        ctx.set_timer_at(ctx.now() + self.params.send_period, SEND_TIMER);
        let i = self.idx(ctx.node());
        let w = &mut self.workers[i];
        if let Some(batch) = w.take_batch() {
            let epoch = w.epoch;
            ctx.send(self.master, MawoMsg::Gradients { batch, epoch });
        }
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Context<'_, MawoMsg>, from: NodeId, msg: MawoMsg) -> Result<()> {
        let me = ctx.node();
        match msg {
            MawoMsg::Gradients { batch, epoch } if me == self.master && self.master_alive => {
                self.master_receive(ctx, batch, epoch)
            }
            MawoMsg::Predictor { w, epoch } if me != self.master => {
                let i = self.idx(me);
                if self.workers[i].adopt(&w, epoch) {
                    let fp = self.workers[i].fingerprint;
                    self.recorder
                        .state(ctx.now(), me, epoch, fp, ChangeCause::Adopt { from, by_index: false });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn on_crash(&mut self, node: NodeId, time: f64) {
        if node == self.master {
            self.master_alive = false;
        }
        self.recorder.state(time, node, 0, 0, ChangeCause::Crash);
    }
}
