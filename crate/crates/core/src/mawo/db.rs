//! Master-worker variant with the master replaced by a shared record.
//!
//! The record holds `(ĝ, count, j, w)` behind an exclusive lock with a lease.
//! A worker flushing its gradients takes the lock, and its change becomes
//! visible only when it commits one store round trip later. The flush that
//! lifts the record's count to `b` also performs the update, so no single
//! node is essential. A lock whose holder dies is reclaimed once its lease
//! expires, and the uncommitted change is rolled back. Workers learn about
//! new predictors by polling the record.
//!
//! Node 0 keeps a supervisory role: it polls the record and applies an update
//! whenever the count is at or above `b` and the lock is free. With
//! `worker_updates` on this never happens; with it off node 0 is the only
//! updater and its crash stalls learning.

use alloc::vec::Vec;

use super::{master_of, MawoParams, Worker, FIRST_EPOCH};
use crate::learn::{Example, GradientAccumulator, Predictor, UpdateRule};
use crate::record::{ChangeCause, Recorder, UpdateRow};
use crate::simnet::{Context, NodeId, Protocol, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreParams {
    /// One-way latency to the record; reads and commits take a round trip.
    pub store_latency: f64,
    pub poll_period: f64,
    pub lease: f64,
    pub worker_updates: bool,
}

impl StoreParams {
    pub fn validate(&self, mawo: &MawoParams) -> Result<()> {
        if !(self.store_latency >= 0.0 && self.store_latency.is_finite()) {
            return Err(Error::config("store latency must be finite and ≥ 0"));
        }
        if !(self.poll_period > 0.0 && self.poll_period.is_finite()) {
            return Err(Error::config("poll period must be finite and > 0"));
        }
        if !(self.lease > 2.0 * self.store_latency + mawo.update_time) {
            return Err(Error::config(
                "lock lease must exceed one store round trip plus the update time",
            ));
        }
        Ok(())
    }

    /// Worst-case delay between a record change and a worker seeing it: a
    /// full poll period plus a round trip.
    pub fn broadcast_latency(&self) -> f64 {
        self.poll_period + 2.0 * self.store_latency
    }
}

#[derive(Debug, Clone)]
struct Lock {
    holder: NodeId,
    incarnation: u64,
    expires: f64,
    /// Gradients staged by a worker; `None` for a supervisory update.
    pending: Option<(GradientAccumulator, u64)>,
}

/// The shared record. Mutated only by the lock holder at commit time.
#[derive(Debug, Clone)]
struct Store {
    acc: GradientAccumulator,
    epoch: u64,
    rule: UpdateRule,
    lock: Option<Lock>,
}

pub const FLUSH_TIMER: u64 = 1;
pub const POLL_TIMER: u64 = 2;
pub const COMMIT_TIMER: u64 = 3;
pub const POLL_RESULT_TIMER: u64 = 4;

#[derive(Debug, Clone)]
pub struct MawoDb {
    params: MawoParams,
    store_params: StoreParams,
    supervisor: NodeId,
    topology: Topology,
    initial: Predictor,
    store: Store,
    workers: Vec<Worker>,
    snapshots: Vec<Option<(Predictor, u64)>>,
    /// Flushes that found the lock held and retried later.
    pub lock_conflicts: u64,
    /// Staged changes discarded after their holder's lease expired.
    pub rollbacks: u64,
    /// Committed flushes whose epoch had already moved on.
    pub stale_flushes: u64,
    pub recorder: Recorder,
}

impl MawoDb {
    pub fn new(
        params: MawoParams,
        store_params: StoreParams,
        rule: UpdateRule,
        topology: &Topology,
        recorder: Recorder,
    ) -> Result<Self> {
        params.validate()?;
        store_params.validate(&params)?;
        let supervisor = master_of(topology)?;
        let track = recorder.track_provenance();
        let w0 = rule.current().clone();
        Ok(MawoDb {
            params,
            store_params,
            supervisor,
            workers: topology
                .nodes()
                .iter()
                .map(|_| Worker::new(w0.clone(), FIRST_EPOCH, track))
                .collect(),
            snapshots: alloc::vec![None; topology.len()],
            topology: topology.clone(),
            store: Store {
                acc: GradientAccumulator::new(w0.dim(), track),
                epoch: FIRST_EPOCH,
                rule,
                lock: None,
            },
            initial: w0,
            lock_conflicts: 0,
            rollbacks: 0,
            stale_flushes: 0,
            recorder,
        })
    }

    pub fn store_epoch(&self) -> u64 {
        self.store.epoch
    }

    /// Gradients committed to the record for its current epoch.
    pub fn store_batch(&self) -> &GradientAccumulator {
        &self.store.acc
    }

    pub fn lock_holder(&self) -> Option<NodeId> {
        self.store.lock.as_ref().map(|l| l.holder)
    }

    pub fn worker(&self, n: NodeId) -> Option<&Worker> {
        self.topology.index_of(n).map(|i| &self.workers[i])
    }

    fn idx(&self, n: NodeId) -> usize {
        self.topology.index_of(n).expect("node belongs to the topology")
    }

    /// Takes the lock if it is free or its lease ran out; an expired holder's
    /// staged change is rolled back.
    fn try_lock(&mut self, ctx: &Context<'_, ()>, pending: Option<(GradientAccumulator, u64)>) -> bool {
        if let Some(lock) = &self.store.lock {
            if lock.expires > ctx.now() {
                self.lock_conflicts += 1;
                return false;
            }
            if lock.pending.is_some() {
                self.rollbacks += 1;
            }
        }
        self.store.lock = Some(Lock {
            holder: ctx.node(),
            incarnation: ctx.incarnation(),
            expires: ctx.now() + self.store_params.lease,
            pending,
        });
        true
    }

    fn round_trip(&self) -> f64 {
        2.0 * self.store_params.store_latency
    }

    fn apply_update(&mut self, ctx: &Context<'_, ()>) -> Result<()> {
        let batch = self.store.acc.take();
        let parent = self.store.rule.current().fingerprint();
        self.store.rule.step(&batch.average()?, batch.count())?;
        let child = self.store.rule.current().fingerprint();
        self.recorder.update(UpdateRow {
            time: ctx.now(),
            node: ctx.node(),
            version_before: self.store.epoch,
            version_after: self.store.epoch + 1,
            batch_count: batch.count(),
            parent,
            child,
            provenance: batch.into_provenance(),
        });
        self.store.epoch += 1;
        Ok(())
    }

    fn on_flush(&mut self, ctx: &mut Context<'_, ()>) -> Result<()> {
        ctx.set_timer_at(ctx.now() + self.params.send_period, FLUSH_TIMER);
        let i = self.idx(ctx.node());
        if self.workers[i].acc.is_empty() {
            return Ok(());
        }
        let epoch = self.workers[i].epoch;
        let count = self.workers[i].acc.count();
        let crossing = self.store_params.worker_updates
            && epoch == self.store.epoch
            && self.store.acc.count() + count >= self.params.batch;
        let staged = self.workers[i].acc.clone();
        if !self.try_lock(ctx, Some((staged, epoch))) {
            return Ok(());
        }
        self.workers[i].acc.reset();
        let mut delay = self.round_trip();
        if crossing {
            delay += self.params.update_time;
        }
        ctx.set_timer(delay, COMMIT_TIMER);
        Ok(())
    }

    fn on_commit(&mut self, ctx: &mut Context<'_, ()>) -> Result<()> {
        let me = ctx.node();
        let held = self
            .store
            .lock
            .as_ref()
            .is_some_and(|l| l.holder == me && l.incarnation == ctx.incarnation());
        if !held {
            return Ok(());
        }
        let lock = self.store.lock.take().expect("lock checked above");
        let may_update = match lock.pending {
            Some((batch, epoch)) => {
                if epoch != self.store.epoch {
                    self.stale_flushes += 1;
                    return Ok(());
                }
                self.store.acc.merge(&batch)?;
                self.store_params.worker_updates
            }
            None => true,
        };
        if may_update && self.store.acc.count() >= self.params.batch {
            self.apply_update(ctx)?;
            let epoch = self.store.epoch;
            let w = self.store.rule.current().clone();
            let fp = w.fingerprint();
            if me == self.supervisor {
                self.recorder.state(ctx.now(), me, epoch, fp, ChangeCause::Update);
            } else {
                let i = self.idx(me);
                self.workers[i].adopt(&w, epoch);
                self.recorder.state(ctx.now(), me, epoch, fp, ChangeCause::Update);
            }
        }
        Ok(())
    }

    fn on_poll(&mut self, ctx: &mut Context<'_, ()>) -> Result<()> {
        ctx.set_timer_at(ctx.now() + self.store_params.poll_period, POLL_TIMER);
        let me = ctx.node();
        if me == self.supervisor {
            if self.store.acc.count() >= self.params.batch && self.try_lock(ctx, None) {
                ctx.set_timer(self.round_trip() + self.params.update_time, COMMIT_TIMER);
            }
            return Ok(());
        }
        let i = self.idx(me);
        if self.store.epoch > self.workers[i].epoch {
            self.snapshots[i] = Some((self.store.rule.current().clone(), self.store.epoch));
            ctx.set_timer(self.round_trip(), POLL_RESULT_TIMER);
        }
        Ok(())
    }

    fn on_poll_result(&mut self, ctx: &mut Context<'_, ()>) {
        let me = ctx.node();
        let i = self.idx(me);
        if let Some((w, epoch)) = self.snapshots[i].take() {
            if self.workers[i].adopt(&w, epoch) {
                let fp = self.workers[i].fingerprint;
                self.recorder.state(
                    ctx.now(),
                    me,
                    epoch,
                    fp,
                    ChangeCause::Adopt {
                        from: self.supervisor,
                        by_index: false,
                    },
                );
            }
        }
    }
}

impl Protocol for MawoDb {
    type Msg = ();

    fn init(&mut self, ctx: &mut Context<'_, ()>) -> Result<()> {
        let me = ctx.node();
        let first = ctx.incarnation() == 0;
        ctx.set_timer_at(ctx.now() + self.store_params.poll_period, POLL_TIMER);
        if me == self.supervisor {
            self.recorder
                .state(ctx.now(), me, self.store.epoch, 0, ChangeCause::Init);
            return Ok(());
        }
        let i = self.idx(me);
        let epoch = if first { FIRST_EPOCH } else { 0 };
        self.workers[i] = Worker::new(self.initial.clone(), epoch, self.recorder.track_provenance());
        self.snapshots[i] = None;
        let fp = self.workers[i].fingerprint;
        self.recorder.state(ctx.now(), me, epoch, fp, ChangeCause::Init);
        ctx.set_timer_at(ctx.now() + self.params.send_period, FLUSH_TIMER);
        Ok(())
    }

    fn on_example(&mut self, ctx: &mut Context<'_, ()>, z: Example) -> Result<()> {
        let me = ctx.node();
        if me == self.supervisor {
            return Err(Error::protocol("the supervisor serves no examples"));
        }
        let i = self.idx(me);
        self.workers[i].on_example(&mut self.recorder, &z, me, ctx.now())
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, ()>, tag: u64) -> Result<()> {
        match tag {
            FLUSH_TIMER => self.on_flush(ctx),
            POLL_TIMER => self.on_poll(ctx),
            COMMIT_TIMER => self.on_commit(ctx),
            POLL_RESULT_TIMER => {
                self.on_poll_result(ctx);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn on_message(&mut self, _: &mut Context<'_, ()>, _: NodeId, _: ()) -> Result<()> {
        Ok(())
    }

    fn on_crash(&mut self, node: NodeId, time: f64) {
        // The lock, if held, stays until its lease runs out.
        self.recorder.state(time, node, 0, 0, ChangeCause::Crash);
    }
}
