use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::mem;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::arrivals::ArrivalStream;
use super::fault::{FaultEntry, FaultKind, FaultSchedule};
use super::topology::{Edge, NodeId, Topology};
use super::trace::{Trace, TraceKind, TraceRecord};
use crate::digest::Fingerprint;
use crate::learn::{Example, ExampleSource};
use crate::{Error, Result};

/// Latency and processing-time model.
///
/// A node is good while its effective handler time (`proc_time × slowdown`
/// plus anything a handler consumes explicitly) stays ≤ 1, and an edge is good
/// while its latency stays ≤ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub latency_min: f64,
    pub latency_max: f64,
    pub proc_time: f64,
    pub node_proc_time: Vec<(NodeId, f64)>,
    pub edge_latency: Vec<(Edge, f64, f64)>,
}

impl LinkModel {
    pub fn uniform(latency_min: f64, latency_max: f64, proc_time: f64) -> Self {
        LinkModel {
            latency_min,
            latency_max,
            proc_time,
            node_proc_time: Vec::new(),
            edge_latency: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if !ok_range(self.latency_min, self.latency_max) {
            return Err(Error::config("latency range needs 0 ≤ min ≤ max < ∞"));
        }
        if !(self.proc_time.is_finite() && self.proc_time >= 0.0) {
            return Err(Error::config("processing time must be finite and ≥ 0"));
        }
        if self.node_proc_time.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config("per-node processing time must be finite and ≥ 0"));
        }
        if self.edge_latency.iter().any(|(_, lo, hi)| !ok_range(*lo, *hi)) {
            return Err(Error::config("per-edge latency range needs 0 ≤ min ≤ max < ∞"));
        }
        Ok(())
    }

    pub fn proc_time_of(&self, n: NodeId) -> f64 {
        self.node_proc_time
            .iter()
            .find(|(x, _)| *x == n)
            .map_or(self.proc_time, |(_, p)| *p)
    }

    pub fn latency_range(&self, e: Edge) -> (f64, f64) {
        self.edge_latency
            .iter()
            .find(|(x, _, _)| *x == e)
            .map_or((self.latency_min, self.latency_max), |(_, lo, hi)| (*lo, *hi))
    }

    /// Largest latency any edge can draw.
    pub fn max_latency(&self) -> f64 {
        self.edge_latency
            .iter()
            .map(|(_, _, hi)| *hi)
            .fold(self.latency_max, f64::max)
    }
}

/// A protocol hosted by the simulator. Handlers run atomically per node.
pub trait Protocol {
    type Msg: Clone + Fingerprint;

    /// Runs for every node at time zero and again whenever a node recovers;
    /// the node must start from its zero state.
    fn init(&mut self, ctx: &mut Context<'_, Self::Msg>) -> Result<()>;

    fn on_example(&mut self, ctx: &mut Context<'_, Self::Msg>, example: Example) -> Result<()>;

    fn on_timer(&mut self, ctx: &mut Context<'_, Self::Msg>, tag: u64) -> Result<()>;

    fn on_message(&mut self, ctx: &mut Context<'_, Self::Msg>, from: NodeId, msg: Self::Msg) -> Result<()>;

    /// The node's volatile state is gone; no handler runs on it until
    /// [`Protocol::init`] is called again.
    fn on_crash(&mut self, _node: NodeId, _time: f64) {}
}

/// Handler view of the simulator. Effects (sends, timers) take place when
/// the handler's busy interval ends.
pub struct Context<'a, M> {
    now: f64,
    node: NodeId,
    incarnation: u64,
    topology: &'a Topology,
    alive: &'a [bool],
    rng: &'a mut ChaCha8Rng,
    sends: &'a mut Vec<(NodeId, M)>,
    timers: &'a mut Vec<(TimerAt, u64)>,
    extra: f64,
    error: Option<Error>,
}

impl<M> Context<'_, M> {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Increments on every crash and every recovery of this node.
    pub fn incarnation(&self) -> u64 {
        self.incarnation
    }

    pub fn topology(&self) -> &Topology {
        self.topology
    }

    pub fn neighbors(&self) -> &[NodeId] {
        self.topology.neighbors(self.node)
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        self.topology.index_of(n).is_some_and(|i| self.alive[i])
    }

    pub fn alive_nodes(&self) -> Vec<NodeId> {
        self.topology
            .nodes()
            .iter()
            .copied()
            .filter(|n| self.is_alive(*n))
            .collect()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    /// Queues `msg` for a neighbor. Sending to a non-neighbor aborts the run.
    pub fn send(&mut self, to: NodeId, msg: M) {
        self.sends.push((to, msg));
    }

    /// Fires `on_timer(tag)` `delay` after this handler finishes.
    pub fn set_timer(&mut self, delay: f64, tag: u64) {
        if !(delay >= 0.0) {
            self.error.get_or_insert(Error::ScheduledInPast {
                at: self.now + delay,
                now: self.now,
            });
            return;
        }
        self.timers.push((TimerAt::AfterEnd(delay), tag));
    }

    /// Fires `on_timer(tag)` at absolute time `at` (or when the node next
    /// becomes idle, if it is busy then).
    pub fn set_timer_at(&mut self, at: f64, tag: u64) {
        if !(at >= self.now) {
            self.error.get_or_insert(Error::ScheduledInPast { at, now: self.now });
            return;
        }
        self.timers.push((TimerAt::Absolute(at), tag));
    }

    /// Extends this handler's busy interval by `duration`.
    pub fn consume(&mut self, duration: f64) {
        if duration > 0.0 {
            self.extra += duration;
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum TimerAt {
    AfterEnd(f64),
    Absolute(f64),
}

/// One departed message, for link-rate audits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendRecord {
    pub depart: f64,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub events: u64,
    pub arrivals: u64,
    pub arrivals_serviced: u64,
    pub arrivals_lost: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_lost_crash: u64,
    pub messages_lost_partition: u64,
    pub timers_fired: u64,
    pub timers_stale: u64,
    pub requeued: u64,
}

enum EventKind<M> {
    Arrival {
        node: NodeId,
        at: f64,
        fresh: bool,
    },
    Timer {
        node: NodeId,
        incarnation: u64,
        tag: u64,
    },
    Deliver {
        from: NodeId,
        to: NodeId,
        incarnation: u64,
        generation: u64,
        msg: M,
    },
    Fault(FaultKind),
}

struct Queued<M> {
    time: f64,
    seq: u64,
    kind: EventKind<M>,
}

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<M> Eq for Queued<M> {}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Queued<M> {
    // Reversed so that the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeRuntime {
    incarnation: u64,
    busy_until: f64,
    slowdown: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct EdgeState {
    cut: bool,
    generation: u64,
}

enum Handler<M> {
    Init,
    Example(Example),
    Timer(u64),
    Message(NodeId, M),
}

/// Single-threaded discrete-event engine.
pub struct Simulator<M> {
    topology: Topology,
    link: LinkModel,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Queued<M>>,
    alive: Vec<bool>,
    runtime: Vec<NodeRuntime>,
    edges: BTreeMap<Edge, EdgeState>,
    arrivals: ArrivalStream,
    pending_arrivals: u64,
    examples: ExampleSource,
    net_rng: ChaCha8Rng,
    proto_rng: ChaCha8Rng,
    trace: Trace,
    send_log: Option<Vec<SendRecord>>,
    fault_log: Vec<FaultEntry>,
    stats: SimStats,
    started: bool,
    sends: Vec<(NodeId, M)>,
    timers: Vec<(TimerAt, u64)>,
}

/// Random streams the simulator consumes.
#[derive(Debug, Clone)]
pub struct SimRngs {
    pub network: ChaCha8Rng,
    pub protocol: ChaCha8Rng,
}

impl<M: Clone + Fingerprint> Simulator<M> {
    pub fn new(
        topology: Topology,
        link: LinkModel,
        faults: &FaultSchedule,
        arrivals: ArrivalStream,
        examples: ExampleSource,
        rngs: SimRngs,
        keep_trace: bool,
    ) -> Result<Self> {
        link.validate()?;
        faults.validate(&topology)?;
        for (n, _) in &arrivals.spec().weights {
            if !topology.contains(*n) {
                return Err(Error::config(format!("arrivals routed to unknown node {n}")));
            }
        }
        let k = topology.len();
        let edges = topology.edges().iter().map(|e| (*e, EdgeState::default())).collect();
        let mut sim = Simulator {
            topology,
            link,
            now: 0.0,
            seq: 0,
            queue: BinaryHeap::new(),
            alive: alloc::vec![true; k],
            runtime: alloc::vec![
                NodeRuntime {
                    incarnation: 0,
                    busy_until: 0.0,
                    slowdown: 1.0
                };
                k
            ],
            edges,
            arrivals,
            pending_arrivals: 0,
            examples,
            net_rng: rngs.network,
            proto_rng: rngs.protocol,
            trace: Trace::new(keep_trace),
            send_log: None,
            fault_log: Vec::new(),
            stats: SimStats::default(),
            started: false,
            sends: Vec::new(),
            timers: Vec::new(),
        };
        for e in faults.entries() {
            sim.schedule_fault(e.clone())?;
        }
        Ok(sim)
    }

    /// Records every departing message for [`Simulator::send_log`].
    pub fn enable_send_log(&mut self) {
        self.send_log.get_or_insert_with(Vec::new);
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    pub fn fault_log(&self) -> &[FaultEntry] {
        &self.fault_log
    }

    pub fn send_log(&self) -> Option<&[SendRecord]> {
        self.send_log.as_deref()
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        self.topology.index_of(n).is_some_and(|i| self.alive[i])
    }

    /// True once every arrival has been emitted and dispatched.
    pub fn arrivals_done(&self) -> bool {
        self.pending_arrivals == 0 && self.arrivals.emitted() >= self.arrivals.spec().total
    }

    /// Adds a fault to the schedule. Faults earlier than the clock are
    /// rejected.
    pub fn schedule_fault(&mut self, entry: FaultEntry) -> Result<()> {
        if entry.time < self.now {
            return Err(Error::ScheduledInPast {
                at: entry.time,
                now: self.now,
            });
        }
        FaultSchedule::new(alloc::vec![entry.clone()]).validate(&self.topology)?;
        self.push(entry.time, EventKind::Fault(entry.kind));
        Ok(())
    }

    fn push(&mut self, time: f64, kind: EventKind<M>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Queued { time, seq, kind });
    }

    fn pull_arrival(&mut self) {
        if let Some((t, node)) = self.arrivals.next() {
            self.pending_arrivals += 1;
            self.push(
                t,
                EventKind::Arrival {
                    node,
                    at: t,
                    fresh: true,
                },
            );
        }
    }

    fn idx(&self, n: NodeId) -> usize {
        self.topology.index_of(n).expect("node validated on entry")
    }

    fn record(
        &mut self,
        seq: u64,
        time: f64,
        kind: TraceKind,
        node: Option<NodeId>,
        from: Option<NodeId>,
        digest: u64,
    ) {
        self.record_span(seq, time, time, time, kind, node, from, digest);
    }

    #[allow(clippy::too_many_arguments)]
    fn record_span(
        &mut self,
        seq: u64,
        time: f64,
        start: f64,
        end: f64,
        kind: TraceKind,
        node: Option<NodeId>,
        from: Option<NodeId>,
        digest: u64,
    ) {
        self.trace.push(TraceRecord {
            seq,
            time,
            start,
            end,
            kind,
            node,
            from,
            digest,
        });
    }

    /// Runs every node's `init` at time zero and queues the first arrival.
    pub fn start<P: Protocol<Msg = M>>(&mut self, proto: &mut P) -> Result<()> {
        if self.started {
            return Ok(());
        }
        self.started = true;
        self.pull_arrival();
        for n in self.topology.nodes().to_vec() {
            let seq = self.seq;
            self.seq += 1;
            self.run_handler(proto, seq, n, Handler::Init)?;
        }
        Ok(())
    }

    /// Dispatches one event. Returns `false` when the queue is empty.
    pub fn step<P: Protocol<Msg = M>>(&mut self, proto: &mut P) -> Result<bool> {
        self.start(proto)?;
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        if ev.time < self.now {
            return Err(Error::ScheduledInPast {
                at: ev.time,
                now: self.now,
            });
        }
        self.now = ev.time;
        self.stats.events += 1;
        match ev.kind {
            EventKind::Fault(kind) => self.apply_fault(proto, ev.seq, kind)?,
            EventKind::Arrival { node, at, fresh } => {
                if fresh {
                    self.pending_arrivals -= 1;
                    self.stats.arrivals += 1;
                    self.pull_arrival();
                }
                let i = self.idx(node);
                if !self.alive[i] {
                    self.stats.arrivals_lost += 1;
                    self.record(ev.seq, ev.time, TraceKind::ArrivalLost, Some(node), None, 0);
                } else if self.runtime[i].busy_until > self.now {
                    self.requeue(i, EventKind::Arrival { node, at, fresh: false });
                } else {
                    self.stats.arrivals_serviced += 1;
                    let example = self.examples.next_example(node, at);
                    self.run_handler(proto, ev.seq, node, Handler::Example(example))?;
                }
            }
            EventKind::Timer { node, incarnation, tag } => {
                let i = self.idx(node);
                if !self.alive[i] || self.runtime[i].incarnation != incarnation {
                    self.stats.timers_stale += 1;
                    self.record(ev.seq, ev.time, TraceKind::TimerStale, Some(node), None, tag);
                } else if self.runtime[i].busy_until > self.now {
                    self.requeue(i, EventKind::Timer { node, incarnation, tag });
                } else {
                    self.stats.timers_fired += 1;
                    self.run_handler(proto, ev.seq, node, Handler::Timer(tag))?;
                }
            }
            EventKind::Deliver {
                from,
                to,
                incarnation,
                generation,
                msg,
            } => {
                let i = self.idx(to);
                let edge = self.edges[&Edge::new(from, to)];
                if edge.cut || edge.generation != generation {
                    self.stats.messages_lost_partition += 1;
                    let d = msg.fingerprint_u64();
                    self.record(
                        ev.seq,
                        ev.time,
                        TraceKind::MessageLostPartition,
                        Some(to),
                        Some(from),
                        d,
                    );
                } else if !self.alive[i] || self.runtime[i].incarnation != incarnation {
                    self.stats.messages_lost_crash += 1;
                    let d = msg.fingerprint_u64();
                    self.record(ev.seq, ev.time, TraceKind::MessageLostCrash, Some(to), Some(from), d);
                } else if self.runtime[i].busy_until > self.now {
                    let kind = EventKind::Deliver {
                        from,
                        to,
                        incarnation,
                        generation,
                        msg,
                    };
                    self.requeue(i, kind);
                } else {
                    self.stats.messages_delivered += 1;
                    self.run_handler(proto, ev.seq, to, Handler::Message(from, msg))?;
                }
            }
        }
        Ok(true)
    }

    fn requeue(&mut self, i: usize, kind: EventKind<M>) {
        self.stats.requeued += 1;
        let t = self.runtime[i].busy_until;
        self.push(t, kind);
    }

    fn apply_fault<P: Protocol<Msg = M>>(&mut self, proto: &mut P, seq: u64, kind: FaultKind) -> Result<()> {
        let mut target = None;
        match &kind {
            FaultKind::Crash(n) => {
                target = Some(*n);
                let i = self.idx(*n);
                if self.alive[i] {
                    self.alive[i] = false;
                    self.runtime[i].incarnation += 1;
                    self.runtime[i].busy_until = self.now;
                    proto.on_crash(*n, self.now);
                }
            }
            FaultKind::Recover(n) => {
                target = Some(*n);
                let i = self.idx(*n);
                if !self.alive[i] {
                    self.alive[i] = true;
                    self.runtime[i].incarnation += 1;
                    self.runtime[i].busy_until = self.now;
                }
            }
            FaultKind::Slowdown { node, factor } => {
                target = Some(*node);
                let i = self.idx(*node);
                self.runtime[i].slowdown = *factor;
            }
            FaultKind::Partition(edges) => {
                for e in edges {
                    let s = self.edges.get_mut(e).expect("edge validated on entry");
                    if !s.cut {
                        s.cut = true;
                        s.generation += 1;
                    }
                }
            }
            FaultKind::Heal(edges) => {
                for e in edges {
                    self.edges.get_mut(e).expect("edge validated on entry").cut = false;
                }
            }
            FaultKind::HealAll => self.edges.values_mut().for_each(|s| s.cut = false),
        }
        self.record(seq, self.now, TraceKind::Fault, target, None, fault_code(&kind));
        let recovered = match kind {
            FaultKind::Recover(n) => Some(n),
            _ => None,
        };
        self.fault_log.push(FaultEntry::new(self.now, kind));
        if let Some(n) = recovered {
            let seq = self.seq;
            self.seq += 1;
            self.run_handler(proto, seq, n, Handler::Init)?;
        }
        Ok(())
    }

    fn run_handler<P: Protocol<Msg = M>>(
        &mut self,
        proto: &mut P,
        seq: u64,
        node: NodeId,
        h: Handler<M>,
    ) -> Result<()> {
        let i = self.idx(node);
        let incarnation = self.runtime[i].incarnation;
        let mut sends = mem::take(&mut self.sends);
        let mut timers = mem::take(&mut self.timers);
        let (kind, from, digest) = match &h {
            Handler::Init => (TraceKind::Init, None, incarnation),
            Handler::Example(z) => (TraceKind::Arrival, None, z.seq_id),
            Handler::Timer(tag) => (TraceKind::Timer, None, *tag),
            Handler::Message(f, m) => (TraceKind::Message, Some(*f), m.fingerprint_u64()),
        };
        let mut ctx = Context {
            now: self.now,
            node,
            incarnation,
            topology: &self.topology,
            alive: &self.alive,
            rng: &mut self.proto_rng,
            sends: &mut sends,
            timers: &mut timers,
            extra: 0.0,
            error: None,
        };
        let result = match h {
            Handler::Init => proto.init(&mut ctx),
            Handler::Example(z) => proto.on_example(&mut ctx, z),
            Handler::Timer(tag) => proto.on_timer(&mut ctx, tag),
            Handler::Message(f, m) => proto.on_message(&mut ctx, f, m),
        };
        let extra = ctx.extra;
        let ctx_error = ctx.error.take();
        result?;
        if let Some(e) = ctx_error {
            return Err(e);
        }
        let duration = self.link.proc_time_of(node) * self.runtime[i].slowdown + extra;
        let end = self.now + duration;
        self.runtime[i].busy_until = end;
        self.record_span(seq, self.now, self.now, end, kind, Some(node), from, digest);

        for (to, msg) in sends.drain(..) {
            if !self.topology.has_edge(node, to) {
                return Err(Error::protocol(format!("node {node} sent to non-neighbor {to}")));
            }
            let e = Edge::new(node, to);
            let state = self.edges[&e];
            self.stats.messages_sent += 1;
            if let Some(log) = &mut self.send_log {
                log.push(SendRecord {
                    depart: end,
                    from: node,
                    to,
                });
            }
            if state.cut {
                self.stats.messages_lost_partition += 1;
                let d = msg.fingerprint_u64();
                let s = self.seq;
                self.seq += 1;
                self.record(s, end, TraceKind::MessageLostPartition, Some(to), Some(node), d);
                continue;
            }
            let (lo, hi) = self.link.latency_range(e);
            let latency = if hi > lo {
                self.net_rng.random_range(lo..=hi)
            } else {
                lo
            };
            let to_incarnation = self.runtime[self.idx(to)].incarnation;
            self.push(
                end + latency,
                EventKind::Deliver {
                    from: node,
                    to,
                    incarnation: to_incarnation,
                    generation: state.generation,
                    msg,
                },
            );
        }
        for (at, tag) in timers.drain(..) {
            let t = match at {
                TimerAt::AfterEnd(delay) => end + delay,
                TimerAt::Absolute(t) => t,
            };
            self.push(t, EventKind::Timer { node, incarnation, tag });
        }
        self.sends = sends;
        self.timers = timers;
        Ok(())
    }

    /// Dispatches every event with time ≤ `until`, then advances the clock to
    /// `until`.
    pub fn run_until<P: Protocol<Msg = M>>(&mut self, proto: &mut P, until: f64) -> Result<()> {
        self.start(proto)?;
        while self.queue.peek().is_some_and(|e| e.time <= until) {
            self.step(proto)?;
        }
        if until > self.now {
            self.now = until;
        }
        Ok(())
    }

    /// Dispatches at most `n` events.
    pub fn run_events<P: Protocol<Msg = M>>(&mut self, proto: &mut P, n: u64) -> Result<()> {
        for _ in 0..n {
            if !self.step(proto)? {
                break;
            }
        }
        Ok(())
    }

    /// Runs until every arrival has been dispatched, then `drain` further
    /// time-units so in-flight work can settle. Returns the final clock.
    pub fn run<P: Protocol<Msg = M>>(&mut self, proto: &mut P, drain: f64) -> Result<f64> {
        self.start(proto)?;
        while !self.arrivals_done() {
            if !self.step(proto)? {
                break;
            }
        }
        let end = self.now + drain;
        self.run_until(proto, end)?;
        Ok(self.now)
    }
}

fn fault_code(kind: &FaultKind) -> u64 {
    use crate::digest::Fingerprinter;
    let mut f = Fingerprinter::new();
    match kind {
        FaultKind::Crash(n) => f.u64(1).u64(n.0.into()),
        FaultKind::Recover(n) => f.u64(2).u64(n.0.into()),
        FaultKind::Slowdown { node, factor } => f.u64(3).u64(node.0.into()).f64(*factor),
        FaultKind::Partition(es) | FaultKind::Heal(es) => {
            f.u64(if matches!(kind, FaultKind::Partition(_)) { 4 } else { 5 });
            for e in es {
                f.u64(e.0 .0.into()).u64(e.1 .0.into());
            }
            &mut f
        }
        FaultKind::HealAll => f.u64(6),
    };
    f.finish()
}

/// Drives protocol handlers directly, without an event loop, so a state
/// machine can be exercised one handler at a time.
pub struct Probe<M> {
    topology: Topology,
    alive: Vec<bool>,
    rng: ChaCha8Rng,
    sends: Vec<(NodeId, M)>,
    timers: Vec<(TimerAt, u64)>,
    now: f64,
}

impl<M> Probe<M> {
    pub fn new(topology: Topology, rng: ChaCha8Rng) -> Self {
        Probe {
            alive: alloc::vec![true; topology.len()],
            topology,
            rng,
            sends: Vec::new(),
            timers: Vec::new(),
            now: 0.0,
        }
    }

    pub fn set_time(&mut self, now: f64) {
        self.now = now;
    }

    pub fn set_alive(&mut self, n: NodeId, alive: bool) {
        if let Some(i) = self.topology.index_of(n) {
            self.alive[i] = alive;
        }
    }

    /// Runs `f` as a handler on `node` (incarnation zero).
    pub fn run<R>(&mut self, node: NodeId, f: impl FnOnce(&mut Context<'_, M>) -> R) -> Result<R> {
        let mut ctx = Context {
            now: self.now,
            node,
            incarnation: 0,
            topology: &self.topology,
            alive: &self.alive,
            rng: &mut self.rng,
            sends: &mut self.sends,
            timers: &mut self.timers,
            extra: 0.0,
            error: None,
        };
        let r = f(&mut ctx);
        match ctx.error.take() {
            Some(e) => Err(e),
            None => Ok(r),
        }
    }

    /// Messages queued since the last call, in send order.
    pub fn take_sends(&mut self) -> Vec<(NodeId, M)> {
        mem::take(&mut self.sends)
    }

    /// Timer tags queued since the last call.
    pub fn take_timers(&mut self) -> Vec<u64> {
        self.timers.drain(..).map(|(_, tag)| tag).collect()
    }
}
