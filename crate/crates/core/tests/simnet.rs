//! Simulator semantics observed from the outside: ordering, determinism,
//! fault handling and atomicity, checked by scanning traces.

use dmbsim_core::digest::{Fingerprint, Fingerprinter};
use dmbsim_core::learn::{Example, ExampleSource, PayloadDistribution};
use dmbsim_core::record::ProtocolKind;
use dmbsim_core::scenario::Scenario;
use dmbsim_core::simnet::{
    build_topology, ArrivalSpec, ArrivalStream, Context, Edge, FaultEntry, FaultKind, FaultSchedule, LinkModel, NodeId,
    Protocol, SimRngs, Simulator, Substream, TopologySpec, TraceKind,
};
use dmbsim_core::{Error, Result};

#[derive(Clone, Debug)]
struct Ping(u64);

impl Fingerprint for Ping {
    fn fingerprint(&self, f: &mut Fingerprinter) {
        f.u64(self.0);
    }
}

/// Scripted protocol: what `init` does is fixed per test, and every
/// callback is logged.
#[derive(Default)]
struct Script {
    init_timers: Vec<(NodeId, f64, u64)>,
    init_sends: Vec<(NodeId, NodeId)>,
    busy: f64,
    log: Vec<(f64, NodeId, &'static str, u64)>,
}

impl Protocol for Script {
    type Msg = Ping;

    fn init(&mut self, ctx: &mut Context<'_, Ping>) -> Result<()> {
        let me = ctx.node();
        self.log.push((ctx.now(), me, "init", ctx.incarnation()));
        for &(n, at, tag) in &self.init_timers {
            if n == me && ctx.incarnation() == 0 {
                ctx.set_timer_at(at, tag);
            }
        }
        for &(from, to) in &self.init_sends {
            if from == me {
                ctx.send(to, Ping(u64::from(to.0)));
            }
        }
        Ok(())
    }

    fn on_example(&mut self, ctx: &mut Context<'_, Ping>, z: Example) -> Result<()> {
        ctx.consume(self.busy);
        self.log.push((ctx.now(), ctx.node(), "example", z.seq_id));
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, Ping>, tag: u64) -> Result<()> {
        self.log.push((ctx.now(), ctx.node(), "timer", tag));
        Ok(())
    }

    fn on_message(&mut self, ctx: &mut Context<'_, Ping>, _: NodeId, msg: Ping) -> Result<()> {
        self.log.push((ctx.now(), ctx.node(), "message", msg.0));
        Ok(())
    }
}

fn sim(spec: TopologySpec, link: LinkModel, faults: &FaultSchedule, rate: u32, total: u64) -> Simulator<Ping> {
    let topo = build_topology(&spec, false).unwrap();
    let arrivals = ArrivalStream::new(
        ArrivalSpec::uniform(topo.nodes(), rate, total),
        Substream::Arrivals.rng(1),
    )
    .unwrap();
    let examples = ExampleSource::new(
        PayloadDistribution::Gaussian {
            mean: vec![0.0],
            std: 1.0,
        },
        Substream::Payloads.rng(1),
    );
    let rngs = SimRngs {
        network: Substream::Network.rng(1),
        protocol: Substream::Protocol.rng(1),
    };
    Simulator::new(topo, link, faults, arrivals, examples, rngs, true).unwrap()
}

#[test]
fn equal_time_events_dispatch_in_insertion_order() {
    let mut p = Script {
        init_timers: vec![
            (NodeId(1), 5.0, 10),
            (NodeId(0), 5.0, 20),
            (NodeId(0), 5.0, 30),
            (NodeId(2), 5.0, 40),
        ],
        ..Script::default()
    };
    let mut s = sim(
        TopologySpec::Path(3),
        LinkModel::uniform(0.0, 0.0, 0.0),
        &FaultSchedule::default(),
        0,
        0,
    );
    s.run_until(&mut p, 10.0).unwrap();
    let tags: Vec<u64> = p.log.iter().filter(|e| e.2 == "timer").map(|e| e.3).collect();
    // Nodes initialise in index order, so node 0's timers were queued first.
    assert_eq!(tags, vec![20, 30, 10, 40]);
    let seqs: Vec<u64> = s
        .trace()
        .records()
        .unwrap()
        .iter()
        .filter(|r| r.kind == TraceKind::Timer)
        .map(|r| r.seq)
        .collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn a_timer_in_the_past_aborts_the_run() {
    struct Backwards;
    impl Protocol for Backwards {
        type Msg = Ping;
        fn init(&mut self, ctx: &mut Context<'_, Ping>) -> Result<()> {
            ctx.set_timer(1.0, 0);
            Ok(())
        }
        fn on_example(&mut self, _: &mut Context<'_, Ping>, _: Example) -> Result<()> {
            Ok(())
        }
        fn on_timer(&mut self, ctx: &mut Context<'_, Ping>, _: u64) -> Result<()> {
            ctx.set_timer_at(ctx.now() - 0.5, 0);
            Ok(())
        }
        fn on_message(&mut self, _: &mut Context<'_, Ping>, _: NodeId, _: Ping) -> Result<()> {
            Ok(())
        }
    }
    let mut s = sim(
        TopologySpec::Path(1),
        LinkModel::uniform(0.0, 0.0, 0.0),
        &FaultSchedule::default(),
        0,
        0,
    );
    let err = s.run_until(&mut Backwards, 5.0).unwrap_err();
    assert!(matches!(err, Error::ScheduledInPast { at, now } if at < now));
}

#[test]
fn a_fault_in_the_past_is_rejected() {
    let mut p = Script::default();
    let mut s = sim(
        TopologySpec::Path(2),
        LinkModel::uniform(0.0, 0.0, 0.0),
        &FaultSchedule::default(),
        0,
        0,
    );
    s.run_until(&mut p, 3.0).unwrap();
    let err = s
        .schedule_fault(FaultEntry::new(2.0, FaultKind::Crash(NodeId(1))))
        .unwrap_err();
    assert!(matches!(err, Error::ScheduledInPast { .. }));
    s.schedule_fault(FaultEntry::new(3.5, FaultKind::Crash(NodeId(1))))
        .unwrap();
    s.run_until(&mut p, 4.0).unwrap();
    assert!(!s.is_alive(NodeId(1)));
}

#[test]
fn sending_to_a_non_neighbor_is_a_protocol_error() {
    let mut p = Script {
        init_sends: vec![(NodeId(0), NodeId(2))],
        ..Script::default()
    };
    let mut s = sim(
        TopologySpec::Path(3),
        LinkModel::uniform(0.1, 0.1, 0.0),
        &FaultSchedule::default(),
        0,
        0,
    );
    assert!(matches!(s.run_until(&mut p, 1.0), Err(Error::Protocol(_))));
}

#[test]
fn crashed_nodes_run_nothing_and_lose_their_mail() {
    let faults = FaultSchedule::new(vec![
        FaultEntry::new(0.05, FaultKind::Crash(NodeId(1))),
        FaultEntry::new(4.0, FaultKind::Recover(NodeId(1))),
    ]);
    let mut p = Script {
        init_sends: vec![(NodeId(0), NodeId(1))],
        init_timers: vec![(NodeId(1), 2.0, 7)],
        ..Script::default()
    };
    let mut s = sim(TopologySpec::Path(2), LinkModel::uniform(0.5, 0.5, 0.0), &faults, 4, 40);
    s.run(&mut p, 2.0).unwrap();
    let during = |t: f64| t > 0.05 && t < 4.0;
    assert!(!p.log.iter().any(|e| e.1 == NodeId(1) && during(e.0)));
    let recs = s.trace().records().unwrap();
    assert!(recs
        .iter()
        .any(|r| r.kind == TraceKind::MessageLostCrash && r.node == Some(NodeId(1))));
    assert!(recs
        .iter()
        .any(|r| r.kind == TraceKind::TimerStale && r.node == Some(NodeId(1))));
    assert!(recs
        .iter()
        .any(|r| r.kind == TraceKind::ArrivalLost && r.node == Some(NodeId(1))));
    assert!(!recs
        .iter()
        .any(|r| r.kind.is_handler() && r.node == Some(NodeId(1)) && during(r.start)));
    // Recovery re-initialises with a fresh incarnation.
    assert!(p
        .log
        .iter()
        .any(|e| e.0 == 4.0 && e.1 == NodeId(1) && e.2 == "init" && e.3 == 2));
    assert_eq!(s.stats().arrivals_serviced + s.stats().arrivals_lost, 40);
}

#[test]
fn partitioned_edges_deliver_nothing_until_healed() {
    let e = Edge::new(NodeId(0), NodeId(1));
    let faults = FaultSchedule::new(vec![
        FaultEntry::new(0.2, FaultKind::Partition(vec![e])),
        FaultEntry::new(3.0, FaultKind::Heal(vec![e])),
    ]);
    // The first message is in flight when the edge is cut.
    let mut p = Script {
        init_sends: vec![(NodeId(0), NodeId(1)), (NodeId(2), NodeId(1))],
        ..Script::default()
    };
    let mut s = sim(TopologySpec::Path(3), LinkModel::uniform(0.5, 0.5, 0.0), &faults, 0, 0);
    s.run_until(&mut p, 5.0).unwrap();
    let got: Vec<u64> = p.log.iter().filter(|e| e.2 == "message").map(|e| e.3).collect();
    assert_eq!(got, vec![1], "only the message over the intact edge arrives");
    let recs = s.trace().records().unwrap();
    let lost: Vec<_> = recs
        .iter()
        .filter(|r| r.kind == TraceKind::MessageLostPartition)
        .collect();
    assert_eq!(lost.len(), 1);
    assert_eq!(lost[0].from, Some(NodeId(0)));
}

#[test]
fn handlers_on_one_node_never_overlap() {
    let mut p = Script {
        busy: 0.3,
        ..Script::default()
    };
    let mut s = sim(
        TopologySpec::Star(3),
        LinkModel::uniform(0.0, 0.0, 0.05),
        &FaultSchedule::default(),
        12,
        600,
    );
    s.run(&mut p, 500.0).unwrap();
    let recs = s.trace().records().unwrap();
    for n in 0..3 {
        let mut spans: Vec<(f64, f64)> = recs
            .iter()
            .filter(|r| r.kind.is_handler() && r.node == Some(NodeId(n)))
            .map(|r| (r.start, r.end))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(spans.windows(2).all(|w| w[0].1 <= w[1].0), "node {n} overlaps");
    }
    assert!(s.stats().requeued > 0, "the load must force queueing");
    assert_eq!(s.stats().arrivals_serviced, 600);
}

#[test]
fn arrival_counts_respect_the_rate() {
    let mut p = Script::default();
    let mut s = sim(
        TopologySpec::Star(3),
        LinkModel::uniform(0.0, 0.0, 0.0),
        &FaultSchedule::default(),
        6,
        10_000,
    );
    s.run_until(&mut p, 100.0).unwrap();
    let n = p.log.iter().filter(|e| e.2 == "example").count();
    assert!((594..=600).contains(&n), "{n}");

    let mut p = Script::default();
    let mut s = sim(
        TopologySpec::Star(3),
        LinkModel::uniform(0.0, 0.0, 0.0),
        &FaultSchedule::default(),
        0,
        100,
    );
    s.run(&mut p, 10.0).unwrap();
    assert!(p.log.iter().all(|e| e.2 != "example"));
}

fn admb_with_faults(seed: u64) -> Scenario {
    let mut s = Scenario::quadratic(ProtocolKind::Admb, TopologySpec::RandomTree { nodes: 7, seed: 3 });
    s.m = 3_000;
    s.seed = seed;
    s.keep_trace = true;
    s.log_sends = true;
    s.random_faults = Some(dmbsim_core::simnet::RandomFaultPlan {
        crashes: 3,
        partitions: 3,
        min_duration: 5.0,
        max_duration: 40.0,
    });
    s
}

#[test]
fn same_seed_same_trace() {
    let a = admb_with_faults(11).run().unwrap();
    let b = admb_with_faults(11).run().unwrap();
    let c = admb_with_faults(12).run().unwrap();
    assert_eq!(a.trace_digest, b.trace_digest);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.regret.rows(), b.regret.rows());
    assert_ne!(a.trace_digest, c.trace_digest);
}

#[test]
fn fault_semantics_hold_in_a_full_run() {
    let out = admb_with_faults(5).run().unwrap();
    let recs = out.trace.as_ref().unwrap();
    let mut down: Vec<(NodeId, f64, f64)> = Vec::new();
    let mut cut: Vec<(Edge, f64, f64)> = Vec::new();
    for f in &out.faults {
        match &f.kind {
            FaultKind::Crash(n) => down.push((*n, f.time, f64::INFINITY)),
            FaultKind::Recover(n) => {
                if let Some(d) = down.iter_mut().rev().find(|d| d.0 == *n) {
                    d.2 = f.time;
                }
            }
            FaultKind::Partition(es) => cut.extend(es.iter().map(|e| (*e, f.time, f64::INFINITY))),
            FaultKind::Heal(es) => {
                for e in es {
                    if let Some(c) = cut.iter_mut().rev().find(|c| c.0 == *e) {
                        c.2 = f.time;
                    }
                }
            }
            _ => {}
        }
    }
    assert!(!down.is_empty() && !cut.is_empty());
    for r in recs.iter().filter(|r| r.kind.is_handler() && r.kind != TraceKind::Init) {
        let n = r.node.unwrap();
        assert!(
            !down.iter().any(|&(d, s, e)| d == n && r.start > s && r.start < e),
            "{r}"
        );
        if let (TraceKind::Message, Some(from)) = (r.kind, r.from) {
            let e = Edge::new(from, n);
            assert!(!cut.iter().any(|&(c, s, t)| c == e && r.time > s && r.time < t), "{r}");
        }
    }
}

#[test]
fn each_directed_link_carries_at_most_one_message_per_send_period() {
    let mut s = admb_with_faults(8);
    s.random_faults = None;
    s.link = LinkModel::uniform(0.1, 1.0, 0.2);
    let t = s.send_period;
    let out = s.run().unwrap();
    let sends = out.sends.unwrap();
    let mut last = std::collections::BTreeMap::new();
    for r in &sends {
        if let Some(prev) = last.insert((r.from, r.to), r.depart) {
            assert!(
                r.depart - prev >= t - 1e-9,
                "{:?} {} -> {}",
                (r.from, r.to),
                prev,
                r.depart
            );
        }
    }
    assert!(sends.len() > 1000);
}
