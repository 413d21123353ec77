//! Synchronous baseline: serial equivalence and the dropped-input count.

use dmbsim_core::learn::bounds::serial_psi_bound;
use dmbsim_core::learn::ExampleSource;
use dmbsim_core::record::{ProtocolKind, RunOutput};
use dmbsim_core::scenario::Scenario;
use dmbsim_core::serial::run_serial;
use dmbsim_core::simnet::{FaultEntry, FaultKind, FaultSchedule, LinkModel, NodeId, Substream, TopologySpec};

fn sync(topology: TopologySpec, m: u64, seed: u64) -> Scenario {
    let mut s = Scenario::quadratic(ProtocolKind::DmbSync, topology);
    s.m = m;
    s.seed = seed;
    s.track_provenance = true;
    s
}

fn serial_oracle(s: &Scenario) -> Vec<f64> {
    let model = s.build_model().unwrap();
    let rule = s.build_rule(&model);
    let mut source = ExampleSource::new(s.loss.distribution.clone(), Substream::Payloads.rng(s.seed));
    run_serial(&model, rule, &mut source, s.m, s.batch)
        .unwrap()
        .rows()
        .iter()
        .map(|r| r.loss_at_prediction)
        .collect()
}

#[test]
fn one_node_without_latency_is_the_serial_algorithm() {
    for seed in [1, 2] {
        let mut s = sync(TopologySpec::Path(1), 5_000, seed);
        s.link = LinkModel::uniform(0.0, 0.0, 0.0);
        s.update_time = 0.0;
        let out = s.run().unwrap();
        let got: Vec<f64> = out.regret.rows().iter().map(|r| r.loss_at_prediction).collect();
        assert_eq!(got, serial_oracle(&s));
        assert_eq!(out.updates.len() as u64, 5_000 / s.batch);
    }
}

#[test]
fn the_serial_protocol_on_the_simulator_matches_the_plain_loop() {
    let mut s = Scenario::quadratic(ProtocolKind::Serial, TopologySpec::Path(1));
    s.m = 3_000;
    s.seed = 4;
    let out = s.run().unwrap();
    let got: Vec<f64> = out.regret.rows().iter().map(|r| r.loss_at_prediction).collect();
    assert_eq!(got, serial_oracle(&s));
}

fn check_updates(out: &RunOutput) {
    let mut seen = std::collections::HashSet::new();
    let by_seq: std::collections::HashMap<u64, (u64, u64)> = out
        .regret
        .rows()
        .iter()
        .map(|r| (r.seq_id, (r.version, r.gradient_at)))
        .collect();
    for u in &out.updates {
        let prov = u.provenance.as_ref().unwrap();
        assert_eq!(prov.len() as u64, u.batch_count);
        assert!(u.batch_count >= out.batch);
        for s in prov {
            assert!(seen.insert(*s), "seq {s} used twice");
            assert_eq!(by_seq[s], (u.version_before, u.parent), "gradient from another epoch");
        }
    }
}

#[test]
fn every_update_consumes_exactly_its_epochs_gradients() {
    let out = sync(TopologySpec::Star(4), 10_000, 3).run().unwrap();
    assert!(out.updates.len() > 100);
    check_updates(&out);
    // Every prediction in an epoch used the same predictor.
    let mut fp = std::collections::HashMap::new();
    for r in out.regret.rows() {
        assert_eq!(*fp.entry(r.version).or_insert(r.predictor), r.predictor);
    }
}

#[test]
fn zero_latency_drops_nothing() {
    let mut s = sync(TopologySpec::Star(4), 5_000, 5);
    s.link = LinkModel::uniform(0.0, 0.0, 0.0);
    s.update_time = 0.0;
    let out = s.run().unwrap();
    assert!(out.updates.len() > 100);
    assert!(out.dropped_per_update().iter().all(|&(_, d)| d == 0));
}

#[test]
fn dropped_inputs_fit_the_round_trip_window() {
    // star(3) rooted at its centre: one level, latency exactly 1.
    let mut s = sync(TopologySpec::Star(3), 6_000, 6);
    s.rate = 3;
    s.batch = 8;
    s.link = LinkModel::uniform(1.0, 1.0, 0.0);
    s.update_time = 0.5;
    let out = s.run().unwrap();
    let mu = out.dropped_per_update().iter().map(|d| d.1).max().unwrap();
    let depth = 1.0;
    let bound = 3.0 * (2.0 * depth * 1.0 + s.update_time);
    assert!(mu > 0 && mu as f64 <= bound, "μ = {mu}, bound {bound}");
}

#[test]
fn dropped_inputs_do_not_grow_with_the_stream() {
    let run = |m| {
        let mut s = sync(TopologySpec::Star(4), m, 7);
        s.link = LinkModel::uniform(0.5, 0.5, 0.01);
        let out = s.run().unwrap();
        out.dropped_per_update().iter().map(|d| d.1).max().unwrap()
    };
    assert_eq!(run(10_000), run(20_000));
}

#[test]
fn a_crash_mid_run_aborts_rounds_but_the_survivors_continue() {
    let mut s = sync(TopologySpec::Star(5), 8_000, 8);
    s.faults = FaultSchedule::new(vec![
        FaultEntry::new(300.0, FaultKind::Crash(NodeId(3))),
        FaultEntry::new(500.0, FaultKind::Recover(NodeId(3))),
    ]);
    let out = s.run().unwrap();
    check_updates(&out);
    for window in [(0.0, 300.0), (300.0, 500.0), (500.0, 1000.0)] {
        assert!(
            out.updates.iter().any(|u| u.time > window.0 && u.time < window.1),
            "{window:?}"
        );
    }
}

#[test]
fn serial_regret_stays_under_psi_on_average() {
    let mut total = 0.0;
    let m = 100_000;
    for seed in 0..10 {
        let mut s = Scenario::quadratic(ProtocolKind::Serial, TopologySpec::Path(1));
        s.batch = 1;
        s.m = m;
        s.seed = seed;
        let model = s.build_model().unwrap();
        let rule = s.build_rule(&model);
        let mut source = ExampleSource::new(s.loss.distribution.clone(), Substream::Payloads.rng(seed));
        total += run_serial(&model, rule, &mut source, m, 1).unwrap().cumulative();
    }
    let model = Scenario::quadratic(ProtocolKind::Serial, TopologySpec::Path(1))
        .build_model()
        .unwrap();
    let psi = serial_psi_bound(model.diameter(), model.smoothness, model.variance, m);
    assert!(total / 10.0 <= psi, "{} > {psi}", total / 10.0);
}
