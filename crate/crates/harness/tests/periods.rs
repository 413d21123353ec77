use dmbsim::acceptance::base;
use dmbsim::config::{FaultConfig, ProtocolName, TopologyConfig};
use dmbsim::periods::{bad_intervals, track_good_periods, PeriodParams, PeriodStatus};
use dmbsim::run_experiment;

fn admb_path(m: u64, faults: Vec<FaultConfig>) -> dmbsim::Outcome {
    let mut c = base(ProtocolName::Admb, TopologyConfig::Path { nodes: 4 }, 3, m);
    c.faults = faults;
    run_experiment(&c, false).unwrap()
}

#[test]
fn without_faults_periods_tile_the_run_after_warm_up() {
    let o = admb_path(6_000, vec![]);
    let t = o.periods.as_ref().unwrap();
    // (t+2)d' = 9, b + 2(t+2)d'M = 32 + 144.
    let size = 176;
    let warm = 9.0;
    assert!(o.bad.is_empty());
    let rows = o.output.regret.rows();
    let first_in = rows.iter().position(|r| r.time >= warm).unwrap();
    let good: Vec<_> = t.good().collect();
    assert_eq!(good.len(), (rows.len() - first_in) / size);
    assert!(good.iter().all(|p| p.examples == size as u64));
    for (i, tag) in t.row_period.iter().enumerate() {
        let expect = (i >= first_in && (i - first_in) / size < good.len()).then(|| ((i - first_in) / size) as u32);
        assert_eq!(*tag, expect, "row {i}");
    }
    assert!(t.periods.iter().all(|p| p.status != PeriodStatus::Invalidated));
}

#[test]
fn a_fault_inside_a_candidate_invalidates_it() {
    let o = admb_path(
        6_000,
        vec![
            FaultConfig::Crash { time: 300.0, node: 2 },
            FaultConfig::Recover { time: 310.0, node: 2 },
        ],
    );
    let t = o.periods.as_ref().unwrap();
    let inv: Vec<_> = t
        .periods
        .iter()
        .filter(|p| p.status == PeriodStatus::Invalidated)
        .collect();
    assert_eq!(inv.len(), 1);
    assert!(inv[0].start < 300.0 && inv[0].examples < 176);
    for p in t.good() {
        assert!(p.end < 300.0 || p.start >= 310.0 + 9.0, "{p:?}");
    }
    // Rows of the invalidated candidate carry no period.
    for (r, tag) in o.output.regret.rows().iter().zip(&t.row_period) {
        if (inv[0].start..=inv[0].end).contains(&r.time) {
            assert_eq!(*tag, None);
        }
    }
}

#[test]
fn the_warm_up_is_never_inside_a_period() {
    for seed in 0..5 {
        let mut c = base(
            ProtocolName::Admb,
            TopologyConfig::RandomTree { nodes: 7, seed: None },
            seed,
            2_000,
        );
        c.send_period = 0.5;
        let o = run_experiment(&c, false).unwrap();
        let warm = (0.5 + 2.0) * o.output.topology.diameter() as f64;
        for p in &o.periods.as_ref().unwrap().periods {
            assert!(p.start >= warm);
        }
    }
}

#[test]
fn tagging_is_a_pure_function_of_the_run() {
    let o = admb_path(
        3_000,
        vec![FaultConfig::Slowdown {
            time: 50.0,
            node: 1,
            factor: 500.0,
        }],
    );
    let bad = bad_intervals(&o.output, &o.scenario.link);
    assert_eq!(bad, o.bad);
    assert_eq!(bad.len(), 1);
    assert!(bad[0].end.is_infinite());
    let p = PeriodParams { warmup: 9.0, size: 176 };
    assert_eq!(
        track_good_periods(&o.output, &bad, p),
        track_good_periods(&o.output, &bad, p)
    );
    assert_eq!(&track_good_periods(&o.output, &bad, p), o.periods.as_ref().unwrap());
}

#[test]
fn partitions_and_slow_links_are_bad() {
    let o = admb_path(
        2_000,
        vec![
            FaultConfig::Partition {
                time: 20.0,
                edges: vec![[1, 2], [2, 3]],
            },
            FaultConfig::Heal {
                time: 30.0,
                edges: vec![[1, 2]],
            },
            FaultConfig::HealAll { time: 40.0 },
        ],
    );
    let spans: Vec<(f64, f64)> = o.bad.iter().map(|b| (b.start, b.end)).collect();
    assert_eq!(spans, vec![(20.0, 30.0), (20.0, 40.0)]);

    let mut c = base(ProtocolName::Admb, TopologyConfig::Path { nodes: 3 }, 1, 500);
    c.link.latency_max = 1.5;
    let o = run_experiment(&c, false).unwrap();
    assert_eq!(o.periods.unwrap().good().count(), 0);
}
