use dmbsim::acceptance::base;
use dmbsim::checks::{gradient_uniqueness, propagation, Timeline};
use dmbsim::compare::compare_protocols;
use dmbsim::config::{FaultConfig, LinkConfig, ProtocolName, TopologyConfig};
use dmbsim::report::{self, Status, Summary};
use dmbsim::run_experiment;
use dmbsim_core::learn::bounds::serial_psi_bound;

#[test]
fn serial_regret_stays_under_psi() {
    let mut c = base(ProtocolName::Serial, TopologyConfig::Path { nodes: 1 }, 0, 10_000);
    c.batch = Some(1);
    let o = run_experiment(&c, false).unwrap();
    let row = o.summary.get("regret").unwrap();
    // D = 2, L = 1, σ² = 2·0.25.
    let psi = serial_psi_bound(2.0, 1.0, 0.5, 10_000);
    assert!((row.bound.unwrap() - psi).abs() < 1e-9);
    assert_eq!(row.status, Status::Pass);
    assert!(row.value > 0.0 && row.value <= psi);
}

#[test]
fn same_seed_gives_byte_identical_tables() {
    for protocol in [
        ProtocolName::DmbSync,
        ProtocolName::Mawo,
        ProtocolName::MawoDb,
        ProtocolName::Admb,
    ] {
        let c = base(protocol, TopologyConfig::Star { nodes: 4 }, 7, 3_000);
        let a = run_experiment(&c, false).unwrap();
        let b = run_experiment(&c, false).unwrap();
        for ((n, x), (_, y)) in report::tables(&a).iter().zip(report::tables(&b).iter()) {
            assert_eq!(x, y, "{protocol:?} {n}");
        }
        let mut other = c.clone();
        other.seed = 8;
        assert_ne!(
            report::digest(&a),
            report::digest(&run_experiment(&other, false).unwrap())
        );
    }
}

#[test]
fn every_table_starts_with_its_schema_line() {
    let o = run_experiment(
        &base(ProtocolName::Admb, TopologyConfig::Path { nodes: 3 }, 1, 1_000),
        false,
    )
    .unwrap();
    for (name, bytes) in report::tables(&o) {
        let text = String::from_utf8(bytes).unwrap();
        let table = name.trim_end_matches(".csv");
        assert!(text.starts_with(&format!("# dmbsim-{table} v1\n")), "{name}");
    }
}

#[test]
fn one_regret_row_per_serviced_example() {
    let mut c = base(ProtocolName::Admb, TopologyConfig::Path { nodes: 4 }, 2, 4_000);
    c.faults = vec![
        FaultConfig::Crash { time: 100.0, node: 3 },
        FaultConfig::Recover { time: 150.0, node: 3 },
    ];
    let o = run_experiment(&c, false).unwrap();
    let s = &o.output.stats;
    assert!(s.arrivals_lost > 0);
    assert_eq!(o.output.regret.len() as u64, s.arrivals_serviced);
    assert_eq!(s.arrivals_serviced + s.arrivals_lost, 4_000);
    let csv = String::from_utf8(report::regret_csv(&o)).unwrap();
    assert_eq!(csv.lines().count() as u64, 2 + s.arrivals_serviced);
}

#[test]
fn a_partitioned_run_completes_and_reports_the_split() {
    let mut c = base(ProtocolName::Admb, TopologyConfig::Path { nodes: 4 }, 4, 8_000);
    c.faults = vec![
        FaultConfig::Partition {
            time: 500.0,
            edges: vec![[2, 3]],
        },
        FaultConfig::Heal {
            time: 750.0,
            edges: vec![[2, 3]],
        },
    ];
    let o = run_experiment(&c, false).unwrap();
    assert_eq!(o.output.examples_serviced(), 8_000);
    assert_eq!(o.summary.value("partition_start"), Some(500.0));
    assert_eq!(o.summary.value("partition_end"), Some(750.0));
    assert_eq!(o.summary.get("partition_0_converged").unwrap().status, Status::Pass);
    assert!(o.summary.passed());
}

#[test]
fn a_single_node_without_latency_matches_serial_mini_batch_exactly() {
    let mut c = base(ProtocolName::DmbSync, TopologyConfig::Path { nodes: 1 }, 5, 20_000);
    c.link = LinkConfig {
        latency_min: 0.0,
        latency_max: 0.0,
        proc_time: 0.0,
    };
    c.update_time = 0.0;
    let rows = compare_protocols(&c, 32, &[5, 6], &[1_000, 10_000, 20_000]).unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows {
        assert_eq!(r.ratio, 1.0, "{r:?}");
        assert_eq!(r.serial, r.distributed);
    }
}

#[test]
fn master_worker_drop_bound_is_embedded() {
    let o = run_experiment(
        &base(ProtocolName::Mawo, TopologyConfig::Star { nodes: 4 }, 0, 5_000),
        false,
    )
    .unwrap();
    let row = o.summary.get("mu_per_epoch_max").unwrap();
    // M(T + 2τ_c + τ_u) with τ_c = 1 + 0.01.
    assert!((row.bound.unwrap() - 8.0 * (1.0 + 2.02 + 0.5)).abs() < 1e-9);
    assert_eq!(row.status, Status::Pass);
    let dropped = o.dropped.as_ref().unwrap();
    assert_eq!(dropped.len(), o.output.updates.len());
}

#[test]
fn checks_notice_a_forged_reuse_and_a_late_node() {
    let mut c = base(ProtocolName::Admb, TopologyConfig::Path { nodes: 3 }, 9, 3_000);
    c.audit.provenance = true;
    let o = run_experiment(&c, false).unwrap();
    let mut out = o.output.clone();
    assert_eq!(gradient_uniqueness(&out).unwrap().violations(), 0);
    // Move one example into a later update on the same chain.
    let seq = out.updates[0].provenance.as_ref().unwrap()[0];
    let later = out
        .updates
        .iter()
        .position(|u| u.parent != out.updates[0].parent)
        .unwrap();
    out.updates[later].provenance.as_mut().unwrap()[0] = seq;
    let r = gradient_uniqueness(&out).unwrap();
    assert!(r.reused_on_chain >= 1 && r.stale >= 1);

    // Freeze node 2's version history: it never catches up.
    let mut out = o.output.clone();
    out.states.retain(|s| s.node.0 != 2 || s.version == 0);
    let tl = Timeline::new(&out);
    assert!(propagation(&out, &tl, &[], 9.0).violations > 0);
}

#[test]
fn summary_fails_iff_a_comparison_fails() {
    let mut s = Summary::default();
    s.info("x", 1e9);
    s.at_most("y", 1.0, 1.0);
    assert!(s.passed());
    s.at_most("z", 1.0 + 1e-12, 1.0);
    assert!(!s.passed());
    assert_eq!(s.failures().count(), 1);
}
