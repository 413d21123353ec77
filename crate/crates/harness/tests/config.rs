use dmbsim::config::{ConfigError, ProtocolName, ScenarioConfig, TopologyConfig};
use proptest::prelude::*;

fn invalid(text: &str) -> Vec<String> {
    match ScenarioConfig::parse(text).and_then(|c| c.to_scenario().map(|_| c)) {
        Err(ConfigError::Invalid(v)) => v,
        other => panic!("expected violations, got {other:?}"),
    }
}

#[test]
fn rho_of_one_half_is_rejected() {
    let v = invalid("protocol = \"dmb-sync\"\nrho = 0.5\n");
    assert!(v.iter().any(|e| e.contains("rho")), "{v:?}");
    assert!(ScenarioConfig::parse("protocol = \"dmb-sync\"\nrho = 0.49\n")
        .unwrap()
        .to_scenario()
        .is_ok());
}

#[test]
fn batch_and_rho_together_are_rejected() {
    let v = invalid("protocol = \"serial\"\nrho = 0.3\nbatch = 4\n");
    assert!(v.iter().any(|e| e.contains("either")), "{v:?}");
}

#[test]
fn asynchronous_protocol_on_a_triangle_is_rejected() {
    let text = "protocol = \"admb\"\n[topology]\nkind = \"explicit\"\nedges = [[0, 1], [1, 2], [2, 0]]\n";
    let v = invalid(text);
    assert!(v.iter().any(|e| e.contains("acyclic")), "{v:?}");
    // The same graph is fine for the synchronous protocol.
    let ok = text.replace("admb", "dmb-sync");
    assert!(ScenarioConfig::parse(&ok).unwrap().to_scenario().is_ok());
}

#[test]
fn minimal_config_fills_defaults_and_echo_is_idempotent() {
    let c = ScenarioConfig::parse("protocol = \"admb\"\n").unwrap();
    assert_eq!(c, ScenarioConfig::default());
    let once = c.echo();
    let again = ScenarioConfig::parse(&once).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.echo(), once);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(matches!(
        ScenarioConfig::parse("protocol = \"admb\"\nbatchsize = 3\n"),
        Err(ConfigError::Parse(_))
    ));
    assert!(matches!(
        ScenarioConfig::parse("protocol = \"admb\"\n[link]\nlatency = 1.0\n"),
        Err(ConfigError::Parse(_))
    ));
}

#[test]
fn every_violation_is_reported_at_once() {
    let text = "protocol = \"admb\"\nm = 0\nsend_period = -1.0\nrho = 0.7\n\
                [link]\nlatency_min = 2.0\nlatency_max = 1.0\n";
    let v = invalid(text);
    assert!(v.len() >= 4, "{v:?}");
}

#[test]
fn faults_naming_unknown_nodes_are_rejected() {
    let text = "protocol = \"admb\"\n[[faults]]\nkind = \"crash\"\ntime = 5.0\nnode = 9\n";
    assert!(!invalid(text).is_empty());
}

#[test]
fn master_worker_weights_cannot_name_the_master() {
    let text = "protocol = \"mawo\"\n[[weights]]\nnode = 0\nweight = 1.0\n";
    assert!(!invalid(text).is_empty());
}

fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
    (
        prop_oneof![
            Just(ProtocolName::Serial),
            Just(ProtocolName::DmbSync),
            Just(ProtocolName::Mawo),
            Just(ProtocolName::MawoDb),
            Just(ProtocolName::Admb),
        ],
        any::<u64>(),
        1u64..1_000_000,
        prop::option::of(1u64..512),
        1u32..64,
        0.05f64..8.0,
        1usize..20,
        prop_oneof![Just(0u8), Just(1), Just(2)],
        prop::option::of(any::<u64>()),
    )
        .prop_map(
            |(protocol, seed, m, batch, rate, t, nodes, topo, tseed)| ScenarioConfig {
                protocol,
                seed,
                m,
                batch,
                rate,
                send_period: t,
                topology: match topo {
                    0 => TopologyConfig::Star { nodes },
                    1 => TopologyConfig::Path { nodes },
                    _ => TopologyConfig::RandomTree { nodes, seed: tseed },
                },
                ..ScenarioConfig::default()
            },
        )
}

proptest! {
    #[test]
    fn parse_serialize_parse_is_identity(c in arb_config()) {
        let text = c.echo();
        let back = ScenarioConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.echo(), text);
    }
}

#[test]
fn shipped_scenarios_are_valid() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let c = ScenarioConfig::parse(&std::fs::read_to_string(&p).unwrap()).unwrap();
        c.to_scenario().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}
