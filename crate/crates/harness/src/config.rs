//! TOML scenario files.
//!
//! Every key has a default, so `protocol = "admb"` alone is a valid file.
//! Unknown keys are rejected. [`ScenarioConfig::to_scenario`] reports every
//! violation at once rather than stopping at the first.

use dmbsim_core::learn::bounds::batch_size_policy;
use dmbsim_core::learn::{LossKind, PayloadDistribution, RuleKind};
use dmbsim_core::mawo::StoreParams;
use dmbsim_core::record::ProtocolKind;
use dmbsim_core::scenario::{LossSpec, RuleSpec, Scenario};
use dmbsim_core::simnet::{
    ArrivalPattern, Edge, FaultEntry, FaultKind, FaultSchedule, LinkModel, NodeId, RandomFaultPlan, Substream,
    TopologySpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolName {
    Serial,
    DmbSync,
    Mawo,
    MawoDb,
    Admb,
}

impl From<ProtocolName> for ProtocolKind {
    fn from(p: ProtocolName) -> Self {
        match p {
            ProtocolName::Serial => ProtocolKind::Serial,
            ProtocolName::DmbSync => ProtocolKind::DmbSync,
            ProtocolName::Mawo => ProtocolKind::Mawo,
            ProtocolName::MawoDb => ProtocolKind::MawoDb,
            ProtocolName::Admb => ProtocolKind::Admb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternName {
    #[default]
    Paced,
    Jittered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyConfig {
    Star {
        nodes: usize,
    },
    Path {
        nodes: usize,
    },
    RandomTree {
        nodes: usize,
        /// Derived from the run seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Explicit {
        #[serde(default)]
        nodes: Vec<u32>,
        edges: Vec<[u32; 2]>,
    },
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Star { nodes: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossConfig {
    /// `½‖w − z‖²` with `z_k ~ N(mean_k, std²)`; the dimension is `mean.len()`.
    Quadratic { mean: Vec<f64>, std: f64, radius: f64 },
    Logistic {
        teacher: Vec<f64>,
        feature_std: f64,
        feature_clip: f64,
        label_noise: f64,
        radius: f64,
        oracle_samples: usize,
    },
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::Quadratic {
            mean: vec![0.3, 0.4],
            std: 0.5,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    #[default]
    ProjectedGradient,
    DualAveraging,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub kind: RuleName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub latency_min: f64,
    pub latency_max: f64,
    pub proc_time: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            latency_min: 0.1,
            latency_max: 1.0,
            proc_time: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub store_latency: f64,
    pub poll_period: f64,
    pub lease: f64,
    pub worker_updates: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            store_latency: 0.25,
            poll_period: 1.0,
            lease: 5.0,
            worker_updates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub node: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultConfig {
    Crash { time: f64, node: u32 },
    Recover { time: f64, node: u32 },
    Slowdown { time: f64, node: u32, factor: f64 },
    Partition { time: f64, edges: Vec<[u32; 2]> },
    Heal { time: f64, edges: Vec<[u32; 2]> },
    HealAll { time: f64 },
}

impl FaultConfig {
    fn entry(&self) -> FaultEntry {
        let edges = |es: &[[u32; 2]]| es.iter().map(|[a, b]| Edge::new(NodeId(*a), NodeId(*b))).collect();
        match self {
            FaultConfig::Crash { time, node } => FaultEntry::new(*time, FaultKind::Crash(NodeId(*node))),
            FaultConfig::Recover { time, node } => FaultEntry::new(*time, FaultKind::Recover(NodeId(*node))),
            FaultConfig::Slowdown { time, node, factor } => FaultEntry::new(
                *time,
                FaultKind::Slowdown {
                    node: NodeId(*node),
                    factor: *factor,
                },
            ),
            FaultConfig::Partition { time, edges: es } => FaultEntry::new(*time, FaultKind::Partition(edges(es))),
            FaultConfig::Heal { time, edges: es } => FaultEntry::new(*time, FaultKind::Heal(edges(es))),
            FaultConfig::HealAll { time } => FaultEntry::new(*time, FaultKind::HealAll),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFaultsConfig {
    pub crashes: usize,
    pub partitions: usize,
    pub min_duration: f64,
    pub max_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Carry contributing example ids with every gradient sum.
    pub provenance: bool,
    /// Keep every node's averaged-predictor list (asynchronous protocol).
    pub history: bool,
}

/// A scenario file. Symbols: `m` examples, batch `b` (or `rho` for
/// `b = ⌈m^rho⌉`), send period `t`/`T`, global arrival rate `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: ProtocolName,
    pub seed: u64,
    pub m: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub rate: u32,
    pub send_period: f64,
    pub update_time: f64,
    pub drain: f64,
    pub arrivals: PatternName,
    pub random_phase: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sum_timeout: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<WeightConfig>>,
    pub topology: TopologyConfig,
    pub loss: LossConfig,
    pub rule: RuleConfig,
    pub link: LinkConfig,
    pub store: StoreConfig,
    pub audit: AuditConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_faults: Option<RandomFaultsConfig>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultConfig>,
}

const DEFAULT_BATCH: u64 = 32;

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            protocol: ProtocolName::Admb,
            seed: 0,
            m: 10_000,
            batch: None,
            rho: None,
            rate: 8,
            send_period: 1.0,
            update_time: 0.5,
            drain: 5.0,
            arrivals: PatternName::Paced,
            random_phase: true,
            sum_timeout: None,
            weights: None,
            topology: TopologyConfig::default(),
            loss: LossConfig::default(),
            rule: RuleConfig::default(),
            link: LinkConfig::default(),
            store: StoreConfig::default(),
            audit: AuditConfig::default(),
            random_faults: None,
            faults: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// The file with every default written out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialise")
    }

    /// Batch size after applying the `rho` policy.
    pub fn effective_batch(&self) -> Result<u64, String> {
        match (self.batch, self.rho) {
            (Some(_), Some(_)) => Err("give either batch or rho, not both".into()),
            (Some(b), None) => Ok(b),
            (None, Some(rho)) => {
                batch_size_policy(self.m, rho).map_err(|_| format!("rho = {rho} must lie strictly between 0 and 1/2"))
            }
            (None, None) => Ok(DEFAULT_BATCH),
        }
    }

    pub fn topology_spec(&self) -> TopologySpec {
        match &self.topology {
            TopologyConfig::Star { nodes } => TopologySpec::Star(*nodes),
            TopologyConfig::Path { nodes } => TopologySpec::Path(*nodes),
            TopologyConfig::RandomTree { nodes, seed } => TopologySpec::RandomTree {
                nodes: *nodes,
                seed: seed.unwrap_or_else(|| Substream::Topology.seed(self.seed)),
            },
            TopologyConfig::Explicit { nodes, edges } => TopologySpec::Explicit {
                nodes: nodes.clone(),
                edges: edges.iter().map(|[a, b]| (*a, *b)).collect(),
            },
        }
    }

    fn loss_spec(&self) -> LossSpec {
        match &self.loss {
            LossConfig::Quadratic { mean, std, radius } => LossSpec {
                kind: LossKind::Quadratic,
                distribution: PayloadDistribution::Gaussian {
                    mean: mean.clone(),
                    std: *std,
                },
                radius: *radius,
                oracle_samples: 0,
            },
            LossConfig::Logistic {
                teacher,
                feature_std,
                feature_clip,
                label_noise,
                radius,
                oracle_samples,
            } => LossSpec {
                kind: LossKind::Logistic,
                distribution: PayloadDistribution::LogisticTeacher {
                    teacher: teacher.clone(),
                    feature_std: *feature_std,
                    feature_clip: *feature_clip,
                    label_noise: *label_noise,
                },
                radius: *radius,
                oracle_samples: *oracle_samples,
            },
        }
    }

    /// Validates everything and builds the runnable scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let mut problems = Vec::new();
        let batch = self.effective_batch().unwrap_or_else(|e| {
            problems.push(e);
            DEFAULT_BATCH
        });
        if let Some(p) = self.rule.perturbation {
            if !(p.is_finite() && p >= 0.0) {
                problems.push("rule.perturbation must be finite and ≥ 0".into());
            }
        }
        if self.m == 0 {
            problems.push("m must be ≥ 1".into());
        }
        if let LossConfig::Quadratic { mean, std, radius } = &self.loss {
            if !(std.is_finite() && *std >= 0.0) {
                problems.push("loss.std must be finite and ≥ 0".into());
            }
            let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > *radius {
                problems.push("loss.mean must lie inside the ball of radius loss.radius".into());
            }
        }
        let mut faults = Vec::new();
        for f in &self.faults {
            let e = f.entry();
            if !(e.time.is_finite() && e.time >= 0.0) {
                problems.push(format!("fault time {} must be finite and ≥ 0", e.time));
            }
            if let FaultKind::Slowdown { factor, .. } = e.kind {
                if !(factor.is_finite() && factor > 0.0) {
                    problems.push("slowdown factor must be finite and > 0".into());
                }
            }
            faults.push(e);
        }
        let random_faults = self.random_faults.as_ref().map(|r| RandomFaultPlan {
            crashes: r.crashes,
            partitions: r.partitions,
            min_duration: r.min_duration,
            max_duration: r.max_duration,
        });
        if let Some(r) = &random_faults {
            if !(r.min_duration > 0.0 && r.max_duration >= r.min_duration && r.max_duration.is_finite()) {
                problems.push("random_faults needs 0 < min_duration ≤ max_duration".into());
            }
        }

        let mut s = Scenario::quadratic(self.protocol.into(), self.topology_spec());
        s.loss = self.loss_spec();
        s.rule = RuleSpec {
            kind: match self.rule.kind {
                RuleName::ProjectedGradient => RuleKind::ProjectedGradient,
                RuleName::DualAveraging => RuleKind::DualAveraging,
            },
            perturbation: self.rule.perturbation.filter(|p| *p > 0.0),
        };
        s.batch = batch;
        s.send_period = self.send_period;
        s.rate = self.rate;
        s.weights = self
            .weights
            .as_ref()
            .map(|ws| ws.iter().map(|w| (NodeId(w.node), w.weight)).collect());
        s.pattern = match self.arrivals {
            PatternName::Paced => ArrivalPattern::Paced,
            PatternName::Jittered => ArrivalPattern::Jittered,
        };
        s.link = LinkModel::uniform(self.link.latency_min, self.link.latency_max, self.link.proc_time);
        s.faults = FaultSchedule::new(faults);
        s.random_faults = random_faults;
        s.m = self.m;
        s.seed = self.seed;
        s.drain = self.drain;
        s.update_time = self.update_time;
        s.store = StoreParams {
            store_latency: self.store.store_latency,
            poll_period: self.store.poll_period,
            lease: self.store.lease,
            worker_updates: self.store.worker_updates,
        };
        s.sum_timeout = self.sum_timeout;
        s.random_phase = self.random_phase;
        s.track_provenance = self.audit.provenance;
        s.track_history = self.audit.history;

        if s.protocol == ProtocolKind::MawoDb {
            if let Err(e) = s.store.validate(&s.mawo_params()) {
                problems.push(e.to_string());
            }
        }
        if let Err(e) = s.validate() {
            let text = e.to_string();
            let text = text.strip_prefix("configuration error: ").unwrap_or(&text).to_string();
            problems.extend(text.split("; ").map(str::to_string));
        }
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let c = ScenarioConfig::parse("protocol = \"mawo\"\n").unwrap();
        assert_eq!(c.protocol, ProtocolName::Mawo);
        assert_eq!(c.m, 10_000);
        assert_eq!(c.effective_batch().unwrap(), 32);
        assert!(c.to_scenario().is_ok());
    }

    #[test]
    fn rho_sets_the_batch() {
        let c = ScenarioConfig::parse("protocol = \"dmb-sync\"\nm = 100000\nrho = 0.3\n").unwrap();
        assert_eq!(c.to_scenario().unwrap().batch, 32);
    }
}
