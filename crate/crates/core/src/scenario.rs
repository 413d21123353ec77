//! A complete, seeded experiment description and the code that runs it.

use alloc::format;
use alloc::vec::Vec;

use crate::admb::{Admb, AdmbParams};
use crate::digest::Fingerprint;
use crate::dmb_sync::{DmbParams, DmbSync};
use crate::learn::{ExampleSource, LossKind, LossModel, PayloadDistribution, Perturbation, RuleKind, UpdateRule};
use crate::mawo::{Mawo, MawoDb, MawoParams, StoreParams};
use crate::record::{ProtocolKind, Recorder, RunOutput};
use crate::serial::SerialProtocol;
use crate::simnet::{
    build_topology, ArrivalPattern, ArrivalSpec, ArrivalStream, FaultSchedule, LinkModel, NodeId, Protocol,
    RandomFaultPlan, SimRngs, Simulator, Substream, Topology, TopologySpec,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub distribution: PayloadDistribution,
    pub radius: f64,
    /// Samples for the offline comparator oracle (logistic loss only).
    pub oracle_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleSpec {
    pub kind: RuleKind,
    /// Half-width of the seeded uniform perturbation added after each step.
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub protocol: ProtocolKind,
    pub topology: TopologySpec,
    pub loss: LossSpec,
    pub rule: RuleSpec,
    pub batch: u64,
    /// `t` for the asynchronous protocol, `T` for master-worker, the count
    /// report period for the synchronous one.
    pub send_period: f64,
    /// Global arrival rate `M` per time-unit.
    pub rate: u32,
    /// Serving nodes and their relative shares; all eligible nodes equally
    /// when `None`.
    pub weights: Option<Vec<(NodeId, f64)>>,
    pub pattern: ArrivalPattern,
    pub link: LinkModel,
    pub faults: FaultSchedule,
    pub random_faults: Option<RandomFaultPlan>,
    /// Total examples `m`.
    pub m: u64,
    pub seed: u64,
    /// Time simulated after the last arrival.
    pub drain: f64,
    /// `τ_u`.
    pub update_time: f64,
    pub store: StoreParams,
    pub sum_timeout: Option<f64>,
    pub random_phase: bool,
    pub track_provenance: bool,
    pub track_history: bool,
    pub keep_trace: bool,
    pub log_sends: bool,
}

/// Everything a run needs, derived from the scenario and its seed.
struct Setup {
    topology: Topology,
    model: LossModel,
    rule: UpdateRule,
    arrivals: ArrivalStream,
    faults: FaultSchedule,
    examples: ExampleSource,
    rngs: SimRngs,
    recorder: Recorder,
}

impl Scenario {
    /// Quadratic loss in two dimensions on the unit ball with the stated
    /// protocol and topology; every other knob at a moderate default.
    pub fn quadratic(protocol: ProtocolKind, topology: TopologySpec) -> Self {
        Scenario {
            protocol,
            topology,
            loss: LossSpec {
                kind: LossKind::Quadratic,
                distribution: PayloadDistribution::Gaussian {
                    mean: alloc::vec![0.3, 0.4],
                    std: 0.5,
                },
                radius: 1.0,
                oracle_samples: 0,
            },
            rule: RuleSpec {
                kind: RuleKind::ProjectedGradient,
                perturbation: None,
            },
            batch: 32,
            send_period: 1.0,
            rate: 8,
            weights: None,
            pattern: ArrivalPattern::Paced,
            link: LinkModel::uniform(0.1, 1.0, 0.01),
            faults: FaultSchedule::default(),
            random_faults: None,
            m: 10_000,
            seed: 0,
            drain: 5.0,
            update_time: 0.5,
            store: StoreParams {
                store_latency: 0.25,
                poll_period: 1.0,
                lease: 5.0,
                worker_updates: true,
            },
            sum_timeout: None,
            random_phase: true,
            track_provenance: false,
            track_history: false,
            keep_trace: false,
            log_sends: false,
        }
    }

    pub fn build_topology(&self) -> Result<Topology> {
        if self.protocol == ProtocolKind::Serial {
            return build_topology(&TopologySpec::Path(1), true);
        }
        build_topology(&self.topology, self.protocol == ProtocolKind::Admb)
    }

    pub fn build_model(&self) -> Result<LossModel> {
        match self.loss.kind {
            LossKind::Quadratic => LossModel::quadratic(&self.loss.distribution, self.loss.radius),
            LossKind::Logistic => LossModel::logistic(
                &self.loss.distribution,
                self.loss.radius,
                self.loss.oracle_samples,
                Substream::Oracle.seed(self.seed),
            ),
        }
    }

    pub fn build_rule(&self, model: &LossModel) -> UpdateRule {
        let perturbation = self.rule.perturbation.map(|scale| Perturbation {
            scale,
            seed: Substream::Rule.seed(self.seed),
        });
        UpdateRule::variance_adaptive(
            self.rule.kind,
            model.radius,
            model.smoothness,
            model.variance,
            self.batch,
            model.dim(),
        )
        .with_perturbation(perturbation)
    }

    /// Nodes that receive examples: everyone but the master in master-worker
    /// runs.
    pub fn serving_nodes(&self, topology: &Topology) -> Vec<NodeId> {
        match self.protocol {
            ProtocolKind::Mawo | ProtocolKind::MawoDb => topology.nodes()[1..].to_vec(),
            _ => topology.nodes().to_vec(),
        }
    }

    pub fn arrival_spec(&self, topology: &Topology) -> ArrivalSpec {
        let weights = match &self.weights {
            Some(w) if self.protocol != ProtocolKind::Serial => w.clone(),
            _ => self.serving_nodes(topology).into_iter().map(|n| (n, 1.0)).collect(),
        };
        ArrivalSpec {
            rate: self.rate,
            weights,
            pattern: self.pattern,
            total: self.m,
        }
    }

    /// The configured schedule plus any random episodes.
    pub fn fault_schedule(&self, topology: &Topology) -> Result<FaultSchedule> {
        let mut faults = self.faults.clone();
        if let Some(plan) = &self.random_faults {
            let horizon = self.arrival_spec(topology).horizon();
            let mut rng = Substream::Faults.rng(self.seed);
            faults.extend(plan.generate(topology, horizon, &mut rng)?);
        }
        Ok(faults)
    }

    /// Largest delay between two adjacent nodes, handler time included.
    pub fn hop_time(&self) -> f64 {
        self.link.max_latency() + self.link.proc_time + self.update_time
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch == 0 {
            problems.push("batch size b must be ≥ 1".into());
        }
        if !(self.send_period > 0.0 && self.send_period.is_finite()) {
            problems.push("send period must be finite and > 0".into());
        }
        if !(self.drain >= 0.0 && self.drain.is_finite()) {
            problems.push("drain must be finite and ≥ 0".into());
        }
        if !(self.update_time >= 0.0 && self.update_time.is_finite()) {
            problems.push("update time τ_u must be finite and ≥ 0".into());
        }
        if let Err(Error::Config(e)) = self.link.validate() {
            problems.push(e);
        }
        match self.build_topology() {
            Err(Error::Config(e)) => problems.push(e),
            Err(e) => problems.push(format!("{e}")),
            Ok(topo) => {
                if let Err(e) = self.faults.validate(&topo) {
                    problems.push(format!("{e}"));
                }
                if let Err(e) = self.arrival_spec(&topo).validate() {
                    problems.push(format!("{e}"));
                }
                if let Some(w) = &self.weights {
                    let eligible = self.serving_nodes(&topo);
                    if w.iter().any(|(n, _)| !eligible.contains(n)) {
                        problems.push("arrival weights name a node that cannot serve examples".into());
                    }
                }
            }
        }
        if self.loss.distribution.dim() == 0 {
            problems.push("dimension d must be ≥ 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let topology = self.build_topology()?;
        let model = self.build_model()?;
        let rule = self.build_rule(&model);
        let arrivals = ArrivalStream::new(self.arrival_spec(&topology), Substream::Arrivals.rng(self.seed))?;
        let faults = self.fault_schedule(&topology)?;
        let examples = ExampleSource::new(self.loss.distribution.clone(), Substream::Payloads.rng(self.seed));
        let rngs = SimRngs {
            network: Substream::Network.rng(self.seed),
            protocol: Substream::Protocol.rng(self.seed),
        };
        let recorder = Recorder::new(model.clone(), self.track_provenance);
        Ok(Setup {
            topology,
            model,
            rule,
            arrivals,
            faults,
            examples,
            rngs,
            recorder,
        })
    }

    fn simulator<M: Clone + Fingerprint>(&self, s: &Setup) -> Result<Simulator<M>> {
        Simulator::new(
            s.topology.clone(),
            self.link.clone(),
            &s.faults,
            s.arrivals.clone(),
            s.examples.clone(),
            s.rngs.clone(),
            self.keep_trace,
        )
    }

    /// Runs the scenario to completion.
    pub fn run(&self) -> Result<RunOutput> {
        if self.protocol == ProtocolKind::Admb {
            return self.run_admb().map(|(out, _)| out);
        }
        let s = self.setup()?;
        let b = self.batch;
        let Setup {
            ref topology,
            ref model,
            ref rule,
            ..
        } = s;
        let rule = rule.clone();
        let recorder = s.recorder.clone();
        let out = match self.protocol {
            ProtocolKind::Serial => {
                let p = SerialProtocol::new(rule, b, recorder);
                let (p, sim) = self.drive(self.simulator(&s)?, p)?;
                self.finish(sim, p.recorder, 0, topology, model.clone())
            }
            ProtocolKind::DmbSync => {
                let depth = topology.diameter() as f64 + 1.0;
                let params = DmbParams {
                    batch: b,
                    report_period: self.send_period,
                    sum_timeout: self
                        .sum_timeout
                        .unwrap_or(2.0 * depth * self.hop_time() + self.send_period + 1.0),
                    update_time: self.update_time,
                };
                let p = DmbSync::new(params, rule, topology, recorder)?;
                let (p, sim) = self.drive(self.simulator(&s)?, p)?;
                self.finish(sim, p.recorder, 0, topology, model.clone())
            }
            ProtocolKind::Mawo => {
                let p = Mawo::new(self.mawo_params(), rule, topology, recorder)?;
                let (p, sim) = self.drive(self.simulator(&s)?, p)?;
                self.finish(sim, p.recorder, 0, topology, model.clone())
            }
            ProtocolKind::MawoDb => {
                let p = MawoDb::new(self.mawo_params(), self.store, rule, topology, recorder)?;
                let (p, sim) = self.drive(self.simulator(&s)?, p)?;
                self.finish(sim, p.recorder, 0, topology, model.clone())
            }
            ProtocolKind::Admb => unreachable!("handled above"),
        };
        Ok(out)
    }

    /// Runs an asynchronous scenario and also hands back the final protocol
    /// state (its recorder emptied into the output).
    pub fn run_admb(&self) -> Result<(RunOutput, Admb)> {
        if self.protocol != ProtocolKind::Admb {
            return Err(Error::config("run_admb needs the asynchronous protocol"));
        }
        let s = self.setup()?;
        let params = AdmbParams {
            batch: self.batch,
            send_period: self.send_period,
            random_phase: self.random_phase,
            track_history: self.track_history,
        };
        let p = Admb::new(params, s.rule.clone(), &s.topology, s.recorder.clone())?;
        let (mut p, sim) = self.drive(self.simulator(&s)?, p)?;
        let recorder = core::mem::replace(&mut p.recorder, Recorder::new(s.model.clone(), false));
        let out = self.finish(sim, recorder, p.malformed, &s.topology, s.model.clone());
        Ok((out, p))
    }

    pub fn mawo_params(&self) -> MawoParams {
        MawoParams {
            batch: self.batch,
            send_period: self.send_period,
            update_time: self.update_time,
        }
    }

    fn drive<P: Protocol>(&self, mut sim: Simulator<P::Msg>, mut proto: P) -> Result<(P, Simulator<P::Msg>)> {
        if self.log_sends {
            sim.enable_send_log();
        }
        match sim.run(&mut proto, self.drain) {
            Ok(_) => Ok((proto, sim)),
            Err(e) => {
                let tail = sim.trace().tail(20);
                Err(match e {
                    Error::Protocol(msg) if !tail.is_empty() => {
                        Error::Protocol(format!("{msg}\nlast trace records:\n{tail}"))
                    }
                    other => other,
                })
            }
        }
    }

    fn finish<M: Clone + Fingerprint>(
        &self,
        sim: Simulator<M>,
        recorder: Recorder,
        malformed: u64,
        topology: &Topology,
        model: LossModel,
    ) -> RunOutput {
        RunOutput {
            protocol: self.protocol,
            topology: topology.clone(),
            model,
            batch: self.batch,
            regret: recorder.regret,
            updates: recorder.updates,
            states: recorder.states,
            faults: sim.fault_log().to_vec(),
            stats: sim.stats(),
            end_time: sim.now(),
            trace_digest: sim.trace().digest_hex(),
            trace: sim.trace().records().map(<[_]>::to_vec),
            sends: sim.send_log().map(<[_]>::to_vec),
            malformed,
        }
    }
}
