//! Runs one scenario and embeds every applicable bound comparison in its
//! summary.

use dmbsim_core::learn::bounds::{
    admb_regret_bound, dmb_regret_bound, good_period_examples_bound, mawo_mu_bound, propagation_bound,
};
use dmbsim_core::record::{ProtocolKind, RunOutput};
use dmbsim_core::scenario::Scenario;
use dmbsim_core::simnet::{Edge, FaultKind};

use crate::checks::{self, Timeline};
use crate::config::{FaultConfig, ScenarioConfig};
use crate::periods::{bad_intervals, track_good_periods, BadInterval, PeriodParams, PeriodTagging};
use crate::report::Summary;

/// A finished run with everything derived from it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub output: RunOutput,
    pub bad: Vec<BadInterval>,
    /// Good-period tagging (asynchronous protocol only).
    pub periods: Option<PeriodTagging>,
    /// Dropped inputs per update (protocols with one global version).
    pub dropped: Option<Vec<(u64, u64)>>,
    pub summary: Summary,
}

/// Constants the asynchronous bounds are stated in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncConstants {
    /// Diameter `d'` of the watched component (the whole topology).
    pub diameter: u64,
    /// `(t+2)d'`.
    pub propagation: f64,
    /// `b + 2(t+2)d'M`.
    pub period: f64,
}

impl AsyncConstants {
    pub fn of(s: &Scenario, diameter: u64) -> Self {
        AsyncConstants {
            diameter,
            propagation: propagation_bound(s.send_period, diameter),
            period: good_period_examples_bound(s.batch, s.send_period, diameter, s.rate.into()),
        }
    }
}

/// Bound on the time a message needs to reach the master and come back
/// (one way, handler included), as used by the master-worker drop bound.
pub fn master_round_trip(s: &Scenario) -> f64 {
    match s.protocol {
        ProtocolKind::MawoDb => s.store.poll_period + 2.0 * s.store.store_latency,
        _ => s.link.max_latency() + s.link.proc_time,
    }
}

pub fn run_experiment(config: &ScenarioConfig, keep_trace: bool) -> anyhow::Result<Outcome> {
    let mut scenario = config.to_scenario()?;
    scenario.keep_trace = keep_trace;
    let (output, admb) = if scenario.protocol == ProtocolKind::Admb {
        let (o, p) = scenario.run_admb()?;
        (o, Some(p))
    } else {
        (scenario.run()?, None)
    };
    let bad = bad_intervals(&output, &scenario.link);
    let mut o = Outcome {
        config: config.clone(),
        scenario,
        output,
        bad,
        periods: None,
        dropped: None,
        summary: Summary::default(),
    };
    summarize(&mut o, admb.as_ref());
    Ok(o)
}

fn summarize(o: &mut Outcome, admb: Option<&dmbsim_core::admb::Admb>) {
    let s = &o.scenario;
    let out = &o.output;
    let model = &out.model;
    let (d, l, var) = (model.diameter(), model.smoothness, model.variance);
    let m = out.examples_serviced();
    let regret = out.regret.cumulative();
    let mut sum = Summary::default();
    sum.info("examples_serviced", m as f64);
    sum.info("examples_lost", out.stats.arrivals_lost as f64);
    sum.info("updates", out.updates.len() as f64);
    sum.info("final_version", out.final_version() as f64);
    sum.info("end_time", out.end_time);
    sum.info("malformed_messages", out.malformed as f64);
    for b in &o.bad {
        if b.cause == "partition" {
            sum.info("partition_start", b.start);
            sum.info("partition_end", b.end);
        }
    }
    let m_bound = m.max(1);

    match s.protocol {
        ProtocolKind::Serial => {
            sum.at_most("regret", regret, dmb_regret_bound(s.batch, 0, d, l, var, m_bound));
        }
        ProtocolKind::DmbSync | ProtocolKind::Mawo | ProtocolKind::MawoDb => {
            let dropped = out.dropped_per_update();
            let crash_at = o
                .config
                .faults
                .iter()
                .filter_map(|f| match f {
                    FaultConfig::Crash { time, node: 0 } => Some(*time),
                    _ => None,
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let mu_all = dropped.iter().map(|x| x.1).max().unwrap_or(0);
            if s.protocol == ProtocolKind::Mawo {
                let bound = mawo_mu_bound(s.rate.into(), s.send_period, master_round_trip(s), s.update_time);
                sum.at_most("mu_per_epoch_max", mu_all as f64, bound);
            } else {
                sum.info("mu_per_epoch_max", mu_all as f64);
            }
            let failover = matches!(s.protocol, ProtocolKind::Mawo | ProtocolKind::MawoDb);
            if failover && crash_at.is_finite() {
                let post: Vec<_> = out.updates.iter().filter(|u| u.time > crash_at).collect();
                let increasing = !post.is_empty() && post.windows(2).all(|w| w[1].version_after > w[0].version_after);
                sum.info("master_crash_time", crash_at);
                sum.info("updates_after_master_crash", post.len() as f64);
                sum.holds("epochs_increase_after_master_crash", increasing);
                let mu_post = checks::max_dropped(out, crash_at);
                sum.info("mu_after_master_crash", mu_post as f64);
                sum.at_most("regret", regret, dmb_regret_bound(s.batch, mu_post, d, l, var, m_bound));
            } else {
                sum.at_most("regret", regret, dmb_regret_bound(s.batch, mu_all, d, l, var, m_bound));
            }
            o.dropped = Some(dropped);
        }
        ProtocolKind::Admb => {
            sum.info("regret", regret);
            let k = AsyncConstants::of(s, out.topology.diameter());
            let params = PeriodParams {
                warmup: k.propagation,
                size: k.period.ceil() as u64,
            };
            let tagging = track_good_periods(out, &o.bad, params);
            let good_m = tagging.good_examples();
            sum.info("good_periods", tagging.good().count() as f64);
            sum.info("good_period_examples", good_m as f64);
            if good_m > 0 {
                let bnd = admb_regret_bound(s.batch, s.send_period, k.diameter, s.rate.into(), d, l, var, good_m);
                sum.info("good_period_regret_exact_sum_bound", bnd.exact_sum);
                sum.at_most("good_period_regret", tagging.good_regret(), bnd.closed_form);
            }
            let tl = Timeline::new(out);
            let prop = checks::propagation(out, &tl, &o.bad, k.propagation);
            sum.info("propagation_bound", k.propagation);
            sum.info("propagation_windows", prop.windows as f64);
            sum.info("propagation_worst_lag", prop.worst_lag);
            sum.at_most("propagation_violations", prop.violations as f64, 0.0);
            let cad = checks::update_cadence(out, &tl, &o.bad, k.period);
            sum.info("cadence_bound", k.period);
            sum.info("cadence_windows", cad.windows as f64);
            sum.info("cadence_worst_examples", cad.worst_examples as f64);
            sum.at_most("cadence_violations", cad.violations as f64, 0.0);
            if let Some(u) = checks::gradient_uniqueness(out) {
                sum.info("gradients_used", u.examples_used as f64);
                sum.info("gradients_shared_by_siblings", u.shared_by_siblings as f64);
                sum.at_most("gradient_reuse_violations", u.violations() as f64, 0.0);
            }
            if let Some(p) = admb {
                if let Some(err) = average_audit(p) {
                    sum.at_most("running_average_error", err, 1e-12);
                }
            }
            for (i, (cut, split, heal)) in scheduled_partitions(s).into_iter().enumerate() {
                let others = o
                    .bad
                    .iter()
                    .any(|b| b.cause != "partition" && b.overlaps(split, heal + k.propagation));
                let r = checks::partition(out, &tl, &cut, split, heal, k.propagation);
                let tag = format!("partition_{i}");
                for (c, (a, b)) in r.progress.iter().enumerate() {
                    sum.info(format!("{tag}_component_{c}_version_at_split"), *a as f64);
                    sum.info(format!("{tag}_component_{c}_version_at_heal"), *b as f64);
                }
                if others {
                    sum.info(format!("{tag}_progressed"), f64::from(u8::from(r.all_progressed())));
                    sum.info(format!("{tag}_converged"), f64::from(u8::from(r.converged)));
                } else {
                    sum.holds(format!("{tag}_progressed"), r.all_progressed());
                    sum.holds(format!("{tag}_converged"), r.converged);
                }
            }
            o.periods = Some(tagging);
        }
    }
    o.summary = sum;
}

/// Largest gap between a node's running average and the mean of the
/// predictors it has folded in; `None` unless history was kept.
pub fn average_audit(p: &dmbsim_core::admb::Admb) -> Option<f64> {
    let mut worst: Option<f64> = None;
    let mut n = 0;
    while let Some(node) = p.node(dmbsim_core::NodeId(n)) {
        n += 1;
        let h = node.state.history.as_ref()?;
        if h.is_empty() {
            continue;
        }
        for (i, a) in node.state.avg.as_slice().iter().enumerate() {
            let mean = h.iter().map(|w| w.as_slice()[i]).sum::<f64>() / h.len() as f64;
            worst = Some(worst.unwrap_or(0.0).max((a - mean).abs()));
        }
    }
    worst
}

/// Scheduled partitions paired with the heal that restores all of their
/// edges, as `(edges, split, heal)`.
pub fn scheduled_partitions(s: &Scenario) -> Vec<(Vec<Edge>, f64, f64)> {
    let entries = s.faults.entries();
    let mut out = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let FaultKind::Partition(cut) = &e.kind else {
            continue;
        };
        let heal = entries[i + 1..].iter().find(|h| match &h.kind {
            FaultKind::HealAll => true,
            FaultKind::Heal(es) => cut.iter().all(|c| es.contains(c)),
            _ => false,
        });
        if let Some(h) = heal {
            out.push((cut.clone(), e.time, h.time));
        }
    }
    out
}
