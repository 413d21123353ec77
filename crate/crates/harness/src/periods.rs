//! Good-node intervals and good time periods, computed from a finished run.
//!
//! The set of watched nodes is the whole topology. A node stops being good
//! while it is crashed, while any edge is cut, or while a slowdown pushes its
//! handler time past one time-unit. Links with a latency bound above one
//! make the whole run bad. Periods are a pure function of the run output
//! and the scenario parameters.

use std::collections::BTreeMap;

use dmbsim_core::record::RunOutput;
use dmbsim_core::simnet::{Edge, FaultKind, LinkModel, NodeId};

/// A span during which at least one watched node is not good.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BadInterval {
    pub start: f64,
    /// `f64::INFINITY` when the condition never clears.
    pub end: f64,
    pub cause: &'static str,
}

impl BadInterval {
    /// True if the closed windows `[a, b]` and `[start, end]` share more
    /// than an endpoint.
    pub fn overlaps(&self, a: f64, b: f64) -> bool {
        self.start < b && self.end > a
    }
}

/// Every bad interval, sorted by start time.
pub fn bad_intervals(out: &RunOutput, link: &LinkModel) -> Vec<BadInterval> {
    let mut bad = Vec::new();
    if link.max_latency() > 1.0 {
        bad.push(BadInterval {
            start: 0.0,
            end: f64::INFINITY,
            cause: "latency",
        });
    }
    let mut down: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut cut: BTreeMap<Edge, f64> = BTreeMap::new();
    let mut slow: BTreeMap<NodeId, f64> = BTreeMap::new();
    for n in out.topology.nodes() {
        if link.proc_time_of(*n) > 1.0 {
            slow.insert(*n, 0.0);
        }
    }
    for f in &out.faults {
        match &f.kind {
            FaultKind::Crash(n) => {
                down.entry(*n).or_insert(f.time);
            }
            FaultKind::Recover(n) => {
                if let Some(s) = down.remove(n) {
                    bad.push(BadInterval {
                        start: s,
                        end: f.time,
                        cause: "crash",
                    });
                }
            }
            FaultKind::Slowdown { node, factor } => {
                let too_slow = link.proc_time_of(*node) * factor > 1.0;
                match (too_slow, slow.get(node).copied()) {
                    (true, None) => {
                        slow.insert(*node, f.time);
                    }
                    (false, Some(s)) => {
                        slow.remove(node);
                        bad.push(BadInterval {
                            start: s,
                            end: f.time,
                            cause: "slowdown",
                        });
                    }
                    _ => {}
                }
            }
            FaultKind::Partition(edges) => {
                for e in edges {
                    cut.entry(*e).or_insert(f.time);
                }
            }
            FaultKind::Heal(edges) => {
                for e in edges {
                    if let Some(s) = cut.remove(e) {
                        bad.push(BadInterval {
                            start: s,
                            end: f.time,
                            cause: "partition",
                        });
                    }
                }
            }
            FaultKind::HealAll => {
                for (_, s) in std::mem::take(&mut cut) {
                    bad.push(BadInterval {
                        start: s,
                        end: f.time,
                        cause: "partition",
                    });
                }
            }
        }
    }
    let open = |start: f64, cause| BadInterval {
        start,
        end: f64::INFINITY,
        cause,
    };
    bad.extend(down.values().map(|s| open(*s, "crash")));
    bad.extend(cut.values().map(|s| open(*s, "partition")));
    bad.extend(slow.values().map(|s| open(*s, "slowdown")));
    bad.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    bad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodStatus {
    Good,
    /// A bad interval began before the period collected its examples.
    Invalidated,
    /// The run ended first.
    Incomplete,
}

impl PeriodStatus {
    pub fn name(self) -> &'static str {
        match self {
            PeriodStatus::Good => "good",
            PeriodStatus::Invalidated => "invalidated",
            PeriodStatus::Incomplete => "incomplete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Period {
    pub index: u32,
    pub start: f64,
    pub end: f64,
    pub examples: u64,
    pub regret: f64,
    pub status: PeriodStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodParams {
    /// Warm-up `(t+2)d'` every node must be good for before a period.
    pub warmup: f64,
    /// Examples per period, `⌈b + 2(t+2)d'M⌉`.
    pub size: u64,
}

/// Periods in time order, plus the good period (if any) each regret row
/// belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTagging {
    pub periods: Vec<Period>,
    pub row_period: Vec<Option<u32>>,
}

impl PeriodTagging {
    pub fn good(&self) -> impl Iterator<Item = &Period> {
        self.periods.iter().filter(|p| p.status == PeriodStatus::Good)
    }

    pub fn good_examples(&self) -> u64 {
        self.good().map(|p| p.examples).sum()
    }

    pub fn good_regret(&self) -> f64 {
        self.good().map(|p| p.regret).sum()
    }
}

/// Splits the serviced examples into consecutive candidate periods of
/// `size` examples. A candidate starts only once every watched node has been
/// good for `warmup` time-units (the run start counts as the end of a bad
/// interval) and is invalidated if any bad interval begins before it fills.
pub fn track_good_periods(out: &RunOutput, bad: &[BadInterval], p: PeriodParams) -> PeriodTagging {
    let rows = out.regret.rows();
    let mut row_period = vec![None; rows.len()];
    let mut periods = Vec::new();
    let mut ready = p.warmup;
    let mut next_bad = 0;
    let mut members: Vec<usize> = Vec::new();
    let mut regret = 0.0;

    let close = |periods: &mut Vec<Period>, members: &mut Vec<usize>, regret: &mut f64, status| {
        if members.is_empty() {
            return;
        }
        let index = periods.len() as u32;
        periods.push(Period {
            index,
            start: rows[members[0]].time,
            end: rows[*members.last().unwrap()].time,
            examples: members.len() as u64,
            regret: *regret,
            status,
        });
        members.clear();
        *regret = 0.0;
    };

    for (i, r) in rows.iter().enumerate() {
        while next_bad < bad.len() && bad[next_bad].start <= r.time {
            close(&mut periods, &mut members, &mut regret, PeriodStatus::Invalidated);
            ready = ready.max(bad[next_bad].end + p.warmup);
            next_bad += 1;
        }
        if r.time < ready {
            continue;
        }
        members.push(i);
        regret += r.regret();
        if members.len() as u64 == p.size {
            let index = periods.len() as u32;
            for &m in &members {
                row_period[m] = Some(index);
            }
            close(&mut periods, &mut members, &mut regret, PeriodStatus::Good);
        }
    }
    close(&mut periods, &mut members, &mut regret, PeriodStatus::Incomplete);
    PeriodTagging { periods, row_period }
}
