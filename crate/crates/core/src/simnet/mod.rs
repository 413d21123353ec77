//! Deterministic discrete-event network simulator.
//!
//! Time is a real number; one time-unit is `1.0`. Events are totally
//! ordered by `(time, insertion sequence)`, handlers on a node never overlap,
//! and every source of randomness is a seeded ChaCha stream, so a
//! `(scenario, seed)` pair always produces the same trace.

mod arrivals;
mod engine;
mod fault;
mod topology;
mod trace;

pub use arrivals::{ArrivalPattern, ArrivalSpec, ArrivalStream};
pub use engine::{Context, LinkModel, Probe, Protocol, SendRecord, SimRngs, SimStats, Simulator};
pub use fault::{FaultEntry, FaultKind, FaultSchedule, RandomFaultPlan};
pub use topology::{build_topology, diameter, Edge, NodeId, SpanningTree, Topology, TopologyKind, TopologySpec};
pub use trace::{Trace, TraceKind, TraceRecord};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random substreams derived from a single scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Arrivals = 1,
    Payloads = 2,
    Topology = 3,
    Faults = 4,
    Network = 5,
    Rule = 6,
    Protocol = 7,
    Oracle = 8,
}

impl Substream {
    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self as u64);
        rng
    }

    /// A derived 64-bit seed, for consumers that want a plain integer.
    pub fn seed(self, seed: u64) -> u64 {
        use rand::RngCore;
        self.rng(seed).next_u64()
    }
}
