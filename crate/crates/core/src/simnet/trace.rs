use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::topology::NodeId;
use crate::digest::Fingerprinter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Node (re)initialization at start-up or recovery.
    Init,
    Arrival,
    Timer,
    Message,
    Fault,
    /// Arrival addressed to a crashed node.
    ArrivalLost,
    /// Message addressed to a crashed (or since restarted) node.
    MessageLostCrash,
    /// Message sent over, or in flight across, a cut edge.
    MessageLostPartition,
    /// Timer belonging to an earlier incarnation of its node.
    TimerStale,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Init => "init",
            TraceKind::Arrival => "arrival",
            TraceKind::Timer => "timer",
            TraceKind::Message => "message",
            TraceKind::Fault => "fault",
            TraceKind::ArrivalLost => "arrival-lost",
            TraceKind::MessageLostCrash => "message-lost-crash",
            TraceKind::MessageLostPartition => "message-lost-partition",
            TraceKind::TimerStale => "timer-stale",
        }
    }

    fn code(self) -> u64 {
        self as u64
    }

    /// True for records where a handler actually ran.
    pub fn is_handler(self) -> bool {
        matches!(
            self,
            TraceKind::Init | TraceKind::Arrival | TraceKind::Timer | TraceKind::Message
        )
    }
}

/// One dispatched (or discarded) event. `start..end` is the handler's busy
/// interval; discarded events have `start == end == time`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub seq: u64,
    pub time: f64,
    pub start: f64,
    pub end: f64,
    pub kind: TraceKind,
    pub node: Option<NodeId>,
    pub from: Option<NodeId>,
    pub digest: u64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |n: Option<NodeId>| n.map_or(-1, |n| i64::from(n.0));
        write!(
            f,
            "{} {:.9} {} node={} from={} start={:.9} end={:.9} digest={:016x}",
            self.seq,
            self.time,
            self.kind.name(),
            opt(self.node),
            opt(self.from),
            self.start,
            self.end,
            self.digest
        )
    }
}

/// Append-only event log. The running SHA-256 over every record is always
/// maintained; the records themselves are kept only when requested.
#[derive(Clone, Default)]
pub struct Trace {
    hasher: Fingerprinter,
    records: Option<Vec<TraceRecord>>,
    count: u64,
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trace")
            .field("count", &self.count)
            .field("kept", &self.records.as_ref().map(Vec::len))
            .finish()
    }
}

impl Trace {
    pub fn new(keep_records: bool) -> Self {
        Trace {
            hasher: Fingerprinter::new(),
            records: keep_records.then(Vec::new),
            count: 0,
        }
    }

    pub fn push(&mut self, r: TraceRecord) {
        let node = |n: Option<NodeId>| n.map_or(u64::MAX, |n| u64::from(n.0));
        self.hasher
            .u64(r.seq)
            .f64(r.time)
            .f64(r.start)
            .f64(r.end)
            .u64(r.kind.code())
            .u64(node(r.node))
            .u64(node(r.from))
            .u64(r.digest);
        self.count += 1;
        if let Some(v) = &mut self.records {
            v.push(r);
        }
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn records(&self) -> Option<&[TraceRecord]> {
        self.records.as_deref()
    }

    /// Hex SHA-256 of every record pushed so far.
    pub fn digest_hex(&self) -> String {
        let bytes = self.hasher.clone().finish_bytes();
        let mut s = String::with_capacity(64);
        for b in bytes {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    /// The last `n` kept records, one per line.
    pub fn tail(&self, n: usize) -> String {
        let mut s = String::new();
        if let Some(v) = &self.records {
            for r in &v[v.len().saturating_sub(n)..] {
                let _ = writeln!(s, "{r}");
            }
        }
        s
    }
}
