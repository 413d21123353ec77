//! Versioned CSV tables.
//!
//! Every file opens with a `# dmbsim-<table> v<N>` line followed by the
//! header row. Floats use Rust's shortest round-trip formatting, so equal
//! runs give byte-identical files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use dmbsim_core::digest::Fingerprinter;

use crate::runner::Outcome;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Info,
    Pass,
    Fail,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Info => "info",
            Status::Pass => "pass",
            Status::Fail => "fail",
        }
    }

    pub fn of(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// One line of `summary.csv`: a measured value, the bound it is held to (if
/// any) and the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn info(&mut self, name: impl Into<String>, value: f64) {
        self.rows.push(SummaryRow {
            name: name.into(),
            value,
            bound: None,
            status: Status::Info,
        });
    }

    /// Records `value ≤ bound`.
    pub fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.rows.push(SummaryRow {
            name: name.into(),
            value,
            bound: Some(bound),
            status: Status::of(value <= bound),
        });
    }

    /// Records a yes/no outcome as `1` or `0` against a bound of `1`.
    pub fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.rows.push(SummaryRow {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            bound: Some(1.0),
            status: Status::of(ok),
        });
    }

    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|r| r.value)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(|r| r.status == Status::Fail)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

fn writer(table: &str, header: &[&str], out: &mut Vec<u8>) -> csv::Writer<Vec<u8>> {
    writeln!(out, "# dmbsim-{table} v{SCHEMA_VERSION}").expect("writing to memory");
    let mut w = csv::WriterBuilder::new().from_writer(std::mem::take(out));
    w.write_record(header).expect("writing to memory");
    w
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("flushing to memory")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn hex(x: u64) -> String {
    format!("{x:016x}")
}

pub fn regret_csv(o: &Outcome) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = writer(
        "regret",
        &[
            "seq_id",
            "node",
            "time",
            "loss_at_prediction",
            "loss_at_comparator",
            "regret",
            "cumulative_regret",
            "version",
            "period",
        ],
        &mut buf,
    );
    let mut cumulative = 0.0;
    for (i, r) in o.output.regret.rows().iter().enumerate() {
        cumulative += r.regret();
        let period = o.periods.as_ref().and_then(|p| p.row_period[i]);
        w.write_record([
            r.seq_id.to_string(),
            r.node.to_string(),
            r.time.to_string(),
            r.loss_at_prediction.to_string(),
            r.loss_at_comparator.to_string(),
            r.regret().to_string(),
            cumulative.to_string(),
            r.version.to_string(),
            opt(period),
        ])
        .expect("writing to memory");
    }
    finish(w)
}

pub fn updates_csv(o: &Outcome) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = writer(
        "updates",
        &[
            "time",
            "node",
            "version_before",
            "version_after",
            "batch_count",
            "dropped",
            "parent",
            "child",
        ],
        &mut buf,
    );
    let dropped = o.dropped.as_deref();
    for (i, u) in o.output.updates.iter().enumerate() {
        w.write_record([
            u.time.to_string(),
            u.node.to_string(),
            u.version_before.to_string(),
            u.version_after.to_string(),
            u.batch_count.to_string(),
            opt(dropped.map(|d| d[i].1)),
            hex(u.parent),
            hex(u.child),
        ])
        .expect("writing to memory");
    }
    finish(w)
}

pub fn periods_csv(o: &Outcome) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = writer(
        "periods",
        &["period", "start", "end", "examples", "regret", "status"],
        &mut buf,
    );
    for p in o.periods.iter().flat_map(|t| &t.periods) {
        w.write_record([
            p.index.to_string(),
            p.start.to_string(),
            p.end.to_string(),
            p.examples.to_string(),
            p.regret.to_string(),
            p.status.name().to_string(),
        ])
        .expect("writing to memory");
    }
    finish(w)
}

pub fn summary_csv(s: &Summary) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut w = writer("summary", &["name", "value", "bound", "status"], &mut buf);
    for r in &s.rows {
        w.write_record([
            r.name.clone(),
            r.value.to_string(),
            opt(r.bound),
            r.status.name().to_string(),
        ])
        .expect("writing to memory");
    }
    finish(w)
}

/// All four tables, by file name.
pub fn tables(o: &Outcome) -> [(&'static str, Vec<u8>); 4] {
    [
        ("regret.csv", regret_csv(o)),
        ("updates.csv", updates_csv(o)),
        ("periods.csv", periods_csv(o)),
        ("summary.csv", summary_csv(&o.summary)),
    ]
}

/// SHA-256 over every table in file-name order, as hex.
pub fn digest(o: &Outcome) -> String {
    let mut f = Fingerprinter::new();
    for (name, bytes) in tables(o) {
        f.bytes(name.as_bytes()).u64(bytes.len() as u64).bytes(&bytes);
    }
    f.finish_bytes().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the tables (and `trace.log` when the run kept its trace) to `dir`.
pub fn write_all(o: &Outcome, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in tables(o) {
        fs::write(dir.join(name), bytes)?;
    }
    if let Some(trace) = &o.output.trace {
        let mut f = io::BufWriter::new(fs::File::create(dir.join("trace.log"))?);
        for r in trace {
            writeln!(f, "{r}")?;
        }
        f.flush()?;
    }
    Ok(())
}
