//! Paired serial-versus-distributed runs on identical example streams.

use rayon::prelude::*;

use crate::config::{ProtocolName, ScenarioConfig};
use crate::runner::run_experiment;

/// One paired measurement. `ratio` is distributed over serial regret on the
/// first `checkpoint` examples of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub seed: u64,
    pub checkpoint: u64,
    pub serial: f64,
    pub distributed: f64,
    pub ratio: f64,
}

/// Runs `distributed` and a serial twin (same seed, payloads and `m`, batch
/// `serial_batch`) for every seed, and reports the regret ratio at each
/// checkpoint.
pub fn compare_protocols(
    distributed: &ScenarioConfig,
    serial_batch: u64,
    seeds: &[u64],
    checkpoints: &[u64],
) -> anyhow::Result<Vec<CompareRow>> {
    let per_seed: Vec<anyhow::Result<Vec<CompareRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut d = distributed.clone();
            d.seed = seed;
            let mut s = d.clone();
            s.protocol = ProtocolName::Serial;
            s.batch = Some(serial_batch);
            s.rho = None;
            s.faults.clear();
            s.random_faults = None;
            s.weights = None;
            let (dr, sr) = rayon::join(|| run_experiment(&d, false), || run_experiment(&s, false));
            let (dr, sr) = (dr?, sr?);
            Ok(checkpoints
                .iter()
                .map(|&c| {
                    let serial = sr.output.regret.regret_before(c);
                    let distributed = dr.output.regret.regret_before(c);
                    CompareRow {
                        seed,
                        checkpoint: c,
                        serial,
                        distributed,
                        ratio: distributed / serial,
                    }
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}

/// The comparison as a versioned CSV table.
pub fn compare_csv(rows: &[CompareRow]) -> Vec<u8> {
    let mut buf = b"# dmbsim-compare v1\n".to_vec();
    let mut w = csv::Writer::from_writer(std::mem::take(&mut buf));
    w.write_record(["seed", "checkpoint", "serial_regret", "distributed_regret", "ratio"])
        .expect("writing to memory");
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.checkpoint.to_string(),
            r.serial.to_string(),
            r.distributed.to_string(),
            r.ratio.to_string(),
        ])
        .expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}
