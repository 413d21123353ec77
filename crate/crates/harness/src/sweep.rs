//! Parameter grids: `KEY=RANGE` axes expanded into a Cartesian product of
//! scenarios that run in parallel.

use std::path::Path;

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::report::{self, Status};
use crate::runner::run_experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    Seed,
    Batch,
    SendPeriod,
    Rate,
    Examples,
    Rho,
}

impl SweepKey {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "seed" => SweepKey::Seed,
            "b" | "batch" => SweepKey::Batch,
            "t" | "T" | "send_period" => SweepKey::SendPeriod,
            "M" | "rate" => SweepKey::Rate,
            "m" => SweepKey::Examples,
            "rho" => SweepKey::Rho,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepKey::Seed => "seed",
            SweepKey::Batch => "b",
            SweepKey::SendPeriod => "t",
            SweepKey::Rate => "M",
            SweepKey::Examples => "m",
            SweepKey::Rho => "rho",
        }
    }

    fn integral(self) -> bool {
        !matches!(self, SweepKey::SendPeriod | SweepKey::Rho)
    }

    fn apply(self, c: &mut ScenarioConfig, v: f64) {
        match self {
            SweepKey::Seed => c.seed = v as u64,
            SweepKey::Batch => {
                c.batch = Some(v as u64);
                c.rho = None;
            }
            SweepKey::SendPeriod => c.send_period = v,
            SweepKey::Rate => c.rate = v as u32,
            SweepKey::Examples => c.m = v as u64,
            SweepKey::Rho => {
                c.rho = Some(v);
                c.batch = None;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

/// Parses `KEY=a,b,c`, `KEY=lo..hi` (integers, `hi` excluded) or
/// `KEY=lo:hi:step` (`hi` included).
pub fn parse_axis(spec: &str) -> anyhow::Result<Axis> {
    let (k, range) = spec
        .split_once('=')
        .ok_or_else(|| anyhow::anyhow!("sweep axis `{spec}` must look like KEY=RANGE"))?;
    let key = SweepKey::parse(k.trim())
        .ok_or_else(|| anyhow::anyhow!("unknown sweep key `{k}` (expected seed, b, t, M, m or rho)"))?;
    let num = |s: &str| -> anyhow::Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| anyhow::anyhow!("`{s}` is not a number in sweep axis `{spec}`"))
    };
    let values: Vec<f64> = if let Some((lo, hi)) = range.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo.fract() != 0.0 || hi.fract() != 0.0 {
            anyhow::bail!("`lo..hi` ranges take integers");
        }
        (lo as i64..hi as i64).map(|x| x as f64).collect()
    } else if range.contains(':') {
        let parts: Vec<&str> = range.split(':').collect();
        let [lo, hi, step] = parts[..] else {
            anyhow::bail!("stepped ranges look like lo:hi:step");
        };
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0) {
            anyhow::bail!("sweep step must be > 0");
        }
        let n = ((hi - lo) / step + 1e-9).floor();
        if n < 0.0 {
            anyhow::bail!("sweep range `{range}` is empty");
        }
        (0..=n as i64).map(|i| lo + i as f64 * step).collect()
    } else {
        range.split(',').map(num).collect::<anyhow::Result<_>>()?
    };
    if values.is_empty() {
        anyhow::bail!("sweep axis `{spec}` has no values");
    }
    if key.integral() && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
        anyhow::bail!("sweep key {} takes non-negative integers", key.name());
    }
    Ok(Axis { key, values })
}

/// One grid point as `(label, assignments, config)`.
pub type GridPoint = (String, Vec<(SweepKey, f64)>, ScenarioConfig);

/// Every point of the grid, in lexicographic axis order.
pub fn expand(base: &ScenarioConfig, axes: &[Axis]) -> Vec<GridPoint> {
    let mut points: Vec<Vec<(SweepKey, f64)>> = vec![Vec::new()];
    for a in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                a.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((a.key, *v));
                    q
                })
            })
            .collect();
    }
    points
        .into_iter()
        .map(|p| {
            let mut c = base.clone();
            for (k, v) in &p {
                k.apply(&mut c, *v);
            }
            let label = p
                .iter()
                .map(|(k, v)| format!("{}={v}", k.name()))
                .collect::<Vec<_>>()
                .join("_");
            (if label.is_empty() { "base".into() } else { label }, p, c)
        })
        .collect()
}

/// Runs every grid point, writes its tables to `out/<label>/` and the merged
/// summaries to `out/sweep.csv`. Returns true iff no bound comparison failed.
pub fn run_sweep(base: &ScenarioConfig, axes: &[Axis], out: &Path) -> anyhow::Result<bool> {
    let points = expand(base, axes);
    let results: Vec<anyhow::Result<report::Summary>> = points
        .par_iter()
        .map(|(label, _, c)| {
            let o = run_experiment(c, false)?;
            report::write_all(&o, &out.join(label))?;
            Ok(o.summary)
        })
        .collect();
    // Merge single-threaded, in grid order.
    let mut buf = b"# dmbsim-sweep v1\n".to_vec();
    let mut w = csv::Writer::from_writer(std::mem::take(&mut buf));
    let mut header = vec!["scenario".to_string()];
    header.extend(axes.iter().map(|a| a.key.name().to_string()));
    header.extend(["name", "value", "bound", "status"].map(String::from));
    w.write_record(&header)?;
    let mut ok = true;
    for ((label, assign, _), summary) in points.iter().zip(results) {
        let summary = summary?;
        for r in &summary.rows {
            ok &= r.status != Status::Fail;
            let mut rec = vec![label.clone()];
            rec.extend(assign.iter().map(|(_, v)| v.to_string()));
            rec.extend([
                r.name.clone(),
                r.value.to_string(),
                r.bound.map(|b| b.to_string()).unwrap_or_default(),
                r.status.name().to_string(),
            ]);
            w.write_record(&rec)?;
        }
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sweep.csv"), w.into_inner()?)?;
    Ok(ok)
}
