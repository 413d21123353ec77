use alloc::vec::Vec;

use super::loss::{Example, LossModel};
use crate::{Error, Result};

/// Sum of gradients plus how many went into it.
///
/// When provenance tracking is enabled the accumulator also keeps the
/// `seq_id` of every contributing example, which is what the gradient
/// uniqueness checks consume.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    sum: Vec<f64>,
    count: u64,
    provenance: Option<Vec<u64>>,
}

impl GradientAccumulator {
    pub fn new(dim: usize, track_provenance: bool) -> Self {
        GradientAccumulator {
            sum: alloc::vec![0.0; dim],
            count: 0,
            provenance: track_provenance.then(Vec::new),
        }
    }

    pub fn from_parts(sum: Vec<f64>, count: u64, provenance: Option<Vec<u64>>) -> Self {
        GradientAccumulator { sum, count, provenance }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn provenance(&self) -> Option<&[u64]> {
        self.provenance.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Adds `∇f(w, z)` and records `z.seq_id`.
    pub fn add_example(&mut self, model: &LossModel, w: &[f64], z: &Example) -> Result<()> {
        model.add_gradient(w, &z.payload, z.label, &mut self.sum)?;
        self.count += 1;
        if let Some(p) = &mut self.provenance {
            p.push(z.seq_id);
        }
        Ok(())
    }

    /// Adds another accumulator's contents.
    pub fn merge(&mut self, other: &GradientAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.count += other.count;
        if let (Some(p), Some(q)) = (&mut self.provenance, &other.provenance) {
            p.extend_from_slice(q);
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.sum.iter_mut().for_each(|v| *v = 0.0);
        self.count = 0;
        if let Some(p) = &mut self.provenance {
            p.clear();
        }
    }

    /// Moves the contents out, leaving an empty accumulator behind.
    pub fn take(&mut self) -> GradientAccumulator {
        let empty = GradientAccumulator::new(self.dim(), self.provenance.is_some());
        core::mem::replace(self, empty)
    }

    /// `sum / count`; an empty accumulator has no average.
    pub fn average(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::protocol("average of an empty gradient batch"));
        }
        let c = self.count as f64;
        Ok(self.sum.iter().map(|v| v / c).collect())
    }

    pub fn into_provenance(self) -> Option<Vec<u64>> {
        self.provenance
    }
}
