use alloc::vec::Vec;

use crate::simnet::NodeId;

/// One serviced example.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub seq_id: u64,
    pub node: NodeId,
    pub time: f64,
    pub loss_at_prediction: f64,
    pub loss_at_comparator: f64,
    /// Epoch (synchronous and master-worker protocols) or update count
    /// (asynchronous protocol) of the predictor used.
    pub version: u64,
    /// Fingerprint of the predictor the prediction was made with.
    pub predictor: u64,
    /// Fingerprint of the predictor the gradient was taken at. Differs from
    /// `predictor` only for the asynchronous protocol, which predicts with
    /// the running average.
    pub gradient_at: u64,
}

impl RegretRow {
    pub fn regret(&self) -> f64 {
        self.loss_at_prediction - self.loss_at_comparator
    }
}

/// Per-example loss ledger; cumulative regret is `Σ(f(w_i, z_i) − f(w*, z_i))`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    rows: Vec<RegretRow>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: RegretRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[RegretRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn cumulative(&self) -> f64 {
        self.rows.iter().map(RegretRow::regret).sum()
    }

    /// Regret over examples whose `seq_id` is below `m`.
    pub fn regret_before(&self, m: u64) -> f64 {
        self.rows.iter().filter(|r| r.seq_id < m).map(RegretRow::regret).sum()
    }

    pub fn into_rows(self) -> Vec<RegretRow> {
        self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seq: u64, a: f64, b: f64) -> RegretRow {
        RegretRow {
            seq_id: seq,
            node: NodeId(0),
            time: seq as f64,
            loss_at_prediction: a,
            loss_at_comparator: b,
            version: 0,
            predictor: 0,
            gradient_at: 0,
        }
    }

    #[test]
    fn cumulative_and_prefix_regret() {
        let mut l = RegretLedger::new();
        l.push(row(0, 1.0, 0.5));
        l.push(row(2, 0.25, 0.5));
        l.push(row(1, 2.0, 1.0));
        assert_eq!(l.cumulative(), 1.25);
        assert_eq!(l.regret_before(2), 1.5);
        assert_eq!(l.regret_before(0), 0.0);
    }
}
