use alloc::vec::Vec;

use crate::digest::{Fingerprint, Fingerprinter};

/// A point of the feasible set: the Euclidean ball of some radius `R`
/// centred at the origin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictor(Vec<f64>);

impl Predictor {
    pub fn zeros(dim: usize) -> Self {
        Predictor(alloc::vec![0.0; dim])
    }

    /// Wraps raw coordinates. The caller is responsible for feasibility; use
    /// [`project`] when the point may lie outside the ball.
    pub fn from_vec(coords: Vec<f64>) -> Self {
        Predictor(coords)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint_u64()
    }
}

impl Fingerprint for Predictor {
    fn fingerprint(&self, f: &mut Fingerprinter) {
        f.f64s(&self.0);
    }
}

/// Euclidean projection onto the ball of radius `radius`.
pub fn project(w: &[f64], radius: f64) -> Predictor {
    let n = norm(w);
    if n <= radius {
        Predictor(w.to_vec())
    } else {
        let s = radius / n;
        Predictor(w.iter().map(|x| x * s).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
