use alloc::vec::Vec;

use super::loss::LossModel;
use super::vector::{dot, norm, project, Predictor};
use crate::{Error, Result};

/// Result of the offline full-batch minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub minimizer: Predictor,
    /// Norm of the projected-gradient mapping at the minimiser; equals the
    /// plain gradient norm when the minimiser is interior.
    pub gradient_norm: f64,
    pub iterations: usize,
}

const TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 20_000;

/// Minimises the sample-average loss over the model's ball by projected
/// gradient descent with Armijo backtracking.
pub fn offline_minimizer(model: &LossModel, samples: &[(Vec<f64>, f64)]) -> Result<OracleResult> {
    if samples.is_empty() {
        return Err(Error::config("offline oracle needs samples"));
    }
    let d = model.dim();
    let objective = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut g = alloc::vec![0.0; d];
        let mut f = 0.0;
        for (x, y) in samples {
            f += model.value(w, x, *y)?;
            model.add_gradient(w, x, *y, &mut g)?;
        }
        let n = samples.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Ok((f / n, g))
    };

    let mut w = Predictor::zeros(d);
    let mut step = 1.0 / model.smoothness.max(1e-12);
    let (mut f, mut g) = objective(w.as_slice())?;
    for it in 0..MAX_ITERATIONS {
        let mapping = gradient_mapping(w.as_slice(), &g, step, model.radius);
        if mapping < TOLERANCE {
            return Ok(OracleResult {
                minimizer: w,
                gradient_norm: mapping,
                iterations: it,
            });
        }
        // Backtrack until the sufficient-decrease condition holds, then let
        // the step grow again so flat regions do not stall progress.
        loop {
            let trial: Vec<f64> = w.as_slice().iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let cand = project(&trial, model.radius);
            let diff: Vec<f64> = cand.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a - b).collect();
            let (fc, gc) = objective(cand.as_slice())?;
            if fc <= f + dot(&g, &diff) + dot(&diff, &diff) / (2.0 * step) + 1e-15 {
                w = cand;
                f = fc;
                g = gc;
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::config("offline oracle failed to make progress"));
            }
        }
    }
    Err(Error::config("offline oracle did not converge"))
}

fn gradient_mapping(w: &[f64], g: &[f64], step: f64, radius: f64) -> f64 {
    let trial: Vec<f64> = w.iter().zip(g).map(|(wi, gi)| wi - step * gi).collect();
    let p = project(&trial, radius);
    let diff: Vec<f64> = w.iter().zip(p.as_slice()).map(|(a, b)| a - b).collect();
    norm(&diff) / step
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{LossKind, PayloadDistribution};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_oracle_recovers_the_sample_mean() {
        let samples = vec![(vec![1.0, 0.0], 0.0), (vec![0.0, 0.5], 0.0), (vec![0.2, -0.2], 0.0)];
        let model = LossModel {
            kind: LossKind::Quadratic,
            smoothness: 1.0,
            variance: 0.0,
            comparator: Predictor::zeros(2),
            radius: 10.0,
        };
        let r = offline_minimizer(&model, &samples).unwrap();
        assert!((r.minimizer.as_slice()[0] - 0.4).abs() < 1e-6);
        assert!((r.minimizer.as_slice()[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn constrained_optimum_sits_on_the_sphere() {
        let samples = vec![(vec![3.0, 4.0], 0.0)];
        let model = LossModel {
            kind: LossKind::Quadratic,
            smoothness: 1.0,
            variance: 0.0,
            comparator: Predictor::zeros(2),
            radius: 1.0,
        };
        let r = offline_minimizer(&model, &samples).unwrap();
        assert!((r.minimizer.as_slice()[0] - 0.6).abs() < 1e-6);
        assert!((r.minimizer.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn logistic_oracle_reaches_a_small_gradient() {
        let dist = PayloadDistribution::LogisticTeacher {
            teacher: vec![2.0, -1.0],
            feature_std: 1.0,
            feature_clip: 3.0,
            label_noise: 0.1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<_> = (0..5_000).map(|_| dist.sample(&mut rng)).collect();
        let model = LossModel {
            kind: LossKind::Logistic,
            smoothness: 2.25,
            variance: 0.0,
            comparator: Predictor::zeros(2),
            radius: 10.0,
        };
        let r = offline_minimizer(&model, &samples).unwrap();
        assert!(r.gradient_norm < 1e-6);
        // Independent check of stationarity with a fresh gradient evaluation.
        let mut g = vec![0.0; 2];
        for (x, y) in &samples {
            model.add_gradient(r.minimizer.as_slice(), x, *y, &mut g).unwrap();
        }
        let n = samples.len() as f64;
        assert!(norm(&g) / n < 1e-6);
    }
}
