use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vector::{project, Predictor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// `w ← Π(w − η_j ḡ)`
    ProjectedGradient,
    /// `w ← Π(−G_j / β_j)` with `G_j` the running sum of averaged gradients.
    DualAveraging,
}

/// Step-size schedule indexed by the (1-based) step number `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `η_j = D / (L·D + σ_eff·√j)` with `σ_eff² = σ²/b`.
    VarianceAdaptive {
        diameter: f64,
        smoothness: f64,
        effective_sigma: f64,
    },
}

impl StepSize {
    pub fn at(&self, step: u64) -> f64 {
        match *self {
            StepSize::Constant(eta) => eta,
            StepSize::VarianceAdaptive {
                diameter,
                smoothness,
                effective_sigma,
            } => diameter / (smoothness * diameter + effective_sigma * libm::sqrt(step as f64)),
        }
    }
}

/// Seeded uniform perturbation applied after every step, turning the rule
/// into a randomised one. The noise for step `j` depends only on `(seed, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub scale: f64,
    pub seed: u64,
}

/// A gradient-based online update rule together with its state.
///
/// The rule owns the current predictor; every step consumes the average of
/// gradients computed at that predictor and leaves the new one in the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRule {
    kind: RuleKind,
    step_size: StepSize,
    radius: f64,
    current: Predictor,
    gradient_sum: Vec<f64>,
    steps_taken: u64,
    perturbation: Option<Perturbation>,
}

impl UpdateRule {
    /// A fresh rule sitting at the centre of the ball.
    pub fn new(kind: RuleKind, step_size: StepSize, radius: f64, dim: usize) -> Self {
        UpdateRule {
            kind,
            step_size,
            radius,
            current: Predictor::zeros(dim),
            gradient_sum: alloc::vec![0.0; dim],
            steps_taken: 0,
            perturbation: None,
        }
    }

    /// The default schedule: variance-adaptive steps with `σ_eff² = σ²/b`.
    pub fn variance_adaptive(
        kind: RuleKind,
        radius: f64,
        smoothness: f64,
        variance: f64,
        batch: u64,
        dim: usize,
    ) -> Self {
        let step = StepSize::VarianceAdaptive {
            diameter: 2.0 * radius,
            smoothness,
            effective_sigma: libm::sqrt(variance / batch.max(1) as f64),
        };
        UpdateRule::new(kind, step, radius, dim)
    }

    pub fn with_perturbation(mut self, p: Option<Perturbation>) -> Self {
        self.perturbation = p;
        self
    }

    /// Restarts from `w`, as if no step had been taken.
    pub fn starting_at(mut self, w: Predictor) -> Self {
        self.current = w;
        self
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn current(&self) -> &Predictor {
        &self.current
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Advances one step with the averaged gradient of `batch_count` examples.
    pub fn step(&mut self, avg_gradient: &[f64], batch_count: u64) -> Result<&Predictor> {
        if batch_count == 0 {
            return Err(Error::protocol("update step with an empty batch"));
        }
        if avg_gradient.len() != self.current.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.current.dim(),
                actual: avg_gradient.len(),
            });
        }
        let j = self.steps_taken + 1;
        let eta = self.step_size.at(j);
        let mut next: Vec<f64> = match self.kind {
            RuleKind::ProjectedGradient => self
                .current
                .as_slice()
                .iter()
                .zip(avg_gradient)
                .map(|(w, g)| w - eta * g)
                .collect(),
            RuleKind::DualAveraging => {
                for (s, g) in self.gradient_sum.iter_mut().zip(avg_gradient) {
                    *s += g;
                }
                self.gradient_sum.iter().map(|s| -eta * s).collect()
            }
        };
        if let Some(p) = self.perturbation {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            rng.set_stream(j);
            for v in next.iter_mut() {
                *v += p.scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        self.current = project(&next, self.radius);
        self.steps_taken = j;
        Ok(&self.current)
    }
}

/// Applies one step of `rule` and returns the new predictor.
pub fn update_step(rule: &mut UpdateRule, avg_gradient: &[f64], batch_count: u64) -> Result<Predictor> {
    rule.step(avg_gradient, batch_count).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_is_a_fixed_point_of_projected_gradient() {
        let mut r = UpdateRule::variance_adaptive(RuleKind::ProjectedGradient, 1.0, 1.0, 1.0, 4, 2);
        assert_eq!(update_step(&mut r, &[0.0, 0.0], 4).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(r.steps_taken(), 1);
    }

    #[test]
    fn constant_step_projected_gradient_example() {
        let mut r = UpdateRule::new(RuleKind::ProjectedGradient, StepSize::Constant(0.5), 10.0, 1)
            .starting_at(Predictor::from_vec(vec![1.0]));
        assert_eq!(update_step(&mut r, &[1.0], 1).unwrap().as_slice(), &[0.5]);
    }

    #[test]
    fn dual_averaging_with_zero_history_returns_the_centre() {
        let mut r = UpdateRule::variance_adaptive(RuleKind::DualAveraging, 2.0, 1.0, 1.0, 1, 3);
        for _ in 0..3 {
            assert_eq!(update_step(&mut r, &[0.0; 3], 1).unwrap().as_slice(), &[0.0; 3]);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut r = UpdateRule::new(RuleKind::ProjectedGradient, StepSize::Constant(0.1), 1.0, 1);
        assert!(matches!(r.step(&[1.0], 0), Err(Error::Protocol(_))));
        assert_eq!(r.steps_taken(), 0);
    }

    #[test]
    fn variance_adaptive_schedule_values() {
        let s = StepSize::VarianceAdaptive {
            diameter: 2.0,
            smoothness: 1.0,
            effective_sigma: 0.5,
        };
        assert_eq!(s.at(1), 2.0 / 2.5);
        assert_eq!(s.at(4), 2.0 / 3.0);
    }

    #[test]
    fn perturbation_depends_only_on_seed_and_step() {
        let p = Some(Perturbation { scale: 0.1, seed: 9 });
        let mut a = UpdateRule::new(RuleKind::ProjectedGradient, StepSize::Constant(0.1), 1.0, 2).with_perturbation(p);
        let mut b = a.clone();
        a.step(&[0.2, 0.1], 3).unwrap();
        b.step(&[0.2, 0.1], 3).unwrap();
        assert_eq!(a.current(), b.current());
        assert_ne!(a.current().as_slice(), &[-0.02, -0.01]);
    }

    proptest! {
        #[test]
        fn every_step_stays_in_the_ball(
            grads in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 2), 1..30),
            dual in any::<bool>(),
            radius in 0.1f64..5.0,
        ) {
            let kind = if dual { RuleKind::DualAveraging } else { RuleKind::ProjectedGradient };
            let mut r = UpdateRule::variance_adaptive(kind, radius, 1.0, 2.0, 8, 2)
                .with_perturbation(Some(Perturbation { scale: 0.3, seed: 1 }));
            for g in &grads {
                let w = update_step(&mut r, g, 8).unwrap();
                prop_assert!(w.norm() <= radius * (1.0 + 1e-12));
            }
            prop_assert_eq!(r.steps_taken(), grads.len() as u64);
        }
    }
}
