use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::oracle::offline_minimizer;
use super::vector::{dot, norm, project, sq_dist, Predictor};
use crate::simnet::NodeId;
use crate::{Error, Result};

/// One input of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Global arrival order; unique across the run.
    pub seq_id: u64,
    pub payload: Vec<f64>,
    /// Class label in `{-1, +1}` for the logistic model; unused (zero) for the
    /// quadratic model.
    pub label: f64,
    pub arrival_node: NodeId,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `f(w, z) = ½‖w − z‖²`
    Quadratic,
    /// `f(w, (x, y)) = ln(1 + exp(−y⟨w, x⟩))`
    Logistic,
}

/// Distribution the example payloads are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum PayloadDistribution {
    /// Independent components `z_k ~ N(mean_k, std²)`.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Features `x ~ N(0, feature_std² I)` rescaled into the ball of radius
    /// `feature_clip`; labels are `sign⟨teacher, x⟩`, flipped with
    /// probability `label_noise`.
    LogisticTeacher {
        teacher: Vec<f64>,
        feature_std: f64,
        feature_clip: f64,
        label_noise: f64,
    },
}

impl PayloadDistribution {
    pub fn dim(&self) -> usize {
        match self {
            PayloadDistribution::Gaussian { mean, .. } => mean.len(),
            PayloadDistribution::LogisticTeacher { teacher, .. } => teacher.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        match self {
            PayloadDistribution::Gaussian { mean, std } => {
                let z = mean
                    .iter()
                    .map(|m| {
                        let n: f64 = rng.sample(rand_distr::StandardNormal);
                        m + std * n
                    })
                    .collect();
                (z, 0.0)
            }
            PayloadDistribution::LogisticTeacher {
                teacher,
                feature_std,
                feature_clip,
                label_noise,
            } => {
                let normal = Normal::new(0.0, *feature_std).expect("validated std");
                let mut x: Vec<f64> = (0..teacher.len()).map(|_| normal.sample(rng)).collect();
                let n = norm(&x);
                if n > *feature_clip {
                    let s = feature_clip / n;
                    x.iter_mut().for_each(|v| *v *= s);
                }
                let mut y = if dot(teacher, &x) >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < *label_noise {
                    y = -y;
                }
                (x, y)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PayloadDistribution::Gaussian { mean, std } => {
                if mean.is_empty() {
                    return Err(Error::config("payload dimension must be at least 1"));
                }
                if !(*std >= 0.0 && std.is_finite()) {
                    return Err(Error::config("payload std must be finite and non-negative"));
                }
            }
            PayloadDistribution::LogisticTeacher {
                teacher,
                feature_std,
                feature_clip,
                label_noise,
            } => {
                if teacher.is_empty() {
                    return Err(Error::config("feature dimension must be at least 1"));
                }
                if !(*feature_std > 0.0) || !(*feature_clip > 0.0) {
                    return Err(Error::config("feature std and clip must be positive"));
                }
                if !(0.0..=0.5).contains(label_noise) {
                    return Err(Error::config("label noise must lie in [0, 0.5]"));
                }
            }
        }
        Ok(())
    }
}

/// Seeded example generator; payloads depend only on the seed and the order
/// in which they are drawn, so two runs that draw in `seq_id` order see the
/// same stream regardless of topology.
#[derive(Debug, Clone)]
pub struct ExampleSource {
    distribution: PayloadDistribution,
    rng: ChaCha8Rng,
    next_seq: u64,
}

impl ExampleSource {
    pub fn new(distribution: PayloadDistribution, rng: ChaCha8Rng) -> Self {
        ExampleSource {
            distribution,
            rng,
            next_seq: 0,
        }
    }

    pub fn next_example(&mut self, node: NodeId, time: f64) -> Example {
        let (payload, label) = self.distribution.sample(&mut self.rng);
        let seq_id = self.next_seq;
        self.next_seq += 1;
        Example {
            seq_id,
            payload,
            label,
            arrival_node: node,
            arrival_time: time,
        }
    }
}

/// A smooth convex loss together with the constants the regret bounds need.
#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    /// Lipschitz constant of the gradient.
    pub smoothness: f64,
    /// Bound on `E‖∇f(w, z) − ∇F(w)‖²` over the feasible set.
    pub variance: f64,
    /// Minimiser of the expected loss over the ball.
    pub comparator: Predictor,
    /// Radius `R` of the feasible ball.
    pub radius: f64,
}

impl LossModel {
    /// Quadratic loss over Gaussian payloads. `L = 1`, `σ² = d·std²` and the
    /// comparator is the projection of the mean onto the ball.
    pub fn quadratic(distribution: &PayloadDistribution, radius: f64) -> Result<Self> {
        distribution.validate()?;
        check_radius(radius)?;
        let PayloadDistribution::Gaussian { mean, std } = distribution else {
            return Err(Error::config("quadratic loss needs a Gaussian payload distribution"));
        };
        Ok(LossModel {
            kind: LossKind::Quadratic,
            smoothness: 1.0,
            variance: mean.len() as f64 * std * std,
            comparator: project(mean, radius),
            radius,
        })
    }

    /// Logistic loss over a teacher-labelled feature distribution.
    ///
    /// The comparator is computed once by the offline full-batch minimiser on
    /// `oracle_samples` fresh draws. The variance is estimated empirically as
    /// the largest gradient trace-variance over a handful of probe points
    /// (origin, comparator, and points on the sphere).
    pub fn logistic(distribution: &PayloadDistribution, radius: f64, oracle_samples: usize, seed: u64) -> Result<Self> {
        distribution.validate()?;
        check_radius(radius)?;
        let PayloadDistribution::LogisticTeacher {
            feature_clip, teacher, ..
        } = distribution
        else {
            return Err(Error::config("logistic loss needs a teacher feature distribution"));
        };
        if oracle_samples < 2 {
            return Err(Error::config("the offline oracle needs at least two samples"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<(Vec<f64>, f64)> = (0..oracle_samples).map(|_| distribution.sample(&mut rng)).collect();
        let mut model = LossModel {
            kind: LossKind::Logistic,
            smoothness: feature_clip * feature_clip / 4.0,
            variance: 0.0,
            comparator: Predictor::zeros(teacher.len()),
            radius,
        };
        let oracle = offline_minimizer(&model, &samples)?;
        model.comparator = oracle.minimizer;

        let d = teacher.len();
        let mut probes = alloc::vec![Predictor::zeros(d), model.comparator.clone()];
        for k in 0..d {
            let mut e = alloc::vec![0.0; d];
            e[k] = radius;
            probes.push(Predictor::from_vec(e.clone()));
            e[k] = -radius;
            probes.push(Predictor::from_vec(e));
        }
        model.variance = probes
            .iter()
            .map(|w| model.gradient_variance(w, &samples))
            .fold(0.0, f64::max);
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.comparator.dim()
    }

    /// Diameter `D = 2R` of the feasible ball.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn value(&self, w: &[f64], payload: &[f64], label: f64) -> Result<f64> {
        check_dim(w, payload)?;
        Ok(match self.kind {
            LossKind::Quadratic => 0.5 * sq_dist(w, payload),
            LossKind::Logistic => softplus(-label * dot(w, payload)),
        })
    }

    /// Adds `∇_w f(w, z)` into `acc`.
    pub fn add_gradient(&self, w: &[f64], payload: &[f64], label: f64, acc: &mut [f64]) -> Result<()> {
        check_dim(w, payload)?;
        check_dim(w, acc)?;
        match self.kind {
            LossKind::Quadratic => {
                for ((a, wi), zi) in acc.iter_mut().zip(w).zip(payload) {
                    *a += wi - zi;
                }
            }
            LossKind::Logistic => {
                let margin = label * dot(w, payload);
                let s = -label * sigmoid(-margin);
                for (a, xi) in acc.iter_mut().zip(payload) {
                    *a += s * xi;
                }
            }
        }
        Ok(())
    }

    pub fn gradient(&self, w: &[f64], payload: &[f64], label: f64) -> Result<Vec<f64>> {
        let mut g = alloc::vec![0.0; w.len()];
        self.add_gradient(w, payload, label, &mut g)?;
        Ok(g)
    }

    fn gradient_variance(&self, w: &Predictor, samples: &[(Vec<f64>, f64)]) -> f64 {
        let d = w.dim();
        let n = samples.len() as f64;
        let mut mean = alloc::vec![0.0; d];
        let mut sq = 0.0;
        let mut g = alloc::vec![0.0; d];
        for (x, y) in samples {
            g.iter_mut().for_each(|v| *v = 0.0);
            self.add_gradient(w.as_slice(), x, *y, &mut g)
                .expect("sample dimension");
            for (m, gi) in mean.iter_mut().zip(&g) {
                *m += gi;
            }
            sq += dot(&g, &g);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        // Unbiased trace-covariance estimate.
        ((sq / n) - dot(&mean, &mean)) * n / (n - 1.0)
    }
}

fn check_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::config("ball radius must be positive and finite"));
    }
    Ok(())
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + libm::log1p(libm::exp(-s))
    } else {
        libm::log1p(libm::exp(s))
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + libm::exp(-s))
    } else {
        let e = libm::exp(s);
        e / (1.0 + e)
    }
}

/// `f(w, z)` for the model.
pub fn loss_value(model: &LossModel, w: &Predictor, z: &Example) -> Result<f64> {
    model.value(w.as_slice(), &z.payload, z.label)
}

/// `∇_w f(w, z)` for the model.
pub fn loss_gradient(model: &LossModel, w: &Predictor, z: &Example) -> Result<Vec<f64>> {
    model.gradient(w.as_slice(), &z.payload, z.label)
}

/// `argmin_{‖w‖≤R} E_z f(w, z)` as stored on the model.
pub fn comparator_optimum(model: &LossModel) -> Predictor {
    model.comparator.clone()
}
