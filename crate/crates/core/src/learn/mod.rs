//! Loss models, update rules, regret accounting and regret-bound evaluators.

mod accumulator;
pub mod bounds;
mod loss;
mod oracle;
mod regret;
mod rule;
mod vector;

pub use accumulator::GradientAccumulator;
pub use bounds::{
    admb_regret_bound, batch_size_policy, dmb_regret_bound, good_period_examples_bound, mawo_mu_bound,
    propagation_bound, serial_psi_bound, AdmbBound,
};
pub use loss::{
    comparator_optimum, loss_gradient, loss_value, Example, ExampleSource, LossKind, LossModel, PayloadDistribution,
};
pub use oracle::{offline_minimizer, OracleResult};
pub use regret::{RegretLedger, RegretRow};
pub use rule::{update_step, Perturbation, RuleKind, StepSize, UpdateRule};
pub use vector::{project, Predictor};
