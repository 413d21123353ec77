//! Single-node mini-batch learner: the reference the distributed protocols
//! are compared against.

use crate::learn::{Example, ExampleSource, GradientAccumulator, LossModel, Predictor, RegretLedger, UpdateRule};
use crate::record::{ChangeCause, Recorder, UpdateRow};
use crate::simnet::{Context, NodeId, Protocol};
use crate::Result;

/// Predicts with the rule's current point, accumulates gradients there and
/// steps once `batch` of them are in.
#[derive(Debug, Clone)]
pub struct MiniBatchLearner {
    rule: UpdateRule,
    acc: GradientAccumulator,
    batch: u64,
    fingerprint: u64,
}

/// A finished mini-batch step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub parent: u64,
    pub child: u64,
    pub batch_count: u64,
    pub provenance: Option<alloc::vec::Vec<u64>>,
}

impl MiniBatchLearner {
    pub fn new(rule: UpdateRule, batch: u64, track_provenance: bool) -> Self {
        let dim = rule.current().dim();
        let fingerprint = rule.current().fingerprint();
        MiniBatchLearner {
            rule,
            acc: GradientAccumulator::new(dim, track_provenance),
            batch: batch.max(1),
            fingerprint,
        }
    }

    pub fn predictor(&self) -> &Predictor {
        self.rule.current()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn version(&self) -> u64 {
        self.rule.steps_taken()
    }

    /// Adds `z`'s gradient; steps when the batch is full.
    pub fn observe(&mut self, model: &LossModel, z: &Example) -> Result<Option<Step>> {
        self.acc.add_example(model, self.rule.current().as_slice(), z)?;
        if self.acc.count() < self.batch {
            return Ok(None);
        }
        let batch = self.acc.take();
        self.rule.step(&batch.average()?, batch.count())?;
        let parent = self.fingerprint;
        self.fingerprint = self.rule.current().fingerprint();
        Ok(Some(Step {
            parent,
            child: self.fingerprint,
            batch_count: batch.count(),
            provenance: batch.into_provenance(),
        }))
    }
}

/// Plain loop over the first `m` examples of `source`; no simulator involved.
pub fn run_serial(
    model: &LossModel,
    rule: UpdateRule,
    source: &mut ExampleSource,
    m: u64,
    batch: u64,
) -> Result<RegretLedger> {
    let mut learner = MiniBatchLearner::new(rule, batch, false);
    let mut rec = Recorder::new(model.clone(), false);
    for i in 0..m {
        let z = source.next_example(NodeId(0), i as f64);
        let fp = learner.fingerprint();
        rec.predict(
            &z,
            NodeId(0),
            z.arrival_time,
            learner.predictor(),
            fp,
            learner.version(),
            fp,
        )?;
        learner.observe(model, &z)?;
    }
    Ok(rec.regret)
}

/// The serial learner hosted on a one-node simulator, so its output has the
/// same shape as the distributed runs.
#[derive(Debug, Clone)]
pub struct SerialProtocol {
    learner: MiniBatchLearner,
    template: MiniBatchLearner,
    pub recorder: Recorder,
}

impl SerialProtocol {
    pub fn new(rule: UpdateRule, batch: u64, recorder: Recorder) -> Self {
        let learner = MiniBatchLearner::new(rule, batch, recorder.track_provenance());
        SerialProtocol {
            template: learner.clone(),
            learner,
            recorder,
        }
    }
}

impl Protocol for SerialProtocol {
    type Msg = ();

    fn init(&mut self, ctx: &mut Context<'_, ()>) -> Result<()> {
        self.learner = self.template.clone();
        let fp = self.learner.fingerprint();
        self.recorder.state(ctx.now(), ctx.node(), 0, fp, ChangeCause::Init);
        Ok(())
    }

    fn on_example(&mut self, ctx: &mut Context<'_, ()>, z: Example) -> Result<()> {
        let fp = self.learner.fingerprint();
        let version = self.learner.version();
        self.recorder
            .predict(&z, ctx.node(), ctx.now(), self.learner.predictor(), fp, version, fp)?;
        if let Some(step) = self.learner.observe(self.recorder.model(), &z)? {
            self.recorder.update(UpdateRow {
                time: ctx.now(),
                node: ctx.node(),
                version_before: version,
                version_after: version + 1,
                batch_count: step.batch_count,
                parent: step.parent,
                child: step.child,
                provenance: step.provenance,
            });
            self.recorder
                .state(ctx.now(), ctx.node(), version + 1, step.child, ChangeCause::Update);
        }
        Ok(())
    }

    fn on_timer(&mut self, _: &mut Context<'_, ()>, _: u64) -> Result<()> {
        Ok(())
    }

    fn on_message(&mut self, _: &mut Context<'_, ()>, _: NodeId, _: ()) -> Result<()> {
        Ok(())
    }
}
