//! Joint training of the extractor, estimator and task head against cached
//! pseudo maps, with validation-based checkpoint selection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cae::{gather_rows, minibatches, ConsistencyCae};
use super::estimator::{
    total_loss, total_loss_tape, EstimatorStack, LossWeights, StackWidths, TaskKind, TaskTarget,
};
use super::LikelihoodError;
use crate::adpen::Topology;
use crate::cohort::argmax;
use crate::autodiff::{adam_update, lr_at, AdamConfig, AdamState, LrSchedule, Parameterized, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub extractor_hidden: usize,
    pub feature_dim: usize,
    pub estimator_hidden: usize,
    pub task_hidden: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// Falls back to a per-task default when unset.
    pub learning_rate: Option<f64>,
    pub classification_learning_rate: f64,
    pub regression_learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_interval: usize,
    pub lambda_cons: f64,
    pub lambda_task: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            extractor_hidden: 128,
            feature_dim: 64,
            estimator_hidden: 256,
            task_hidden: 64,
            epochs: 200,
            batches_per_epoch: 10,
            learning_rate: None,
            classification_learning_rate: 1e-4,
            regression_learning_rate: 1e-2,
            lr_decay: 0.98,
            lr_decay_interval: 10,
            lambda_cons: 1.0,
            lambda_task: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn schedule(&self, kind: TaskKind) -> LrSchedule {
        let base = self.learning_rate.unwrap_or(if kind.is_classification() {
            self.classification_learning_rate
        } else {
            self.regression_learning_rate
        });
        LrSchedule {
            base,
            factor: self.lr_decay,
            interval: self.lr_decay_interval,
        }
    }

    pub fn widths(&self) -> StackWidths {
        StackWidths {
            extractor_hidden: self.extractor_hidden,
            feature_dim: self.feature_dim,
            estimator_hidden: self.estimator_hidden,
            task_hidden: self.task_hidden,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            consistency: self.lambda_cons,
            task: self.lambda_task,
        }
    }

    pub fn validate(&self, kind: TaskKind) -> Result<(), LikelihoodError> {
        self.schedule(kind)
            .validate()
            .map_err(|e| LikelihoodError::Config(e.to_string()))?;
        let widths = [self.extractor_hidden, self.feature_dim, self.estimator_hidden, self.task_hidden];
        if widths.contains(&0) || self.batches_per_epoch == 0 {
            return Err(LikelihoodError::Config("layer widths and batch count must be positive".into()));
        }
        if !(self.lambda_cons >= 0.0 && self.lambda_task >= 0.0) {
            return Err(LikelihoodError::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Imaging features, their cached pseudo maps and task targets, row-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorData {
    pub imaging: Tensor,
    pub maps: Tensor,
    pub targets: Vec<TaskTarget>,
}

impl EstimatorData {
    pub fn new(imaging: Tensor, maps: Tensor, targets: Vec<TaskTarget>) -> Result<Self, LikelihoodError> {
        let imaging = imaging.as_matrix();
        let maps = maps.as_matrix();
        if imaging.rows() != maps.rows() || maps.rows() != targets.len() {
            return Err(LikelihoodError::Validation(format!(
                "{} images, {} maps, {} targets",
                imaging.rows(),
                maps.rows(),
                targets.len()
            )));
        }
        Ok(Self {
            imaging,
            maps,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> EstimatorData {
        EstimatorData {
            imaging: gather_rows(&self.imaging, rows),
            maps: gather_rows(&self.maps, rows),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorEpoch {
    pub epoch: usize,
    pub learning_rate: f64,
    pub total: f64,
    pub estimation: f64,
    pub consistency: f64,
    pub task: f64,
    pub validation_loss: f64,
    /// Accuracy for classification, mean squared error for regression.
    pub validation_score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorLog {
    pub epochs: Vec<EstimatorEpoch>,
    pub best_epoch: usize,
}

impl EstimatorLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,learning_rate,total,estimation,consistency,task,validation_loss,validation_score\n",
        );
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.learning_rate,
                e.total,
                e.estimation,
                e.consistency,
                e.task,
                e.validation_loss,
                e.validation_score
            ));
        }
        out
    }
}

/// Accuracy of argmax predictions, or mean squared error of regression
/// outputs.
pub fn task_score(outputs: &Tensor, targets: &[TaskTarget]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let n = targets.len() as f64;
    match targets[0] {
        TaskTarget::Class(_) => {
            let hits = targets
                .iter()
                .enumerate()
                .filter(|(i, t)| matches!(t, TaskTarget::Class(c) if argmax(outputs.row(*i)) == *c))
                .count();
            hits as f64 / n
        }
        TaskTarget::Value(_) => {
            targets
                .iter()
                .enumerate()
                .map(|(i, t)| match t {
                    TaskTarget::Value(v) => (outputs.row(i)[0] - v).powi(2),
                    TaskTarget::Class(_) => 0.0,
                })
                .sum::<f64>()
                / n
        }
    }
}

fn improves(kind: TaskKind, score: f64, loss: f64, best: Option<(f64, f64)>) -> bool {
    let Some((best_score, best_loss)) = best else {
        return true;
    };
    if kind.is_classification() {
        score > best_score || (score == best_score && loss < best_loss)
    } else {
        score < best_score
    }
}

/// Optimizes the stack on `train` and keeps the epoch that does best on
/// `validation`: highest accuracy (lower loss on ties) for classification,
/// lowest squared error for regression. With an empty validation set the
/// last epoch is kept.
pub fn train_estimator(
    train: &EstimatorData,
    validation: &EstimatorData,
    cae: &ConsistencyCae,
    topology: Topology,
    kind: TaskKind,
    config: &EstimatorConfig,
) -> Result<(EstimatorStack, EstimatorLog), LikelihoodError> {
    cae.require_trained()?;
    config.validate(kind)?;
    if train.is_empty() {
        return Err(LikelihoodError::Validation("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stack = EstimatorStack::new(
        train.imaging.cols(),
        topology,
        cae.code_dim(),
        config.widths(),
        kind,
        &mut rng,
    );
    let schedule = config.schedule(kind);
    let weights = config.weights();
    let mut adam = AdamState::new(config.adam, stack.parameters().into_iter().map(|(_, t)| t));
    let mut log = EstimatorLog::default();
    let mut best: Option<(f64, f64)> = None;
    let mut best_stack = stack.clone();
    let mut tape = Tape::new();

    for epoch in 0..config.epochs {
        let lr = lr_at(&schedule, epoch);
        let mut rec = EstimatorEpoch {
            epoch,
            learning_rate: lr,
            ..EstimatorEpoch::default()
        };
        for batch in minibatches(train.len(), config.batches_per_epoch, &mut rng) {
            let part = train.subset(&batch);
            tape.clear();
            let obj = total_loss_tape(&mut tape, &stack, cae, &part.imaging, &part.maps, &part.targets, weights)?;
            let total = tape.scalar(obj.total);
            if !total.is_finite() {
                return Err(LikelihoodError::Diverged {
                    epoch,
                    detail: format!(
                        "estimation={} consistency={} task={}",
                        tape.scalar(obj.estimation),
                        tape.scalar(obj.consistency),
                        tape.scalar(obj.task)
                    ),
                });
            }
            let share = part.len() as f64 / train.len() as f64;
            rec.total += total * share;
            let per_sample = 1.0 / train.len() as f64;
            rec.estimation += tape.scalar(obj.estimation) * per_sample;
            rec.consistency += tape.scalar(obj.consistency) * per_sample;
            rec.task += tape.scalar(obj.task) * per_sample;

            let grads = tape.backward(obj.total)?;
            let like: Vec<Tensor> = stack.parameters().into_iter().map(|(_, t)| t.clone()).collect();
            let like: Vec<&Tensor> = like.iter().collect();
            let grads = grads.collect(&obj.params, &like);
            adam_update(&mut stack.parameters_mut(), &grads, &mut adam, lr)?;
        }

        if validation.is_empty() {
            best_stack = stack.clone();
            log.best_epoch = epoch;
        } else {
            rec.validation_loss = total_loss(
                &stack,
                cae,
                &validation.imaging,
                &validation.maps,
                &validation.targets,
                weights,
            )?;
            rec.validation_score = task_score(&stack.predict(cae, &validation.imaging)?, &validation.targets);
            if improves(kind, rec.validation_score, rec.validation_loss, best) {
                best = Some((rec.validation_score, rec.validation_loss));
                best_stack = stack.clone();
                log.best_epoch = epoch;
            }
        }
        log.epochs.push(rec);
    }
    Ok((best_stack, log))
}
