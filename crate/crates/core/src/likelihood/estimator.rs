//! Imaging-side estimator: feature extractor, map estimator and task head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cae::ConsistencyCae;
use super::map::{LikelihoodMap, MapKind};
use super::LikelihoodError;
use crate::adpen::Topology;
use crate::autodiff::{
    sigmoid, Activation, AutodiffError, Mlp, Parameterized, Tape, Tensor, Var,
};

/// Maps imaging features to a latent vector `z`. Implementations record
/// their own parameters on the tape and hand back the corresponding vars in
/// [`Parameterized::parameters`] order.
pub trait FeatureExtractor: Parameterized {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &Tensor) -> Result<Tensor, AutodiffError>;
    fn forward_tape(&self, tape: &mut Tape, x: Var) -> Result<(Var, Vec<Var>), AutodiffError>;
}

/// `input → hidden → output`, ReLU after both layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseExtractor {
    pub mlp: Mlp,
}

impl DenseExtractor {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(&[input, hidden, output], Activation::Relu, Activation::Relu, rng),
        }
    }
}

impl Parameterized for DenseExtractor {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        self.mlp.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.mlp.parameters_mut()
    }
}

impl FeatureExtractor for DenseExtractor {
    fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        self.mlp.forward(x)
    }

    fn forward_tape(&self, tape: &mut Tape, x: Var) -> Result<(Var, Vec<Var>), AutodiffError> {
        let bound = self.mlp.bind(tape);
        let z = bound.forward(tape, x)?;
        Ok((z, bound.vars()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Classification { num_classes: usize },
    /// Single target in `[0, 1]`.
    Regression,
}

impl TaskKind {
    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Classification { num_classes } => num_classes,
            TaskKind::Regression => 1,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::Classification { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTarget {
    Class(usize),
    Value(f64),
}

impl TaskTarget {
    fn check(self, kind: TaskKind) -> Result<(), LikelihoodError> {
        match (self, kind) {
            (TaskTarget::Class(c), TaskKind::Classification { num_classes }) if c < num_classes => Ok(()),
            (TaskTarget::Class(c), TaskKind::Classification { num_classes }) => Err(
                LikelihoodError::Validation(format!("label {c} out of range for {num_classes} classes")),
            ),
            (TaskTarget::Value(v), TaskKind::Regression) if v.is_finite() => Ok(()),
            _ => Err(LikelihoodError::Validation(format!("target {self:?} does not fit task {kind:?}"))),
        }
    }
}

/// `code → hidden → outputs`; softmax for classes, sigmoid for regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub mlp: Mlp,
    pub kind: TaskKind,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(code_dim: usize, hidden: usize, kind: TaskKind, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(&[code_dim, hidden, kind.output_dim()], Activation::Relu, Activation::Identity, rng),
            kind,
        }
    }

    /// Class probabilities (`n × C`) or regression outputs (`n × 1`).
    pub fn predict(&self, codes: &Tensor) -> Result<Tensor, LikelihoodError> {
        let mut out = self.mlp.forward(codes)?;
        match self.kind {
            TaskKind::Classification { .. } => {
                for r in 0..out.rows() {
                    let p = crate::autodiff::softmax(out.row(r));
                    out.row_mut(r).copy_from_slice(&p);
                }
            }
            TaskKind::Regression => out.values_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
        Ok(out)
    }
}

/// Extractor `E_X`, estimator `F` (sigmoid over `K` units) and task head `C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStack<E = DenseExtractor> {
    pub extractor: E,
    pub estimator: Mlp,
    pub head: TaskHead,
    pub topology: Topology,
}

/// Layer widths for [`EstimatorStack::new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackWidths {
    pub extractor_hidden: usize,
    pub feature_dim: usize,
    pub estimator_hidden: usize,
    pub task_hidden: usize,
}

impl EstimatorStack<DenseExtractor> {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        topology: Topology,
        code_dim: usize,
        widths: StackWidths,
        kind: TaskKind,
        rng: &mut R,
    ) -> Self {
        let extractor = DenseExtractor::new(input_dim, widths.extractor_hidden, widths.feature_dim, rng);
        Self::with_extractor(extractor, topology, code_dim, widths, kind, rng)
    }
}

impl<E: FeatureExtractor> EstimatorStack<E> {
    pub fn with_extractor<R: Rng + ?Sized>(
        extractor: E,
        topology: Topology,
        code_dim: usize,
        widths: StackWidths,
        kind: TaskKind,
        rng: &mut R,
    ) -> Self {
        let estimator = Mlp::new(
            &[extractor.output_dim(), widths.estimator_hidden, topology.size()],
            Activation::Relu,
            Activation::Sigmoid,
            rng,
        );
        let head = TaskHead::new(code_dim, widths.task_hidden, kind, rng);
        Self {
            extractor,
            estimator,
            head,
            topology,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    pub fn map_len(&self) -> usize {
        self.topology.size()
    }

    fn check_imaging(&self, imaging: &Tensor) -> Result<(), LikelihoodError> {
        if imaging.cols() != self.input_dim() {
            return Err(LikelihoodError::Validation(format!(
                "imaging has {} features, extractor expects {}",
                imaging.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Estimated maps `σ(F(E_X(X)))`, `n × K`.
    pub fn estimate(&self, imaging: &Tensor) -> Result<Tensor, LikelihoodError> {
        let imaging = imaging.as_matrix();
        self.check_imaging(&imaging)?;
        Ok(self.estimator.forward(&self.extractor.forward(&imaging)?)?)
    }

    pub fn estimate_map(&self, features: &[f64]) -> Result<LikelihoodMap, LikelihoodError> {
        let x = Tensor::matrix(1, features.len(), features.to_vec())?;
        let rho = self.estimate(&x)?;
        LikelihoodMap::new(MapKind::Estimated, self.topology, rho.into_values())
    }

    /// Task outputs read off the frozen consistency code of the estimated map.
    pub fn predict(&self, cae: &ConsistencyCae, imaging: &Tensor) -> Result<Tensor, LikelihoodError> {
        let codes = cae.encode(&self.estimate(imaging)?)?;
        self.head.predict(&codes)
    }
}

fn prefixed<T>(prefix: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

impl<E: FeatureExtractor> Parameterized for EstimatorStack<E> {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut p = prefixed("extractor", self.extractor.parameters());
        p.extend(prefixed("estimator", self.estimator.parameters()));
        p.extend(prefixed("head", self.head.mlp.parameters()));
        p
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = prefixed("extractor", self.extractor.parameters_mut());
        p.extend(prefixed("estimator", self.estimator.parameters_mut()));
        p.extend(prefixed("head", self.head.mlp.parameters_mut()));
        p
    }
}

/// `‖a − b‖₁ + ‖a − b‖₂²`.
pub fn est_loss(a: &[f64], b: &[f64]) -> Result<f64, LikelihoodError> {
    if a.len() != b.len() {
        return Err(LikelihoodError::Validation(format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs() + (x - y) * (x - y)).sum())
}

/// [`est_loss`] between the consistency codes of two maps.
pub fn cons_loss(cae: &ConsistencyCae, rho: &[f64], estimated: &[f64]) -> Result<f64, LikelihoodError> {
    cae.require_trained()?;
    let codes = cae.encode(&Tensor::from_rows(&[rho, estimated])?)?;
    est_loss(codes.row(0), codes.row(1))
}

/// Cross-entropy of class probabilities, or squared error of a regression
/// output.
pub fn task_loss(output: &[f64], target: TaskTarget, kind: TaskKind) -> Result<f64, LikelihoodError> {
    target.check(kind)?;
    if output.len() != kind.output_dim() {
        return Err(LikelihoodError::Validation(format!(
            "{} outputs for a task with {}",
            output.len(),
            kind.output_dim()
        )));
    }
    Ok(match target {
        TaskTarget::Class(c) => -output[c].ln(),
        TaskTarget::Value(v) => (output[0] - v).powi(2),
    })
}

/// Weights of the consistency (`λ₂`) and task (`λ₃`) terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub consistency: f64,
    pub task: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            consistency: 1.0,
            task: 1.0,
        }
    }
}

/// Tape nodes of one batch objective. `params` follows the stack's
/// parameter order.
pub struct TapedObjective {
    pub total: Var,
    pub estimation: Var,
    pub consistency: Var,
    pub task: Var,
    pub params: Vec<Var>,
}

/// Records the batch mean of `L_Est + λ₂ L_Cons + λ₃ L_Task`. The autoencoder
/// enters as constants.
pub fn total_loss_tape<E: FeatureExtractor>(
    tape: &mut Tape,
    stack: &EstimatorStack<E>,
    cae: &ConsistencyCae,
    imaging: &Tensor,
    maps: &Tensor,
    targets: &[TaskTarget],
    weights: LossWeights,
) -> Result<TapedObjective, LikelihoodError> {
    cae.require_trained()?;
    let imaging = imaging.as_matrix();
    let maps = maps.as_matrix();
    stack.check_imaging(&imaging)?;
    let n = imaging.rows();
    if n == 0 || maps.rows() != n || targets.len() != n {
        return Err(LikelihoodError::Validation(format!(
            "batch of {n} images, {} maps, {} targets",
            maps.rows(),
            targets.len()
        )));
    }
    if maps.cols() != stack.map_len() || cae.map_len() != stack.map_len() {
        return Err(LikelihoodError::Validation(format!(
            "maps have {} units, estimator {} and autoencoder {}",
            maps.cols(),
            stack.map_len(),
            cae.map_len()
        )));
    }
    for t in targets {
        t.check(stack.head.kind)?;
    }

    let x = tape.leaf_owned(imaging);
    let (z, mut params) = stack.extractor.forward_tape(tape, x)?;
    let estimator = stack.estimator.bind(tape);
    let head = stack.head.mlp.bind(tape);
    params.extend(estimator.vars());
    params.extend(head.vars());
    let rho_hat = estimator.forward(tape, z)?;

    let rho = tape.leaf_owned(maps.clone());
    let estimation = l1_plus_sq(tape, rho_hat, rho)?;

    let encoder = cae.bind_encoder(tape);
    let code_hat = encoder.forward(tape, rho_hat)?;
    let code = tape.leaf_owned(cae.encode(&maps)?);
    let consistency = l1_plus_sq(tape, code_hat, code)?;

    let logits = head.forward(tape, code_hat)?;
    let task = match stack.head.kind {
        TaskKind::Classification { num_classes } => {
            let mut onehot = vec![0.0; n * num_classes];
            for (i, t) in targets.iter().enumerate() {
                if let TaskTarget::Class(c) = t {
                    onehot[i * num_classes + c] = 1.0;
                }
            }
            let y = tape.leaf_owned(Tensor::matrix(n, num_classes, onehot)?);
            let logp = tape.log_softmax_rows(logits);
            let picked = tape.mul(logp, y)?;
            let s = tape.sum(picked);
            tape.scale(s, -1.0)
        }
        TaskKind::Regression => {
            let values = targets
                .iter()
                .map(|t| match t {
                    TaskTarget::Value(v) => *v,
                    TaskTarget::Class(_) => unreachable!("checked above"),
                })
                .collect();
            let y = tape.leaf_owned(Tensor::matrix(n, 1, values)?);
            let out = tape.sigmoid(logits);
            let d = tape.sub(out, y)?;
            let sq = tape.square(d);
            tape.sum(sq)
        }
    };

    let c = tape.scale(consistency, weights.consistency);
    let t = tape.scale(task, weights.task);
    let sum = tape.add(estimation, c)?;
    let sum = tape.add(sum, t)?;
    let total = tape.scale(sum, 1.0 / n as f64);
    Ok(TapedObjective {
        total,
        estimation,
        consistency,
        task,
        params,
    })
}

fn l1_plus_sq(tape: &mut Tape, a: Var, b: Var) -> Result<Var, AutodiffError> {
    let d = tape.sub(a, b)?;
    let abs = tape.abs(d);
    let l1 = tape.sum(abs);
    let sq = tape.square(d);
    let l2 = tape.sum(sq);
    tape.add(l1, l2)
}

/// Value of [`total_loss_tape`].
pub fn total_loss<E: FeatureExtractor>(
    stack: &EstimatorStack<E>,
    cae: &ConsistencyCae,
    imaging: &Tensor,
    maps: &Tensor,
    targets: &[TaskTarget],
    weights: LossWeights,
) -> Result<f64, LikelihoodError> {
    let mut tape = Tape::new();
    let obj = total_loss_tape(&mut tape, stack, cae, imaging, maps, targets, weights)?;
    Ok(tape.scalar(obj.total))
}
