//! Dense autoencoder over likelihood maps. Its encoder is reused, frozen, to
//! compare pseudo and estimated maps in a compact code space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LikelihoodError;
use crate::autodiff::{adam_update, Activation, AdamConfig, AdamState, BoundMlp, Mlp, Parameterized, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaeConfig {
    pub hidden: usize,
    pub code_dim: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            code_dim: 16,
            epochs: 200,
            batches_per_epoch: 10,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl CaeConfig {
    pub fn validate(&self, map_len: usize) -> Result<(), LikelihoodError> {
        if self.code_dim == 0 || self.code_dim >= map_len {
            return Err(LikelihoodError::Config(format!(
                "code dimension {} must lie in 1..{map_len}",
                self.code_dim
            )));
        }
        if self.hidden == 0 || self.batches_per_epoch == 0 {
            return Err(LikelihoodError::Config("hidden width and batch count must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(LikelihoodError::Config(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// `K → hidden → code` encoder with a mirrored sigmoid decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCae {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub trained: bool,
}

impl ConsistencyCae {
    pub fn new(map_len: usize, config: &CaeConfig) -> Result<Self, LikelihoodError> {
        config.validate(map_len)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = Mlp::new(
            &[map_len, config.hidden, config.code_dim],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        let decoder = Mlp::new(
            &[config.code_dim, config.hidden, map_len],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        );
        Ok(Self {
            encoder,
            decoder,
            trained: false,
        })
    }

    pub fn map_len(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, maps: &Tensor) -> Result<Tensor, LikelihoodError> {
        Ok(self.encoder.forward(maps)?)
    }

    pub fn reconstruct(&self, maps: &Tensor) -> Result<Tensor, LikelihoodError> {
        Ok(self.decoder.forward(&self.encoder.forward(maps)?)?)
    }

    /// Mean over maps of `‖ρ − D(E(ρ))‖²`.
    pub fn reconstruction_error(&self, maps: &Tensor) -> Result<f64, LikelihoodError> {
        if maps.rows() == 0 {
            return Ok(0.0);
        }
        let rec = self.reconstruct(maps)?;
        let sq: f64 = maps
            .values()
            .iter()
            .zip(rec.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sq / maps.rows() as f64)
    }

    /// Binds the encoder as constants; nothing recorded here receives updates.
    pub fn bind_encoder(&self, tape: &mut Tape) -> BoundMlp {
        self.encoder.bind(tape)
    }

    pub(crate) fn require_trained(&self) -> Result<(), LikelihoodError> {
        if self.trained {
            Ok(())
        } else {
            Err(LikelihoodError::Usage("consistency autoencoder has not been pretrained".into()))
        }
    }
}

impl Parameterized for ConsistencyCae {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut p: Vec<_> = self
            .encoder
            .parameters()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t))
            .collect();
        p.extend(self.decoder.parameters().into_iter().map(|(n, t)| (format!("decoder.{n}"), t)));
        p
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p: Vec<_> = self
            .encoder
            .parameters_mut()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t))
            .collect();
        p.extend(
            self.decoder
                .parameters_mut()
                .into_iter()
                .map(|(n, t)| (format!("decoder.{n}"), t)),
        );
        p
    }
}

pub(crate) fn minibatches(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let count = count.clamp(1, n.max(1));
    let size = n.div_ceil(count).max(1);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

pub(crate) fn gather_rows(matrix: &Tensor, rows: &[usize]) -> Tensor {
    let cols = matrix.cols();
    let mut values = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        values.extend_from_slice(matrix.row(r));
    }
    Tensor::matrix(rows.len(), cols, values).expect("rows of one matrix")
}

/// Fits a fresh autoencoder to `maps` (`n × K`) by minimizing the summed
/// squared reconstruction error. Returns the model and its per-epoch mean
/// reconstruction error, starting with the untrained value.
pub fn pretrain_cae(maps: &Tensor, config: &CaeConfig) -> Result<(ConsistencyCae, Vec<f64>), LikelihoodError> {
    if maps.rows() == 0 {
        return Err(LikelihoodError::Validation("no maps to pretrain on".into()));
    }
    let mut cae = ConsistencyCae::new(maps.cols(), config)?;
    let mut adam = AdamState::new(config.adam, cae.parameters().into_iter().map(|(_, t)| t));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut curve = vec![cae.reconstruction_error(maps)?];
    let mut tape = Tape::new();
    for epoch in 0..config.epochs {
        for batch in minibatches(maps.rows(), config.batches_per_epoch, &mut rng) {
            tape.clear();
            let x = tape.leaf_owned(gather_rows(maps, &batch));
            let enc = cae.encoder.bind(&mut tape);
            let dec = cae.decoder.bind(&mut tape);
            let code = enc.forward(&mut tape, x)?;
            let out = dec.forward(&mut tape, code)?;
            let diff = tape.sub(out, x)?;
            let sq = tape.square(diff);
            let loss = tape.sum(sq);
            if !tape.scalar(loss).is_finite() {
                return Err(LikelihoodError::Diverged {
                    epoch,
                    detail: "reconstruction loss is not finite".into(),
                });
            }
            let grads = tape.backward(loss)?;
            let mut vars = enc.vars();
            vars.extend(dec.vars());
            let like: Vec<Tensor> = cae.parameters().into_iter().map(|(_, t)| t.clone()).collect();
            let like: Vec<&Tensor> = like.iter().collect();
            let grads = grads.collect(&vars, &like);
            adam_update(&mut cae.parameters_mut(), &grads, &mut adam, config.learning_rate)?;
        }
        curve.push(cae.reconstruction_error(maps)?);
    }
    cae.trained = true;
    Ok((cae, curve))
}
