use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AdpenError;
use crate::autodiff::{
    affine_forward, sigmoid, softmax, Activation, AutodiffError, BoundDense, BoundMlp, DenseLayer,
    Mlp, Parameterized, Tape, Tensor, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub num_stages: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            num_stages: 4,
            hidden: vec![10, 16, 8],
            latent_dim: 3,
        }
    }
}

/// Encoder/decoder pair over composite clinical vectors.
///
/// The encoder is a ReLU stack with two linear heads for `μ` and `log σ²`.
/// The decoder mirrors the hidden widths and emits `L + 2` logits: a softmax
/// is applied to the stage block and a sigmoid to score and age.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub num_stages: usize,
    pub encoder: Mlp,
    pub mean_head: DenseLayer,
    pub log_var_head: DenseLayer,
    pub decoder: Mlp,
}

/// Latent code with its posterior parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint {
    pub h: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// How the reparameterization noise `ε` is chosen.
pub enum Sampling<'a> {
    /// `ε = 0`, so `h = μ`.
    Mean,
    Draw(&'a mut dyn RngCore),
}

pub struct BoundVae {
    pub encoder: BoundMlp,
    pub mean_head: BoundDense,
    pub log_var_head: BoundDense,
    pub decoder: BoundMlp,
}

impl BoundVae {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.encoder.vars();
        v.extend(self.mean_head.vars());
        v.extend(self.log_var_head.vars());
        v.extend(self.decoder.vars());
        v
    }
}

/// Tape nodes produced by one VAE forward pass.
pub struct VaeForward {
    pub mu: Var,
    pub log_var: Var,
    pub h: Var,
    pub logits: Var,
}

impl VaeModel {
    pub fn new<R: Rng + ?Sized>(config: &VaeConfig, rng: &mut R) -> Self {
        let input = config.num_stages + 2;
        let mut enc = vec![input];
        enc.extend(&config.hidden);
        let last_hidden = *enc.last().expect("non-empty");
        let encoder = Mlp::new(&enc, Activation::Relu, Activation::Relu, rng);
        let mean_head = DenseLayer::new(last_hidden, config.latent_dim, Activation::Identity, rng);
        let log_var_head =
            DenseLayer::new(last_hidden, config.latent_dim, Activation::Identity, rng);
        let mut dec = vec![config.latent_dim];
        dec.extend(config.hidden.iter().rev());
        dec.push(input);
        let decoder = Mlp::new(&dec, Activation::Relu, Activation::Identity, rng);
        Self {
            num_stages: config.num_stages,
            encoder,
            mean_head,
            log_var_head,
            decoder,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.num_stages + 2
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.output_dim()
    }

    /// Posterior mean and log-variance for a batch `c: n × (L + 2)`.
    pub fn posterior(&self, c: &Tensor) -> Result<(Tensor, Tensor), AutodiffError> {
        let hidden = self.encoder.forward(c)?;
        Ok((self.mean_head.forward(&hidden)?, self.log_var_head.forward(&hidden)?))
    }

    /// Posterior means of every row of `c`.
    pub fn encode_means(&self, c: &Tensor) -> Result<Tensor, AdpenError> {
        let (mu, _) = self.posterior(c)?;
        if !mu.is_finite() {
            return Err(AdpenError::Model("encoder produced non-finite output".into()));
        }
        Ok(mu)
    }

    pub fn encode(&self, c: &[f64], sampling: Sampling<'_>) -> Result<LatentPoint, AdpenError> {
        if c.len() != self.input_dim() {
            return Err(AdpenError::Model(format!(
                "clinical vector has length {}, expected {}",
                c.len(),
                self.input_dim()
            )));
        }
        let (mu, log_var) = self.posterior(&Tensor::vector(c.to_vec()))?;
        let (mu, log_var) = (mu.into_values(), log_var.into_values());
        let h = match sampling {
            Sampling::Mean => mu.clone(),
            Sampling::Draw(rng) => mu
                .iter()
                .zip(&log_var)
                .map(|(m, lv)| {
                    let eps: f64 = StandardNormal.sample(rng);
                    m + (0.5 * lv).exp() * eps
                })
                .collect(),
        };
        if h.iter().chain(&mu).chain(&log_var).any(|v| !v.is_finite()) {
            return Err(AdpenError::Model("encoder produced non-finite output".into()));
        }
        Ok(LatentPoint { h, mu, log_var })
    }

    /// Decoded clinical vector: stage probabilities, then score and age in `[0, 1]`.
    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>, AdpenError> {
        let logits = self.decoder.forward(&Tensor::vector(h.to_vec()))?;
        Ok(self.activate_logits(logits.values()))
    }

    pub fn decode_batch(&self, h: &Tensor) -> Result<Tensor, AdpenError> {
        let logits = self.decoder.forward(h)?;
        let rows: Vec<Vec<f64>> = (0..logits.rows())
            .map(|r| self.activate_logits(logits.row(r)))
            .collect();
        Ok(Tensor::from_rows(&rows)?)
    }

    fn activate_logits(&self, logits: &[f64]) -> Vec<f64> {
        let l = self.num_stages;
        let mut out = softmax(&logits[..l]);
        out.extend(logits[l..].iter().map(|&z| sigmoid(z)));
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundVae {
        BoundVae {
            encoder: self.encoder.bind(tape),
            mean_head: self.mean_head.bind(tape),
            log_var_head: self.log_var_head.bind(tape),
            decoder: self.decoder.bind(tape),
        }
    }

    /// Records encode → reparameterize → decode. `noise` is `ε` (same shape
    /// as the latent batch); `None` means `ε = 0`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundVae,
        c: Var,
        noise: Option<&Tensor>,
    ) -> Result<VaeForward, AutodiffError> {
        let hidden = bound.encoder.forward(tape, c)?;
        let mu = affine_forward(tape, &bound.mean_head, hidden)?;
        let log_var = affine_forward(tape, &bound.log_var_head, hidden)?;
        let h = match noise {
            None => mu,
            Some(eps) => {
                let half = tape.scale(log_var, 0.5);
                let sigma = tape.exp(half);
                let eps = tape.leaf(eps);
                let spread = tape.mul(sigma, eps)?;
                tape.add(mu, spread)?
            }
        };
        let logits = bound.decoder.forward(tape, h)?;
        Ok(VaeForward {
            mu,
            log_var,
            h,
            logits,
        })
    }

    /// Negative ELBO summed over the batch: stage cross-entropy plus squared
    /// error on score and age, plus the KL term.
    pub fn loss_tape(
        &self,
        tape: &mut Tape,
        forward: &VaeForward,
        c: Var,
    ) -> Result<Var, AutodiffError> {
        let l = self.num_stages;
        let stage_logits = tape.slice_cols(forward.logits, 0, l)?;
        let log_probs = tape.log_softmax_rows(stage_logits);
        let stage_target = tape.slice_cols(c, 0, l)?;
        let ce = tape.mul(stage_target, log_probs)?;
        let ce = tape.sum(ce);
        let ce = tape.scale(ce, -1.0);

        let cont_logits = tape.slice_cols(forward.logits, l, l + 2)?;
        let cont = tape.sigmoid(cont_logits);
        let cont_target = tape.slice_cols(c, l, l + 2)?;
        let diff = tape.sub(cont, cont_target)?;
        let sq = tape.square(diff);
        let mse = tape.sum(sq);

        let kl = kl_tape(tape, forward.mu, forward.log_var)?;
        let recon = tape.add(ce, mse)?;
        tape.add(recon, kl)
    }
}

impl Parameterized for VaeModel {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut p: Vec<(String, &Tensor)> = Vec::new();
        p.extend(prefixed("encoder", self.encoder.parameters()));
        p.extend(prefixed("mean_head", self.mean_head.parameters()));
        p.extend(prefixed("log_var_head", self.log_var_head.parameters()));
        p.extend(prefixed("decoder", self.decoder.parameters()));
        p
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p: Vec<(String, &mut Tensor)> = Vec::new();
        p.extend(prefixed("encoder", self.encoder.parameters_mut()));
        p.extend(prefixed("mean_head", self.mean_head.parameters_mut()));
        p.extend(prefixed("log_var_head", self.log_var_head.parameters_mut()));
        p.extend(prefixed("decoder", self.decoder.parameters_mut()));
        p
    }
}

pub(crate) fn prefixed<T>(prefix: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

/// `½ Σ (μ² + σ² − 1 − log σ²)`, the KL divergence from `N(μ, σ²)` to `N(0, I)`.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

pub(crate) fn kl_tape(tape: &mut Tape, mu: Var, log_var: Var) -> Result<Var, AutodiffError> {
    let mu_sq = tape.square(mu);
    let var = tape.exp(log_var);
    let a = tape.add(mu_sq, var)?;
    let b = tape.sub(a, log_var)?;
    let b = tape.offset(b, -1.0);
    let total = tape.sum(b);
    Ok(tape.scale(total, 0.5))
}

/// Reconstruction term for one sample given a decoded clinical vector
/// (stage probabilities followed by score and age).
pub fn reconstruction_loss(target: &[f64], decoded: &[f64], num_stages: usize) -> f64 {
    let ce: f64 = target[..num_stages]
        .iter()
        .zip(&decoded[..num_stages])
        .filter(|(y, _)| **y > 0.0)
        .map(|(y, p)| -y * p.ln())
        .sum();
    let mse: f64 = target[num_stages..]
        .iter()
        .zip(&decoded[num_stages..])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    ce + mse
}

/// Negative ELBO over a batch of clinical vectors `c: n × (L + 2)`.
pub fn vae_loss(vae: &VaeModel, batch: &Tensor, sampling: Sampling<'_>) -> Result<f64, AdpenError> {
    if batch.rows() == 0 || batch.is_empty() {
        return Err(AdpenError::Model("empty batch".into()));
    }
    let noise = match sampling {
        Sampling::Mean => None,
        Sampling::Draw(rng) => Some(standard_normal(batch.rows(), vae.latent_dim(), rng)),
    };
    let mut tape = Tape::new();
    let bound = vae.bind(&mut tape);
    let c = tape.leaf(batch);
    let fwd = vae.forward_tape(&mut tape, &bound, c, noise.as_ref())?;
    let loss = vae.loss_tape(&mut tape, &fwd, c)?;
    Ok(tape.scalar(loss))
}

pub(crate) fn standard_normal<R: RngCore + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let values = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    Tensor::matrix(rows, cols, values).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> VaeModel {
        VaeModel::new(&VaeConfig::default(), &mut ChaCha8Rng::seed_from_u64(5))
    }

    #[test]
    fn mean_sampling_returns_mu() {
        let vae = model();
        let p = vae.encode(&[1.0, 0.0, 0.0, 0.0, 0.9, 0.7], Sampling::Mean).unwrap();
        assert_eq!(p.h, p.mu);
        assert_eq!(p.h.len(), 3);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let vae = model();
        let c = [0.0, 1.0, 0.0, 0.0, 0.8, 0.7];
        let a = vae
            .encode(&c, Sampling::Draw(&mut ChaCha8Rng::seed_from_u64(3)))
            .unwrap();
        let b = vae
            .encode(&c, Sampling::Draw(&mut ChaCha8Rng::seed_from_u64(3)))
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.h, a.mu);
    }

    #[test]
    fn vanishing_variance_collapses_samples() {
        let mut vae = model();
        vae.log_var_head.weights.values_mut().fill(0.0);
        vae.log_var_head.bias.values_mut().fill(-40.0);
        let c = [0.0, 0.0, 1.0, 0.0, 0.6, 0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| vae.encode(&c, Sampling::Draw(&mut rng)).unwrap().h)
            .collect();
        for d in 0..3 {
            let mean = draws.iter().map(|h| h[d]).sum::<f64>() / draws.len() as f64;
            let var = draws.iter().map(|h| (h[d] - mean).powi(2)).sum::<f64>()
                / (draws.len() - 1) as f64;
            assert!(var < 1e-6, "dimension {d}: variance {var}");
        }
    }

    #[test]
    fn wrong_input_length_is_a_model_error() {
        let vae = model();
        assert!(matches!(
            vae.encode(&[1.0, 0.0], Sampling::Mean),
            Err(AdpenError::Model(_))
        ));
    }

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(kl_divergence(&[1.0], &[0.0]), 0.5);
        assert!(kl_divergence(&[0.1, -0.3], &[0.4, -1.2]) > 0.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        let c = [0.0, 0.0, 1.0, 0.0, 0.7, 0.8];
        assert_eq!(reconstruction_loss(&c, &c, 4), 0.0);
        assert_eq!(kl_divergence(&[0.0; 3], &[0.0; 3]), 0.0);
    }

    #[test]
    fn duplicated_batch_doubles_loss() {
        let vae = model();
        let rows = vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.97, 0.71],
            vec![0.0, 0.0, 0.0, 1.0, 0.7, 0.76],
        ];
        let single = vae_loss(&vae, &Tensor::from_rows(&rows).unwrap(), Sampling::Mean).unwrap();
        let doubled_rows = [rows.clone(), rows].concat();
        let double = vae_loss(&vae, &Tensor::from_rows(&doubled_rows).unwrap(), Sampling::Mean).unwrap();
        assert!((double - 2.0 * single).abs() < 1e-12 * single.abs().max(1.0));
    }

    #[test]
    fn decoded_stage_block_is_a_distribution() {
        let vae = model();
        let out = vae.decode(&[0.3, -2.0, 1.5]).unwrap();
        assert!((out[..4].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out[4..].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn taped_loss_matches_per_sample_terms() {
        let vae = model();
        let rows = [
            vec![1.0, 0.0, 0.0, 0.0, 0.97, 0.71],
            vec![0.0, 1.0, 0.0, 0.0, 0.9, 0.73],
        ];
        let batch = vae_loss(&vae, &Tensor::from_rows(&rows).unwrap(), Sampling::Mean).unwrap();
        let manual: f64 = rows
            .iter()
            .map(|c| {
                let p = vae.encode(c, Sampling::Mean).unwrap();
                let decoded = vae.decode(&p.mu).unwrap();
                reconstruction_loss(c, &decoded, 4) + kl_divergence(&p.mu, &p.log_var)
            })
            .sum();
        assert!((batch - manual).abs() < 1e-10);
    }
}
