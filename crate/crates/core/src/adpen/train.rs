//! Joint training of the VAE, ordering head and prototype grid, plus
//! prototype-only fine-tuning with a frozen VAE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ordering::{ordering_loss_tape, OrderingConfig, OrderingHead};
use super::som::{quantization_error, som_loss_tape, topographic_error, PrototypeGrid, SomSchedule, Topology};
use super::vae::{prefixed, standard_normal, VaeConfig, VaeModel};
use super::AdpenError;
use crate::autodiff::{adam_update, AdamConfig, AdamState, Parameterized, Tape, Tensor};
use crate::cohort::{sample_ordering_pairs, Cohort};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdpenConfig {
    pub vae: VaeConfig,
    pub topology: Topology,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    /// Weight of the SOM term in the joint objective.
    pub lambda_som: f64,
    /// Defaults to half the largest topology dimension.
    pub gamma_max: Option<f64>,
    pub gamma_min: f64,
    pub ordering: OrderingConfig,
    pub adam: AdamConfig,
    pub finetune_epochs: usize,
    pub finetune_learning_rate: f64,
    /// Starting radius of the fine-tuning schedule, which decays to `gamma_min`.
    pub finetune_gamma_max: f64,
    pub seed: u64,
}

impl Default for AdpenConfig {
    fn default() -> Self {
        Self {
            vae: VaeConfig::default(),
            topology: Topology::default(),
            epochs: 1000,
            batches_per_epoch: 4,
            learning_rate: 1e-3,
            lambda_som: 0.01,
            gamma_max: None,
            gamma_min: 0.5,
            ordering: OrderingConfig::default(),
            adam: AdamConfig::default(),
            finetune_epochs: 500,
            finetune_learning_rate: 1e-3,
            finetune_gamma_max: 2.0,
            seed: 0,
        }
    }
}

impl AdpenConfig {
    pub fn resolved_gamma_max(&self) -> f64 {
        self.gamma_max
            .unwrap_or(self.topology.largest_dim() as f64 / 2.0)
            .max(self.gamma_min)
    }

    pub fn validate(&self) -> Result<(), AdpenError> {
        self.topology.validate()?;
        if self.batches_per_epoch == 0 {
            return Err(AdpenError::Config("batches_per_epoch must be positive".into()));
        }
        if self.vae.latent_dim == 0 || self.vae.num_stages < 2 {
            return Err(AdpenError::Config("latent_dim ≥ 1 and num_stages ≥ 2 required".into()));
        }
        if !(self.learning_rate >= 0.0 && self.finetune_learning_rate >= 0.0) {
            return Err(AdpenError::Config("learning rates must be non-negative".into()));
        }
        SomSchedule::new(self.resolved_gamma_max(), self.gamma_min, 1)?;
        SomSchedule::new(self.finetune_gamma_max.max(self.gamma_min), self.gamma_min, 1)?;
        Ok(())
    }
}

/// Trained ADPEN artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdpenModel {
    pub vae: VaeModel,
    pub head: OrderingHead,
    pub grid: PrototypeGrid,
    pub schedule: SomSchedule,
}

impl AdpenModel {
    pub fn new(config: &AdpenConfig, cohort: &Cohort) -> Result<Self, AdpenError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let vae = VaeModel::new(&config.vae, &mut rng);
        let head = OrderingHead::new(config.vae.latent_dim, &mut rng);
        let grid = init_prototypes(&vae, cohort, config.topology, &mut rng)?;
        let total = (config.epochs * config.batches_per_epoch) as u64;
        let schedule = SomSchedule::new(config.resolved_gamma_max(), config.gamma_min, total)?;
        Ok(Self {
            vae,
            head,
            grid,
            schedule,
        })
    }

    /// Posterior means (`ε = 0`) of every sample, `n × M`.
    pub fn latents(&self, cohort: &Cohort) -> Result<Tensor, AdpenError> {
        self.vae.encode_means(&clinical_matrix(cohort)?)
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = prefixed("vae", self.vae.parameters_mut());
        p.extend(prefixed("order", self.head.parameters_mut()));
        p.extend(prefixed("som", self.grid.parameters_mut()));
        p
    }

    fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut p = prefixed("vae", self.vae.parameters());
        p.extend(prefixed("order", self.head.parameters()));
        p.extend(prefixed("som", self.grid.parameters()));
        p
    }
}

/// Copies the latent means of `K` samples from a seeded shuffle of the
/// cohort, reusing samples when the cohort is smaller than the grid.
fn init_prototypes(
    vae: &VaeModel,
    cohort: &Cohort,
    topology: Topology,
    rng: &mut ChaCha8Rng,
) -> Result<PrototypeGrid, AdpenError> {
    if cohort.is_empty() {
        return Err(AdpenError::Config("cannot initialize prototypes from an empty cohort".into()));
    }
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.shuffle(rng);
    let picks: Vec<usize> = order.iter().copied().cycle().take(topology.size()).collect();
    let latents = vae.encode_means(&clinical_matrix(&cohort.subset(&picks))?)?;
    PrototypeGrid::new(latents, topology)
}

pub(crate) fn clinical_matrix(cohort: &Cohort) -> Result<Tensor, AdpenError> {
    let rows: Vec<&[f64]> = cohort.samples().iter().map(|s| s.clinical.values()).collect();
    Ok(Tensor::from_rows(&rows)?)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub vae: f64,
    pub ordering: f64,
    pub som: f64,
    pub radius: f64,
    pub quantization_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Quantization error before the first update.
    pub initial_quantization_error: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,vae,ordering,som,radius,quantization_error\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch, e.total, e.vae, e.ordering, e.som, e.radius, e.quantization_error
            ));
        }
        out
    }
}

fn batches(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let count = count.min(n).max(1);
    let size = n.div_ceil(count);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Jointly minimizes `L_VAE + L_Order + λ₁ L_SOM` over the VAE, the ordering
/// head and the prototypes. The radius schedule advances once per optimizer
/// step.
pub fn train_adpen(cohort: &Cohort, config: &AdpenConfig) -> Result<(AdpenModel, TrainingLog), AdpenError> {
    let model = AdpenModel::new(config, cohort)?;
    continue_adpen(model, cohort, config)
}

/// Runs the joint training loop starting from `model`.
pub fn continue_adpen(
    mut model: AdpenModel,
    cohort: &Cohort,
    config: &AdpenConfig,
) -> Result<(AdpenModel, TrainingLog), AdpenError> {
    config.validate()?;
    if cohort.num_stages() != config.vae.num_stages {
        return Err(AdpenError::Config(format!(
            "cohort has {} stages, model expects {}",
            cohort.num_stages(),
            config.vae.num_stages
        )));
    }
    let clinical = clinical_matrix(cohort)?;
    let stages = cohort.stages();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = AdamState::new(config.adam, model.parameters().into_iter().map(|(_, t)| t));
    let mut log = TrainingLog {
        initial_quantization_error: quantization_error(&model.latents(cohort)?, &model.grid),
        epochs: Vec::with_capacity(config.epochs),
    };
    let mut tape = Tape::new();

    for epoch in 0..config.epochs {
        let mut rec = EpochRecord {
            epoch,
            radius: model.schedule.radius_at(model.schedule.step),
            ..EpochRecord::default()
        };
        for batch in batches(cohort.len(), config.batches_per_epoch, &mut rng) {
            let gamma = model.schedule.radius_at(model.schedule.step);
            tape.clear();
            let c = tape.leaf_owned(gather(&clinical, &batch));
            let eps = standard_normal(batch.len(), model.vae.latent_dim(), &mut rng);
            let bound_vae = model.vae.bind(&mut tape);
            let bound_head = model.head.bind(&mut tape);
            let protos = tape.leaf(&model.grid.prototypes);

            let fwd = model.vae.forward_tape(&mut tape, &bound_vae, c, Some(&eps))?;
            let vae_loss = model.vae.loss_tape(&mut tape, &fwd, c)?;
            let batch_stages: Vec<usize> = batch.iter().map(|&i| stages[i]).collect();
            let pairs = sample_ordering_pairs(&batch_stages, cohort.num_stages(), &mut rng);
            let order_loss = ordering_loss_tape(&mut tape, &bound_head.clone(), fwd.h, &pairs, config.ordering)?;
            let som_loss = som_loss_tape(&mut tape, fwd.h, protos, &model.grid, gamma)?;

            let weighted_som = tape.scale(som_loss, config.lambda_som);
            let mut total = tape.add(vae_loss, weighted_som)?;
            if let Some(o) = order_loss {
                total = tape.add(total, o)?;
                rec.ordering += tape.scalar(o);
            }
            rec.vae += tape.scalar(vae_loss);
            rec.som += tape.scalar(som_loss);
            rec.total += tape.scalar(total);
            if !tape.scalar(total).is_finite() {
                return Err(AdpenError::Diverged {
                    epoch,
                    step: model.schedule.step,
                    detail: format!(
                        "vae={} ordering={} som={}",
                        tape.scalar(vae_loss),
                        order_loss.map_or(0.0, |o| tape.scalar(o)),
                        tape.scalar(som_loss)
                    ),
                });
            }

            let grads = tape.backward(total)?;
            let mut vars = bound_vae.vars();
            vars.extend(bound_head.vars());
            vars.push(protos);
            let shapes: Vec<Tensor> = model.parameters().into_iter().map(|(_, t)| t.clone()).collect();
            let shape_refs: Vec<&Tensor> = shapes.iter().collect();
            let grads = grads.collect(&vars, &shape_refs);
            adam_update(&mut model.parameters_mut(), &grads, &mut adam, config.learning_rate)?;
            model.schedule.advance();
        }
        rec.quantization_error = quantization_error(&model.latents(cohort)?, &model.grid);
        log.epochs.push(rec);
    }
    Ok((model, log))
}

fn gather(matrix: &Tensor, rows: &[usize]) -> Tensor {
    let cols = matrix.cols();
    let mut values = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        values.extend_from_slice(matrix.row(r));
    }
    Tensor::matrix(rows.len(), cols, values).expect("consistent shape")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLog {
    pub quantization_error: Vec<f64>,
    pub topographic_error_before: f64,
    pub topographic_error_after: f64,
}

/// Updates only the prototypes against the frozen VAE's latent means.
pub fn finetune_som(
    vae: &VaeModel,
    grid: &PrototypeGrid,
    cohort: &Cohort,
    config: &AdpenConfig,
) -> Result<(PrototypeGrid, FinetuneLog), AdpenError> {
    config.validate()?;
    let latents = vae.encode_means(&clinical_matrix(cohort)?)?;
    let mut grid = grid.clone();
    let mut log = FinetuneLog {
        topographic_error_before: topographic_error(&latents, &grid),
        ..FinetuneLog::default()
    };
    let steps = (config.finetune_epochs * config.batches_per_epoch) as u64;
    let mut schedule = SomSchedule::new(
        config.finetune_gamma_max.max(config.gamma_min),
        config.gamma_min,
        steps,
    )?;
    let mut adam = AdamState::new(config.adam, [&grid.prototypes]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut tape = Tape::new();
    for epoch in 0..config.finetune_epochs {
        for batch in batches(latents.rows(), config.batches_per_epoch, &mut rng) {
            tape.clear();
            let h = tape.leaf_owned(gather(&latents, &batch));
            let p = tape.leaf(&grid.prototypes);
            let loss = som_loss_tape(&mut tape, h, p, &grid, schedule.radius_at(schedule.step))?;
            if !tape.scalar(loss).is_finite() {
                return Err(AdpenError::Diverged {
                    epoch,
                    step: schedule.step,
                    detail: "fine-tuning SOM loss is not finite".into(),
                });
            }
            let g = tape.backward(loss)?.wrt(p);
            let g = Tensor::new(grid.prototypes.shape().to_vec(), g.into_values())?;
            adam_update(&mut grid.parameters_mut(), &[g], &mut adam, config.finetune_learning_rate)?;
            schedule.advance();
        }
        log.quantization_error.push(quantization_error(&latents, &grid));
    }
    log.topographic_error_after = topographic_error(&latents, &grid);
    Ok((grid, log))
}
