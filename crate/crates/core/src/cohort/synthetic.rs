//! Seeded synthetic AD-spectrum cohorts.
//!
//! Clinical records are drawn per stage from Gaussian MMSE and age models.
//! Each record gets a paired imaging feature vector
//! `tanh(A · c) + N(0, σ_img²)`, where `c` is the composite clinical vector and
//! `A` is a fixed Gaussian matrix derived from the seed alone, so cohorts
//! drawn with the same seed share one clinical-to-imaging map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::clinical::{normalize_clinical, ClinicalRecord, CompositeClinicalVector};
use super::{Cohort, CohortError, CohortSample, ImagingSample};
use crate::autodiff::Tensor;

const IMAGING_STREAM: u64 = 0x1a6e_5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub stage_counts: Vec<usize>,
    pub mmse_mean: Vec<f64>,
    pub mmse_std: Vec<f64>,
    pub age_mean: Vec<f64>,
    pub age_std: Vec<f64>,
    pub feature_dim: usize,
    /// Standard deviation of the additive imaging noise.
    pub imaging_noise: f64,
    /// Scale of the entries of the clinical-to-imaging matrix.
    pub imaging_gain: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            stage_counts: vec![100; 4],
            mmse_mean: vec![29.0, 27.0, 25.0, 21.0],
            mmse_std: vec![1.0; 4],
            age_mean: vec![71.0, 72.5, 74.0, 75.5],
            age_std: vec![5.0; 4],
            feature_dim: 64,
            imaging_noise: 0.02,
            imaging_gain: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn num_stages(&self) -> usize {
        self.stage_counts.len()
    }

    pub fn total(&self) -> usize {
        self.stage_counts.iter().sum()
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let l = self.num_stages();
        if l < 2 {
            return Err(CohortError::Validation("need at least two stages".into()));
        }
        for (name, len) in [
            ("mmse_mean", self.mmse_mean.len()),
            ("mmse_std", self.mmse_std.len()),
            ("age_mean", self.age_mean.len()),
            ("age_std", self.age_std.len()),
        ] {
            if len != l {
                return Err(CohortError::Validation(format!(
                    "{name} has {len} entries for {l} stages"
                )));
            }
        }
        if let Some(stage) = self.stage_counts.iter().position(|&c| c == 0) {
            return Err(CohortError::Validation(format!(
                "stage {stage} has zero samples"
            )));
        }
        if self.mmse_mean.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CohortError::Validation(
                "MMSE means must strictly decrease with severity".into(),
            ));
        }
        let stds = self.mmse_std.iter().chain(&self.age_std);
        if stds.into_iter().any(|s| !(*s >= 0.0)) || !(self.imaging_noise >= 0.0) {
            return Err(CohortError::Validation(
                "standard deviations must be non-negative".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(CohortError::Validation("feature_dim must be positive".into()));
        }
        Ok(())
    }

    /// The deterministic part of the imaging model.
    pub fn imaging_model(&self) -> ImagingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ IMAGING_STREAM);
        let normal = Normal::new(0.0, self.imaging_gain.max(0.0)).expect("finite gain");
        let cols = self.num_stages() + 2;
        let values = (0..self.feature_dim * cols)
            .map(|_| normal.sample(&mut rng))
            .collect();
        ImagingModel {
            matrix: Tensor::matrix(self.feature_dim, cols, values).expect("consistent shape"),
        }
    }

    fn draw_record<R: Rng>(&self, stage: usize, rng: &mut R) -> ClinicalRecord {
        let mmse = gaussian(rng, self.mmse_mean[stage], self.mmse_std[stage])
            .round()
            .clamp(0.0, 30.0) as u8;
        let age = gaussian(rng, self.age_mean[stage], self.age_std[stage]).clamp(50.0, 95.0);
        ClinicalRecord {
            stage,
            mmse,
            age_years: age,
        }
    }

    /// Imaging-like observations for one subject walking through `stages`,
    /// one visit per entry, `years_between` apart.
    pub fn trajectory(
        &self,
        subject_id: &str,
        stages: &[usize],
        start_age: f64,
        years_between: f64,
        seed: u64,
    ) -> Result<Vec<CohortSample>, CohortError> {
        self.validate()?;
        let model = self.imaging_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        stages
            .iter()
            .enumerate()
            .map(|(visit, &stage)| {
                if stage >= self.num_stages() {
                    return Err(CohortError::Validation(format!("unknown stage {stage}")));
                }
                let mmse = self.mmse_mean[stage].round().clamp(0.0, 30.0) as u8;
                let age = (start_age + years_between * visit as f64).min(100.0);
                let record = ClinicalRecord::new(stage, mmse, age, self.num_stages())?;
                let clinical = normalize_clinical(&record, self.num_stages())?;
                let features = model.observe(&clinical, self.imaging_noise, &mut rng);
                Ok(CohortSample {
                    record,
                    clinical,
                    imaging: ImagingSample {
                        subject_id: subject_id.to_string(),
                        acquisition_index: visit as u32,
                        features,
                    },
                })
            })
            .collect()
    }
}

fn gaussian<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("finite std").sample(rng)
}

/// Fixed clinical-to-imaging map `tanh(A · c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagingModel {
    pub matrix: Tensor,
}

impl ImagingModel {
    pub fn clean(&self, c: &CompositeClinicalVector) -> Vec<f64> {
        (0..self.matrix.rows())
            .map(|r| {
                self.matrix
                    .row(r)
                    .iter()
                    .zip(c.values())
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
                    .tanh()
            })
            .collect()
    }

    pub fn observe<R: Rng>(&self, c: &CompositeClinicalVector, noise: f64, rng: &mut R) -> Vec<f64> {
        let mut f = self.clean(c);
        if noise > 0.0 {
            let n = Normal::new(0.0, noise).expect("finite noise");
            for v in &mut f {
                *v += n.sample(rng);
            }
        }
        f
    }
}

/// Draws a cohort from `spec`; identical specs give bit-identical cohorts.
pub fn generate_cohort(spec: &SyntheticSpec) -> Result<Cohort, CohortError> {
    spec.validate()?;
    let l = spec.num_stages();
    let model = spec.imaging_model();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.total());
    for (stage, &count) in spec.stage_counts.iter().enumerate() {
        for _ in 0..count {
            let record = spec.draw_record(stage, &mut rng);
            let clinical = normalize_clinical(&record, l)?;
            let features = model.observe(&clinical, spec.imaging_noise, &mut rng);
            let subject_id = format!("S{:05}", samples.len());
            samples.push(CohortSample {
                record,
                clinical,
                imaging: ImagingSample {
                    subject_id,
                    acquisition_index: 0,
                    features,
                },
            });
        }
    }
    Cohort::new(l, samples)
}
