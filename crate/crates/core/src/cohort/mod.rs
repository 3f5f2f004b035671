//! Clinical data model, synthetic cohorts, stratified splits and
//! ordering-pair sampling.

mod clinical;
mod pairs;
mod split;
mod synthetic;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use clinical::{
    denormalize_clinical, normalize_clinical, ClinicalRecord, CompositeClinicalVector, AGE_MAX,
    DEFAULT_STAGES, MMSE_MAX,
};
pub(crate) use clinical::argmax;
pub use pairs::{sample_ordering_pairs, OrderingPair};
pub use split::{stratified_folds, stratified_kfold, FoldSplit};
pub use synthetic::{generate_cohort, ImagingModel, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Desk-scale stand-in for a scan: a flat feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagingSample {
    pub subject_id: String,
    pub acquisition_index: u32,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortSample {
    pub record: ClinicalRecord,
    pub clinical: CompositeClinicalVector,
    pub imaging: ImagingSample,
}

/// One line of the newline-delimited JSON cohort format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortLine {
    pub stage: usize,
    pub mmse: u8,
    pub age: f64,
    pub features: Vec<f64>,
    pub subject_id: String,
    pub acquisition_index: u32,
}

/// Immutable, validated collection of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    num_stages: usize,
    feature_dim: usize,
    samples: Vec<CohortSample>,
}

impl Cohort {
    pub fn new(num_stages: usize, samples: Vec<CohortSample>) -> Result<Self, CohortError> {
        let feature_dim = samples.first().map_or(0, |s| s.imaging.features.len());
        for (i, s) in samples.iter().enumerate() {
            s.record.validate(num_stages)?;
            if s.clinical != normalize_clinical(&s.record, num_stages)? {
                return Err(CohortError::Validation(format!(
                    "sample {i}: clinical vector disagrees with record"
                )));
            }
            if s.imaging.features.len() != feature_dim {
                return Err(CohortError::Validation(format!(
                    "sample {i} has {} features, expected {feature_dim}",
                    s.imaging.features.len()
                )));
            }
            if s.imaging.features.iter().any(|v| !v.is_finite()) {
                return Err(CohortError::Validation(format!(
                    "sample {i} has non-finite features"
                )));
            }
        }
        Ok(Self {
            num_stages,
            feature_dim,
            samples,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.num_stages
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[CohortSample] {
        &self.samples
    }

    pub fn stages(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.record.stage).collect()
    }

    pub fn stage_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_stages];
        for s in &self.samples {
            counts[s.record.stage] += 1;
        }
        counts
    }

    /// New cohort holding only the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            num_stages: self.num_stages,
            feature_dim: self.feature_dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn stratified_kfold(&self, k: usize, seed: u64) -> Result<Vec<FoldSplit>, CohortError> {
        stratified_kfold(&self.stages(), k, seed)
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<(), CohortError> {
        for s in &self.samples {
            let line = CohortLine {
                stage: s.record.stage,
                mmse: s.record.mmse,
                age: s.record.age_years,
                features: s.imaging.features.clone(),
                subject_id: s.imaging.subject_id.clone(),
                acquisition_index: s.imaging.acquisition_index,
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses and validates newline-delimited JSON. Blank lines are ignored;
    /// records with missing fields are rejected.
    pub fn read_ndjson<R: BufRead>(input: R, num_stages: usize) -> Result<Cohort, CohortError> {
        let mut samples = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CohortLine = serde_json::from_str(&line).map_err(|source| CohortError::Parse {
                line: n + 1,
                source,
            })?;
            let record = ClinicalRecord::new(rec.stage, rec.mmse, rec.age, num_stages)
                .map_err(|e| CohortError::Validation(format!("line {}: {e}", n + 1)))?;
            let clinical = normalize_clinical(&record, num_stages)?;
            samples.push(CohortSample {
                record,
                clinical,
                imaging: ImagingSample {
                    subject_id: rec.subject_id,
                    acquisition_index: rec.acquisition_index,
                    features: rec.features,
                },
            });
        }
        Cohort::new(num_stages, samples)
    }
}
