use serde::{Deserialize, Serialize};

use super::CohortError;

pub const MMSE_MAX: f64 = 30.0;
pub const AGE_MAX: f64 = 100.0;

/// Default ordered disease spectrum.
pub const DEFAULT_STAGES: [&str; 4] = ["CN", "sMCI", "pMCI", "AD"];

/// Raw clinical measurements for one scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    /// Index into the ordered stage list; larger is more severe.
    pub stage: usize,
    pub mmse: u8,
    pub age_years: f64,
}

impl ClinicalRecord {
    pub fn new(
        stage: usize,
        mmse: u8,
        age_years: f64,
        num_stages: usize,
    ) -> Result<Self, CohortError> {
        let r = Self {
            stage,
            mmse,
            age_years,
        };
        r.validate(num_stages)?;
        Ok(r)
    }

    pub fn validate(&self, num_stages: usize) -> Result<(), CohortError> {
        if self.stage >= num_stages {
            return Err(CohortError::Validation(format!(
                "stage {} outside 0..{num_stages}",
                self.stage
            )));
        }
        if f64::from(self.mmse) > MMSE_MAX {
            return Err(CohortError::Validation(format!(
                "MMSE {} outside [0, 30]",
                self.mmse
            )));
        }
        if !(self.age_years > 0.0 && self.age_years <= AGE_MAX) {
            return Err(CohortError::Validation(format!(
                "age {} outside (0, 100]",
                self.age_years
            )));
        }
        Ok(())
    }
}

/// `[one-hot stage ‖ mmse / 30 ‖ age / 100]`, length `L + 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeClinicalVector(Vec<f64>);

impl CompositeClinicalVector {
    pub fn from_values(values: Vec<f64>, num_stages: usize) -> Result<Self, CohortError> {
        if values.len() != num_stages + 2 {
            return Err(CohortError::Validation(format!(
                "clinical vector has length {}, expected {}",
                values.len(),
                num_stages + 2
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_stages(&self) -> usize {
        self.0.len() - 2
    }

    pub fn stage_block(&self) -> &[f64] {
        &self.0[..self.num_stages()]
    }

    pub fn score(&self) -> f64 {
        self.0[self.0.len() - 2]
    }

    pub fn age(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Index of the largest stage entry; ties resolve to the lower stage.
    pub fn stage(&self) -> usize {
        argmax(self.stage_block())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn normalize_clinical(
    record: &ClinicalRecord,
    num_stages: usize,
) -> Result<CompositeClinicalVector, CohortError> {
    record.validate(num_stages)?;
    let mut values = vec![0.0; num_stages + 2];
    values[record.stage] = 1.0;
    values[num_stages] = f64::from(record.mmse) / MMSE_MAX;
    values[num_stages + 1] = record.age_years / AGE_MAX;
    Ok(CompositeClinicalVector(values))
}

/// Inverse of [`normalize_clinical`] on the valid range. MMSE is rounded to
/// the nearest integer.
pub fn denormalize_clinical(c: &CompositeClinicalVector) -> Result<ClinicalRecord, CohortError> {
    let mmse = (c.score() * MMSE_MAX).round();
    if !(0.0..=MMSE_MAX).contains(&mmse) {
        return Err(CohortError::Validation(format!(
            "normalized score {} outside [0, 1]",
            c.score()
        )));
    }
    ClinicalRecord::new(c.stage(), mmse as u8, c.age() * AGE_MAX, c.num_stages())
}
