use serde::{Deserialize, Serialize};

use super::states::PrototypicalState;
use super::ExplainError;
use crate::adpen::PrototypeGrid;
use crate::autodiff::{squared_distance, Tensor};

/// Nearest training samples of one prototype and their mean features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSamples {
    pub prototype: usize,
    /// Sample row indices, nearest first.
    pub sample_ids: Vec<usize>,
    pub distances: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypicalSampleSet {
    pub requested: usize,
    pub prototypes: Vec<PrototypeSamples>,
}

/// For every prototype, the `n` samples whose latents lie closest (ties
/// broken by lower sample id) and the elementwise mean of their features.
/// `latents` and `imaging` are row-aligned.
pub fn retrieve_nearest_samples(
    grid: &PrototypeGrid,
    latents: &Tensor,
    imaging: &Tensor,
    n: usize,
) -> Result<PrototypicalSampleSet, ExplainError> {
    let latents = latents.as_matrix();
    let imaging = imaging.as_matrix();
    if latents.rows() != imaging.rows() || latents.rows() == 0 {
        return Err(ExplainError::Validation(format!(
            "{} latents and {} imaging rows",
            latents.rows(),
            imaging.rows()
        )));
    }
    if latents.cols() != grid.dim() {
        return Err(ExplainError::Validation(format!(
            "latents have {} dimensions, prototypes {}",
            latents.cols(),
            grid.dim()
        )));
    }
    if n == 0 {
        return Err(ExplainError::Validation("at least one neighbour is required".into()));
    }
    let take = n.min(latents.rows());
    if take < n {
        log::warn!("only {take} samples available, {n} requested per prototype");
    }
    let prototypes = (0..grid.len())
        .map(|k| {
            let p = grid.prototype(k);
            let mut ranked: Vec<(f64, usize)> = (0..latents.rows())
                .map(|i| (squared_distance(latents.row(i), p), i))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ranked.truncate(take);
            let features: Vec<Vec<f64>> = ranked.iter().map(|&(_, i)| imaging.row(i).to_vec()).collect();
            let mut mean = vec![0.0; imaging.cols()];
            for f in &features {
                for (m, v) in mean.iter_mut().zip(f) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= take as f64);
            PrototypeSamples {
                prototype: k,
                sample_ids: ranked.iter().map(|&(_, i)| i).collect(),
                distances: ranked.iter().map(|&(d, _)| d).collect(),
                features,
                mean,
            }
        })
        .collect();
    Ok(PrototypicalSampleSet {
        requested: n,
        prototypes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSelection {
    pub stage: usize,
    /// Prototype indices, closest decoded age first.
    pub prototypes: Vec<usize>,
}

/// Groups prototypes by decoded stage and keeps, per stage, the `per_stage`
/// whose decoded age is closest to `query_age` years (lower index on ties).
pub fn select_stage_representatives(
    states: &[PrototypicalState],
    num_stages: usize,
    query_age: f64,
    per_stage: usize,
) -> Result<Vec<StageSelection>, ExplainError> {
    if !(query_age > 0.0 && query_age <= 100.0) {
        return Err(ExplainError::Validation(format!("query age {query_age} outside (0, 100]")));
    }
    if let Some(s) = states.iter().find(|s| s.stage_probs.len() != num_stages) {
        return Err(ExplainError::Validation(format!(
            "decoded state has {} stages, expected {num_stages}",
            s.stage_probs.len()
        )));
    }
    Ok((0..num_stages)
        .map(|stage| {
            let mut ranked: Vec<(f64, usize)> = states
                .iter()
                .enumerate()
                .filter(|(_, s)| s.stage() == stage)
                .map(|(k, s)| ((s.age_years() - query_age).abs(), k))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if ranked.len() < per_stage {
                log::warn!("stage {stage} has {} prototypes, {per_stage} requested", ranked.len());
            }
            ranked.truncate(per_stage);
            StageSelection {
                stage,
                prototypes: ranked.into_iter().map(|(_, k)| k).collect(),
            }
        })
        .collect())
}
