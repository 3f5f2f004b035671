use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::adpen::{PrototypeGrid, Topology, VaeModel};
use crate::cohort::{argmax, AGE_MAX, MMSE_MAX};
use crate::likelihood::LikelihoodMap;

/// Decoded clinical vector of one prototype, in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypicalState {
    pub stage_probs: Vec<f64>,
    pub score: f64,
    pub age: f64,
}

impl PrototypicalState {
    /// Most probable stage, lower stage on ties.
    pub fn stage(&self) -> usize {
        argmax(&self.stage_probs)
    }

    pub fn mmse(&self) -> f64 {
        self.score * MMSE_MAX
    }

    pub fn age_years(&self) -> f64 {
        self.age * AGE_MAX
    }
}

/// One decoded state per prototype, in grid order.
pub fn decode_prototypes(vae: &VaeModel, grid: &PrototypeGrid) -> Result<Vec<PrototypicalState>, ExplainError> {
    let decoded = vae.decode_batch(&grid.prototypes)?;
    let l = vae.num_stages;
    Ok((0..decoded.rows())
        .map(|k| {
            let row = decoded.row(k);
            PrototypicalState {
                stage_probs: row[..l].to_vec(),
                score: row[l],
                age: row[l + 1],
            }
        })
        .collect())
}

/// Estimated likelihood of one prototype next to its clinical reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainEntry {
    pub score: f64,
    pub stage_probs: Vec<f64>,
    /// 0 to 30.
    pub mmse: f64,
    /// Years.
    pub age: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainableMap {
    pub topology: Topology,
    pub shape: Vec<usize>,
    pub entries: Vec<ExplainEntry>,
}

impl ExplainableMap {
    /// Entry with the highest likelihood, lowest index on ties.
    pub fn peak(&self) -> usize {
        let scores: Vec<f64> = self.entries.iter().map(|e| e.score).collect();
        argmax(&scores)
    }

    pub fn to_json(&self) -> Result<String, ExplainError> {
        serde_json::to_string_pretty(self).map_err(|e| ExplainError::Validation(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ExplainError> {
        let map: Self = serde_json::from_str(text).map_err(|e| ExplainError::Validation(e.to_string()))?;
        if map.entries.len() != map.topology.size() || map.shape != map.topology.dims() {
            return Err(ExplainError::Validation("entries do not match the topology".into()));
        }
        Ok(map)
    }
}

/// Zips an estimated map with the decoded prototype states.
pub fn build_clinical_map(
    map: &LikelihoodMap,
    states: &[PrototypicalState],
) -> Result<ExplainableMap, ExplainError> {
    if map.len() != states.len() {
        return Err(ExplainError::Validation(format!(
            "{} map values for {} decoded states",
            map.len(),
            states.len()
        )));
    }
    let entries = map
        .values()
        .iter()
        .zip(states)
        .map(|(&score, s)| ExplainEntry {
            score,
            stage_probs: s.stage_probs.clone(),
            mmse: s.mmse(),
            age: s.age_years(),
        })
        .collect();
    Ok(ExplainableMap {
        topology: map.topology(),
        shape: map.shape(),
        entries,
    })
}
