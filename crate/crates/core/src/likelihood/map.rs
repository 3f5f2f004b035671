//! Pseudo-likelihood maps over the prototype grid.

use serde::{Deserialize, Serialize};

use super::LikelihoodError;
use crate::adpen::{PrototypeGrid, Topology};
use crate::autodiff::{softmax, Tensor};

/// Below this spread a map or distance set counts as constant.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Pseudo,
    Estimated,
}

/// One value per prototype, laid out in grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MapRecord", try_from = "MapRecord")]
pub struct LikelihoodMap {
    kind: MapKind,
    topology: Topology,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapRecord {
    kind: MapKind,
    topology: Topology,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl From<LikelihoodMap> for MapRecord {
    fn from(map: LikelihoodMap) -> Self {
        MapRecord {
            kind: map.kind,
            shape: map.topology.dims(),
            topology: map.topology,
            values: map.values,
        }
    }
}

impl TryFrom<MapRecord> for LikelihoodMap {
    type Error = LikelihoodError;

    fn try_from(r: MapRecord) -> Result<Self, Self::Error> {
        if r.shape != r.topology.dims() {
            return Err(LikelihoodError::Validation(format!(
                "shape {:?} does not match topology {:?}",
                r.shape, r.topology
            )));
        }
        LikelihoodMap::new(r.kind, r.topology, r.values)
    }
}

impl LikelihoodMap {
    pub fn new(kind: MapKind, topology: Topology, values: Vec<f64>) -> Result<Self, LikelihoodError> {
        if values.len() != topology.size() {
            return Err(LikelihoodError::Validation(format!(
                "{} map values for {} prototypes",
                values.len(),
                topology.size()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LikelihoodError::Validation(format!("map value {v} outside [0, 1]")));
        }
        Ok(Self {
            kind,
            topology,
            values,
        })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn shape(&self) -> Vec<usize> {
        self.topology.dims()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest value, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String, LikelihoodError> {
        serde_json::to_string(self).map_err(|e| LikelihoodError::Validation(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, LikelihoodError> {
        serde_json::from_str(text).map_err(|e| LikelihoodError::Validation(e.to_string()))
    }
}

/// How the softmax temperature `γ` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Temperature {
    /// Population standard deviation of each sample's distances.
    #[default]
    Variance,
    Fixed { gamma: f64 },
}

/// Population standard deviation of `distances`, or 1 when they are constant.
pub fn resolve_temperature(distances: &[f64]) -> f64 {
    if distances.is_empty() {
        return 1.0;
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_SPREAD {
        1.0
    } else {
        std
    }
}

fn temperature_for(distances: &[f64], policy: Temperature) -> f64 {
    let gamma = match policy {
        Temperature::Variance => resolve_temperature(distances),
        Temperature::Fixed { gamma } => gamma,
    };
    if gamma > 0.0 && gamma.is_finite() {
        gamma
    } else {
        log::warn!("temperature {gamma} is not positive, using 1");
        1.0
    }
}

/// `(v − min) / (max − min)`; nearly constant inputs come back unchanged.
pub fn minmax_normalize(v: &[f64]) -> Vec<f64> {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    if !(span >= DEGENERATE_SPREAD) {
        return v.to_vec();
    }
    v.iter().map(|x| ((x - min) / span).clamp(0.0, 1.0)).collect()
}

/// `softmax(−d / γ)` over the squared prototype distances, before
/// normalization. Sums to one.
pub fn pseudo_probabilities(h: &[f64], grid: &PrototypeGrid, policy: Temperature) -> Vec<f64> {
    let d = grid.distances(h);
    let gamma = temperature_for(&d, policy);
    let logits: Vec<f64> = d.iter().map(|v| -v / gamma).collect();
    softmax(&logits)
}

pub fn pseudo_map(
    h: &[f64],
    grid: &PrototypeGrid,
    policy: Temperature,
) -> Result<LikelihoodMap, LikelihoodError> {
    if h.len() != grid.dim() {
        return Err(LikelihoodError::Validation(format!(
            "latent has {} dimensions, prototypes have {}",
            h.len(),
            grid.dim()
        )));
    }
    let p = minmax_normalize(&pseudo_probabilities(h, grid, policy));
    LikelihoodMap::new(MapKind::Pseudo, grid.topology, p)
}

/// Pseudo maps for every row of `latents`, stacked `n × K`.
pub fn pseudo_maps(
    latents: &Tensor,
    grid: &PrototypeGrid,
    policy: Temperature,
) -> Result<Tensor, LikelihoodError> {
    let rows = (0..latents.rows())
        .map(|r| pseudo_map(latents.row(r), grid, policy).map(|m| m.values))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tensor::matrix(latents.rows(), grid.len(), rows.concat())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(points: &[f64]) -> PrototypeGrid {
        PrototypeGrid::new(
            Tensor::matrix(points.len(), 1, points.to_vec()).unwrap(),
            Topology::Chain { len: points.len() },
        )
        .unwrap()
    }

    #[test]
    fn two_point_population_std() {
        assert_eq!(resolve_temperature(&[0.0, 2.0]), 1.0);
        assert_eq!(resolve_temperature(&[3.0, 3.0, 3.0]), 1.0);
        assert!((resolve_temperature(&[0.0, 4.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_softmax() {
        // Squared distances from 0 are [0, 1, 2, 3].
        let grid = chain(&[0.0, 1.0, 2f64.sqrt(), 3f64.sqrt()]);
        let p = pseudo_probabilities(&[0.0], &grid, Temperature::Fixed { gamma: 1.0 });
        let z: f64 = (0..4).map(|d| (-(d as f64)).exp()).sum();
        for (d, v) in p.iter().enumerate() {
            assert!((v - (-(d as f64)).exp() / z).abs() < 1e-15);
        }
        let map = pseudo_map(&[0.0], &grid, Temperature::Fixed { gamma: 1.0 }).unwrap();
        assert_eq!(map.values()[0], 1.0);
        assert_eq!(map.values()[3], 0.0);
        let expected = (p[1] - p[3]) / (p[0] - p[3]);
        assert!((map.values()[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn equidistant_latent_gives_flat_map() {
        let grid = chain(&[-1.0, 1.0]);
        let p = pseudo_probabilities(&[0.0], &grid, Temperature::Variance);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(pseudo_map(&[0.0], &grid, Temperature::Variance).unwrap().values(), &[0.5, 0.5]);
    }

    #[test]
    fn cold_limit_is_one_hot_at_bmu() {
        let grid = chain(&[0.0, 0.4, 1.0, 2.0]);
        let map = pseudo_map(&[0.5], &grid, Temperature::Fixed { gamma: 1e-4 }).unwrap();
        assert_eq!(map.values(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_positive_temperature_falls_back_to_one() {
        let grid = chain(&[0.0, 1.0, 3.0]);
        let unit = pseudo_probabilities(&[0.2], &grid, Temperature::Fixed { gamma: 1.0 });
        for gamma in [0.0, -2.0, f64::NAN] {
            assert_eq!(pseudo_probabilities(&[0.2], &grid, Temperature::Fixed { gamma }), unit);
        }
    }

    #[test]
    fn minmax_cases() {
        let v = minmax_normalize(&[0.2, 0.4, 0.6]);
        assert!((v[1] - 0.5).abs() < 1e-15 && v[0] == 0.0 && v[2] == 1.0);
        assert_eq!(minmax_normalize(&[0.3; 4]), vec![0.3; 4]);
    }

    #[test]
    fn json_has_shape_and_round_trips() {
        let map = LikelihoodMap::new(
            MapKind::Estimated,
            Topology::Grid2d { rows: 1, cols: 2 },
            vec![0.25, 0.1 + 0.2],
        )
        .unwrap();
        let text = map.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["shape"], serde_json::json!([1, 2]));
        assert_eq!(v["kind"], "estimated");
        assert_eq!(LikelihoodMap::from_json(&text).unwrap(), map);
    }

    #[test]
    fn rejects_bad_maps() {
        let t = Topology::Chain { len: 2 };
        assert!(LikelihoodMap::new(MapKind::Pseudo, t, vec![0.5]).is_err());
        assert!(LikelihoodMap::new(MapKind::Pseudo, t, vec![0.5, 1.5]).is_err());
        assert!(LikelihoodMap::from_json(
            r#"{"kind":"pseudo","topology":{"kind":"chain","len":2},"shape":[3],"values":[0,1]}"#
        )
        .is_err());
    }
}
