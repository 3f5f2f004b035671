//! Prototype grid with a fixed 1D/2D/3D topology and Gaussian neighborhood
//! learning around the best matching unit (BMU).

use serde::{Deserialize, Serialize};

use super::AdpenError;
use crate::autodiff::{squared_distance, Parameterized, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Chain { len: usize },
    Grid2d { rows: usize, cols: usize },
    Grid3d { depth: usize, rows: usize, cols: usize },
}

impl Default for Topology {
    fn default() -> Self {
        Topology::Grid2d { rows: 5, cols: 20 }
    }
}

impl Topology {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Topology::Chain { len } => vec![len],
            Topology::Grid2d { rows, cols } => vec![rows, cols],
            Topology::Grid3d { depth, rows, cols } => vec![depth, rows, cols],
        }
    }

    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn largest_dim(&self) -> usize {
        self.dims().into_iter().max().unwrap_or(0)
    }

    /// Row-major grid coordinates of unit `k`.
    pub fn coords(&self, k: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut rest = k;
        let mut out = vec![0; dims.len()];
        for (i, d) in dims.iter().enumerate().rev() {
            out[i] = rest % d;
            rest /= d;
        }
        out
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        self.coords(a)
            .iter()
            .zip(self.coords(b))
            .map(|(x, y)| x.abs_diff(y))
            .sum()
    }

    pub fn validate(&self) -> Result<(), AdpenError> {
        if self.dims().contains(&0) {
            return Err(AdpenError::Config(format!("empty topology {self:?}")));
        }
        Ok(())
    }
}

/// `K` prototypes in latent space arranged on a [`Topology`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeGrid {
    /// `K × M`, row `k` is prototype `k`.
    pub prototypes: Tensor,
    pub topology: Topology,
}

impl PrototypeGrid {
    pub fn new(prototypes: Tensor, topology: Topology) -> Result<Self, AdpenError> {
        topology.validate()?;
        if prototypes.rows() != topology.size() || prototypes.shape().len() != 2 {
            return Err(AdpenError::Config(format!(
                "{} prototypes for a topology of {} units",
                prototypes.rows(),
                topology.size()
            )));
        }
        Ok(Self {
            prototypes,
            topology,
        })
    }

    pub fn len(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn prototype(&self, k: usize) -> &[f64] {
        self.prototypes.row(k)
    }

    pub fn distances(&self, h: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|k| squared_distance(h, self.prototype(k)))
            .collect()
    }
}

impl Parameterized for PrototypeGrid {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![("prototypes".into(), &self.prototypes)]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("prototypes".into(), &mut self.prototypes)]
    }
}

/// `argmin_k ‖h − p_k‖²`, lowest index on ties.
pub fn bmu_index(h: &[f64], grid: &PrototypeGrid) -> usize {
    argmin(&grid.distances(h))
}

pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Indices of the two nearest prototypes (`first != second` when `K ≥ 2`).
pub fn two_nearest(h: &[f64], grid: &PrototypeGrid) -> (usize, usize) {
    let d = grid.distances(h);
    let first = argmin(&d);
    let mut second = if first == 0 { 1.min(d.len() - 1) } else { 0 };
    for (i, v) in d.iter().enumerate() {
        if i != first && *v < d[second] {
            second = i;
        }
    }
    (first, second)
}

/// Manhattan grid distance from unit `bmu` to every unit.
pub fn topo_distances(bmu: usize, grid: &PrototypeGrid) -> Vec<f64> {
    topology_distances(bmu, &grid.topology)
}

pub fn topology_distances(bmu: usize, topology: &Topology) -> Vec<f64> {
    (0..topology.size())
        .map(|k| topology.manhattan(bmu, k) as f64)
        .collect()
}

/// Exponentially decaying neighborhood radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SomSchedule {
    pub gamma_max: f64,
    pub gamma_min: f64,
    pub total_steps: u64,
    pub step: u64,
}

impl SomSchedule {
    pub fn new(gamma_max: f64, gamma_min: f64, total_steps: u64) -> Result<Self, AdpenError> {
        if !(gamma_min > 0.0 && gamma_min <= gamma_max && gamma_max.is_finite()) {
            return Err(AdpenError::Config(format!(
                "radius bounds need 0 < Γ_min ≤ Γ_max, got {gamma_min} and {gamma_max}"
            )));
        }
        Ok(Self {
            gamma_max,
            gamma_min,
            total_steps,
            step: 0,
        })
    }

    /// `Γ_max (Γ_min / Γ_max)^(t / T)`, with `t` clamped to `[0, T]`.
    pub fn radius_at(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.gamma_max;
        }
        let t = step.min(self.total_steps);
        if t == 0 {
            return self.gamma_max;
        }
        if t == self.total_steps {
            return self.gamma_min;
        }
        let frac = t as f64 / self.total_steps as f64;
        self.gamma_max * (self.gamma_min / self.gamma_max).powf(frac)
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

pub fn radius(schedule: &SomSchedule) -> f64 {
    schedule.radius_at(schedule.step)
}

/// `exp(−Δ² / 2Γ²)`, kept strictly positive.
pub fn neighborhood_weights(distances: &[f64], gamma: f64) -> Result<Vec<f64>, AdpenError> {
    if !(gamma > 0.0) {
        return Err(AdpenError::Config(format!("radius must be positive, got {gamma}")));
    }
    let denom = 2.0 * gamma * gamma;
    Ok(distances
        .iter()
        .map(|d| (-(d * d) / denom).exp().max(f64::MIN_POSITIVE))
        .collect())
}

/// Per-sample neighborhood weights around each sample's BMU, `n × K`.
pub fn batch_weights(latents: &Tensor, grid: &PrototypeGrid, gamma: f64) -> Result<Tensor, AdpenError> {
    let k = grid.len();
    let mut values = Vec::with_capacity(latents.rows() * k);
    for r in 0..latents.rows() {
        let bmu = bmu_index(latents.row(r), grid);
        values.extend(neighborhood_weights(&topo_distances(bmu, grid), gamma)?);
    }
    Ok(Tensor::matrix(latents.rows(), k, values)?)
}

/// `Σ_n Σ_k ω_nk ‖h_n − p_k‖²` for `latents: n × M`.
pub fn som_loss(latents: &Tensor, grid: &PrototypeGrid, gamma: f64) -> Result<f64, AdpenError> {
    if latents.rows() == 0 || latents.is_empty() {
        return Err(AdpenError::Model("empty batch".into()));
    }
    let weights = batch_weights(latents, grid, gamma)?;
    let mut total = 0.0;
    for r in 0..latents.rows() {
        for (w, d) in weights.row(r).iter().zip(grid.distances(latents.row(r))) {
            total += w * d;
        }
    }
    Ok(total)
}

/// Records the SOM loss. BMUs and weights are computed from current values
/// and enter the tape as constants.
pub fn som_loss_tape(
    tape: &mut Tape,
    h: Var,
    prototypes: Var,
    grid: &PrototypeGrid,
    gamma: f64,
) -> Result<Var, AdpenError> {
    let current = PrototypeGrid {
        prototypes: tape.value(prototypes).clone(),
        topology: grid.topology,
    };
    let weights = batch_weights(tape.value(h), &current, gamma)?;
    let w = tape.leaf_owned(weights);
    let d = tape.pairwise_sq_dist(h, prototypes)?;
    let weighted = tape.mul(w, d)?;
    Ok(tape.sum(weighted))
}

/// Mean squared distance from each latent to its BMU.
pub fn quantization_error(latents: &Tensor, grid: &PrototypeGrid) -> f64 {
    if latents.rows() == 0 {
        return 0.0;
    }
    let total: f64 = (0..latents.rows())
        .map(|r| {
            grid.distances(latents.row(r))
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / latents.rows() as f64
}

/// Fraction of latents whose two nearest prototypes are not grid neighbours.
pub fn topographic_error(latents: &Tensor, grid: &PrototypeGrid) -> f64 {
    if latents.rows() == 0 || grid.len() < 2 {
        return 0.0;
    }
    let bad = (0..latents.rows())
        .filter(|&r| {
            let (a, b) = two_nearest(latents.row(r), grid);
            grid.topology.manhattan(a, b) != 1
        })
        .count();
    bad as f64 / latents.rows() as f64
}
