//! Severity ordering of latent codes.
//!
//! A scalar projection `O(h)` is trained so that, for an anchor at stage `l`
//! and a partner at stage `l + 1`, `O(anchor) < O(partner)`. Each pair
//! contributes the projection gap divided by the latent distance. The raw
//! ratio is unbounded below, so by default it is squashed through a sigmoid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AdpenError;
use crate::autodiff::{
    affine_forward, sigmoid, squared_distance, Activation, AutodiffError, BoundDense, DenseLayer,
    Parameterized, Tape, Tensor, Var,
};
use crate::cohort::OrderingPair;

/// Pairs closer than this are skipped.
pub const MIN_PAIR_DISTANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingForm {
    /// `Σ sigmoid(gap / distance)`.
    #[default]
    Bounded,
    /// `Σ gap / distance`.
    Raw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderingConfig {
    pub form: OrderingForm,
    /// Treat the latent distance as a constant when differentiating.
    pub detach_distance: bool,
}

/// Affine map `R^M → R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingHead {
    pub layer: DenseLayer,
}

impl OrderingHead {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, rng: &mut R) -> Self {
        Self {
            layer: DenseLayer::new(latent_dim, 1, Activation::Identity, rng),
        }
    }

    pub fn project(&self, h: &[f64]) -> f64 {
        self.layer.bias.values()[0]
            + self
                .layer
                .weights
                .values()
                .iter()
                .zip(h)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDense {
        self.layer.bind(tape)
    }
}

impl Parameterized for OrderingHead {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        self.layer.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layer.parameters_mut()
    }
}

fn pair_term(gap: f64, distance: f64, form: OrderingForm) -> f64 {
    match form {
        OrderingForm::Bounded => sigmoid(gap / distance),
        OrderingForm::Raw => gap / distance,
    }
}

/// Ordering loss over `(anchor, partner)` latent pairs. Coincident pairs are
/// skipped.
pub fn ordering_loss(
    head: &OrderingHead,
    pairs: &[(Vec<f64>, Vec<f64>)],
    form: OrderingForm,
) -> Result<f64, AdpenError> {
    let mut total = 0.0;
    let mut skipped = 0;
    for (anchor, partner) in pairs {
        if anchor.len() != partner.len() {
            return Err(AdpenError::Model("ordering pair dimensions differ".into()));
        }
        let distance = squared_distance(anchor, partner).sqrt();
        if distance <= MIN_PAIR_DISTANCE {
            skipped += 1;
            continue;
        }
        total += pair_term(head.project(anchor) - head.project(partner), distance, form);
    }
    if skipped > 0 {
        log::debug!("skipped {skipped} coincident ordering pairs");
    }
    Ok(total)
}

/// Records the ordering loss for batch latents `h` (rows indexed by `pairs`).
/// Returns `None` when no usable pair remains.
pub fn ordering_loss_tape(
    tape: &mut Tape,
    head: &BoundDense,
    h: Var,
    pairs: &[OrderingPair],
    config: OrderingConfig,
) -> Result<Option<Var>, AutodiffError> {
    let values = tape.value(h);
    let usable: Vec<&OrderingPair> = pairs
        .iter()
        .filter(|p| squared_distance(values.row(p.anchor), values.row(p.partner)).sqrt() > MIN_PAIR_DISTANCE)
        .collect();
    if usable.len() < pairs.len() {
        log::debug!("skipped {} coincident ordering pairs", pairs.len() - usable.len());
    }
    if usable.is_empty() {
        return Ok(None);
    }
    let anchors: Vec<usize> = usable.iter().map(|p| p.anchor).collect();
    let partners: Vec<usize> = usable.iter().map(|p| p.partner).collect();
    let a = tape.gather_rows(h, &anchors)?;
    let b = tape.gather_rows(h, &partners)?;
    let oa = affine_forward(tape, head, a)?;
    let ob = affine_forward(tape, head, b)?;
    let gap = tape.sub(oa, ob)?;
    let diff = tape.sub(a, b)?;
    let sq = tape.square(diff);
    let sq = tape.sum_cols(sq);
    let mut distance = tape.sqrt(sq);
    if config.detach_distance {
        distance = tape.detach(distance);
    }
    let ratio = tape.div(gap, distance)?;
    let terms = match config.form {
        OrderingForm::Bounded => tape.sigmoid(ratio),
        OrderingForm::Raw => ratio,
    };
    Ok(Some(tape.sum(terms)))
}
