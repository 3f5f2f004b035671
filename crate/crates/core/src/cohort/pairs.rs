use rand::Rng;
use serde::{Deserialize, Serialize};

/// Batch positions of an anchor and a partner one stage further along.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingPair {
    pub anchor: usize,
    pub partner: usize,
}

/// For every batch member below the final stage, draws a partner uniformly
/// from the batch members at the next stage. Anchors without a candidate
/// partner are skipped.
pub fn sample_ordering_pairs<R: Rng + ?Sized>(
    stages: &[usize],
    num_stages: usize,
    rng: &mut R,
) -> Vec<OrderingPair> {
    let mut by_stage: Vec<Vec<usize>> = vec![Vec::new(); num_stages];
    for (pos, &s) in stages.iter().enumerate() {
        if s < num_stages {
            by_stage[s].push(pos);
        }
    }
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for (anchor, &stage) in stages.iter().enumerate() {
        if stage + 1 >= num_stages {
            continue;
        }
        let candidates = &by_stage[stage + 1];
        if candidates.is_empty() {
            skipped += 1;
            continue;
        }
        let partner = candidates[rng.random_range(0..candidates.len())];
        pairs.push(OrderingPair { anchor, partner });
    }
    if skipped > 0 {
        log::debug!("{skipped} ordering anchors had no next-stage partner in the batch");
    }
    pairs
}
