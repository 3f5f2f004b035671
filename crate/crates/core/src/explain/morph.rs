use serde::{Deserialize, Serialize};

use super::ExplainError;

/// Percentile of `|X − X̄|` used as the threshold when none is given.
pub const DEFAULT_PERCENTILE: f64 = 60.0;

/// Thresholded `X − X̄_k`, one row per selected prototype.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphDiffMap {
    pub prototypes: Vec<usize>,
    pub threshold: f64,
    pub rows: Vec<Vec<f64>>,
}

impl MorphDiffMap {
    /// `prototype,f0,f1,…` with one line per row.
    pub fn to_csv(&self) -> String {
        let dim = self.rows.first().map_or(0, Vec::len);
        let mut out = String::from("prototype");
        for j in 0..dim {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (k, row) in self.prototypes.iter().zip(&self.rows) {
            out.push_str(&k.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Linear-interpolation percentile (`q` in `[0, 100]`) of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Signed differences between `query` and each reference, with entries
/// whose magnitude falls below the threshold set to zero. Without an
/// explicit threshold the [`DEFAULT_PERCENTILE`] of all magnitudes is used.
pub fn morph_difference(
    query: &[f64],
    references: &[(usize, &[f64])],
    threshold: Option<f64>,
) -> Result<MorphDiffMap, ExplainError> {
    if let Some((k, r)) = references.iter().find(|(_, r)| r.len() != query.len()) {
        return Err(ExplainError::Validation(format!(
            "prototype {k} has {} features, query has {}",
            r.len(),
            query.len()
        )));
    }
    let mut rows: Vec<Vec<f64>> = references
        .iter()
        .map(|(_, r)| query.iter().zip(*r).map(|(x, m)| x - m).collect())
        .collect();
    let tau = match threshold {
        Some(t) if t >= 0.0 => t,
        Some(t) => return Err(ExplainError::Validation(format!("negative threshold {t}"))),
        None => {
            let mags: Vec<f64> = rows.iter().flatten().map(|v| v.abs()).collect();
            percentile(&mags, DEFAULT_PERCENTILE)
        }
    };
    for v in rows.iter_mut().flatten() {
        if v.abs() < tau {
            *v = 0.0;
        }
    }
    Ok(MorphDiffMap {
        prototypes: references.iter().map(|(k, _)| *k).collect(),
        threshold: tau,
        rows,
    })
}
