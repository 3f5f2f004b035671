//! Classification and regression metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("invalid metric input: {0}")]
    Input(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucMode {
    Binary,
    /// Unweighted mean of one-vs-rest AUCs.
    Ovr,
}

fn same_len(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::Input(format!("{a} predictions for {b} labels")));
    }
    if a == 0 {
        return Err(MetricError::Input("empty input".into()));
    }
    Ok(())
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Computed from mid-ranks.
pub fn roc_auc_binary(scores: &[f64], positive: &[bool]) -> Result<f64, MetricError> {
    same_len(scores.len(), positive.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricError::Input("NaN score".into()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined("AUC needs both positive and negative samples".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the mid-rank keeps every quantity integral.
    let mut pos_rank_x2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank_x2 = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if positive[k] {
                pos_rank_x2 += rank_x2;
            }
        }
        i = j + 1;
    }
    let p = n_pos as u128;
    let wins_x2 = pos_rank_x2 - p * (p + 1);
    Ok(wins_x2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// One-vs-rest AUC over the columns of `probs` (one row per sample).
pub fn roc_auc_ovr(probs: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<f64, MetricError> {
    same_len(probs.len(), labels.len())?;
    if probs.iter().any(|p| p.len() != num_classes) {
        return Err(MetricError::Input(format!("score rows must have {num_classes} columns")));
    }
    let mut total = 0.0;
    for c in 0..num_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += roc_auc_binary(&scores, &positive)
            .map_err(|e| MetricError::Undefined(format!("class {c}: {e}")))?;
    }
    Ok(total / num_classes as f64)
}

/// Binary mode scores the last column against label 1.
pub fn roc_auc(probs: &[Vec<f64>], labels: &[usize], mode: AucMode) -> Result<f64, MetricError> {
    match mode {
        AucMode::Binary => {
            let scores: Vec<f64> = probs
                .iter()
                .map(|p| p.last().copied().ok_or_else(|| MetricError::Input("empty score row".into())))
                .collect::<Result<_, _>>()?;
            let positive: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            roc_auc_binary(&scores, &positive)
        }
        AucMode::Ovr => {
            let classes = probs.first().map_or(0, Vec::len);
            roc_auc_ovr(probs, labels, classes)
        }
    }
}

fn confusion(pred: &[usize], labels: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>, MetricError> {
    same_len(pred.len(), labels.len())?;
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(labels) {
        if p >= num_classes || t >= num_classes {
            return Err(MetricError::Input(format!("class index beyond {num_classes}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Mean per-class recall. Every class must occur among the labels.
pub fn balanced_accuracy(pred: &[usize], labels: &[usize], num_classes: usize) -> Result<f64, MetricError> {
    let m = confusion(pred, labels, num_classes)?;
    let mut total = 0.0;
    for (c, row) in m.iter().enumerate() {
        let support: usize = row.iter().sum();
        if support == 0 {
            return Err(MetricError::Undefined(format!("class {c} has no samples")));
        }
        total += row[c] as f64 / support as f64;
    }
    Ok(total / num_classes as f64)
}

/// Support-weighted mean of per-class F1. A class with no true positives
/// scores 0.
pub fn f1_weighted(pred: &[usize], labels: &[usize], num_classes: usize) -> Result<f64, MetricError> {
    let m = confusion(pred, labels, num_classes)?;
    let n = labels.len() as f64;
    let mut total = 0.0;
    for c in 0..num_classes {
        let tp = m[c][c] as f64;
        let support: usize = m[c].iter().sum();
        let predicted: usize = m.iter().map(|row| row[c]).sum();
        let f1 = if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (support + predicted) as f64
        };
        total += f1 * support as f64 / n;
    }
    Ok(total)
}

/// Root mean squared error and `1 − SS_res / SS_tot`.
pub fn rmse_r2(pred: &[f64], targets: &[f64]) -> Result<(f64, f64), MetricError> {
    same_len(pred.len(), targets.len())?;
    let n = targets.len() as f64;
    let ss_res: f64 = pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    let rmse = (ss_res / n).sqrt();
    if ss_tot == 0.0 {
        return Err(MetricError::Undefined("R² needs non-constant targets".into()));
    }
    Ok((rmse, 1.0 - ss_res / ss_tot))
}
