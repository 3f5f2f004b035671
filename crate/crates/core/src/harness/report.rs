use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::task::Task;
use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    BalancedAccuracy,
    F1Weighted,
    Rmse,
    R2,
}

impl Metric {
    pub const CLASSIFICATION: [Metric; 3] = [Metric::Auc, Metric::BalancedAccuracy, Metric::F1Weighted];
    pub const REGRESSION: [Metric; 2] = [Metric::Rmse, Metric::R2];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::F1Weighted => "f1_weighted",
            Metric::Rmse => "rmse",
            Metric::R2 => "r2",
        }
    }

    fn in_range(self, v: f64) -> bool {
        match self {
            Metric::Auc | Metric::BalancedAccuracy | Metric::F1Weighted => (0.0..=1.0).contains(&v),
            Metric::Rmse => v >= 0.0,
            Metric::R2 => v <= 1.0,
        }
    }
}

/// Metric values of one task on one test fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub fold: usize,
    pub task: Task,
    pub values: BTreeMap<Metric, f64>,
}

/// Structured record of a fold stage that did not complete.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub task: Option<Task>,
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl FoldFailure {
    pub fn new(fold: usize, task: Option<Task>, stage: &str, error: &HarnessError) -> Self {
        Self {
            fold,
            task,
            stage: stage.to_string(),
            kind: error.kind().to_string(),
            message: error.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: Metric,
    /// `None` where the fold failed.
    pub per_fold: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub metrics: Vec<MetricSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub folds: usize,
    pub tasks: Vec<TaskReport>,
    pub failures: Vec<FoldFailure>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

impl MetricsReport {
    pub fn from_folds(folds: usize, tasks: &[Task], results: &[TaskMetrics], failures: Vec<FoldFailure>) -> Self {
        let tasks = tasks
            .iter()
            .map(|&task| {
                let rows: Vec<&TaskMetrics> = results.iter().filter(|r| r.task == task).collect();
                let mut names: Vec<Metric> = rows.iter().flat_map(|r| r.values.keys().copied()).collect();
                names.sort();
                names.dedup();
                let metrics = names
                    .into_iter()
                    .map(|metric| {
                        let mut per_fold = vec![None; folds];
                        for r in &rows {
                            if let (Some(slot), Some(v)) = (per_fold.get_mut(r.fold), r.values.get(&metric)) {
                                *slot = Some(*v);
                            }
                        }
                        let present: Vec<f64> = per_fold.iter().flatten().copied().collect();
                        let stats = mean_std(&present);
                        MetricSeries {
                            metric,
                            per_fold,
                            mean: stats.map(|s| s.0),
                            std: stats.map(|s| s.1),
                        }
                    })
                    .collect();
                TaskReport { task, metrics }
            })
            .collect();
        Self { folds, tasks, failures }
    }

    pub fn series(&self, task: Task, metric: Metric) -> Option<&MetricSeries> {
        self.tasks
            .iter()
            .find(|t| t.task == task)?
            .metrics
            .iter()
            .find(|m| m.metric == metric)
    }

    pub fn mean(&self, task: Task, metric: Metric) -> Option<f64> {
        self.series(task, metric)?.mean
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for t in &self.tasks {
            for s in &t.metrics {
                if s.per_fold.len() != self.folds {
                    return Err(HarnessError::Config(format!(
                        "{} {} has {} fold values for {} folds",
                        t.task,
                        s.metric.name(),
                        s.per_fold.len(),
                        self.folds
                    )));
                }
                if let Some(v) = s.per_fold.iter().flatten().find(|v| !s.metric.in_range(**v)) {
                    return Err(HarnessError::Config(format!(
                        "{} {} value {v} out of range",
                        t.task,
                        s.metric.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let report: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }

    /// Long format: `task,metric,fold,value`, where `fold` is an index,
    /// `mean` or `std`. Failed folds leave `value` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,metric,fold,value\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for t in &self.tasks {
            for s in &t.metrics {
                for (fold, v) in s.per_fold.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{fold},{}", t.task, s.metric.name(), cell(*v));
                }
                let _ = writeln!(out, "{},{},mean,{}", t.task, s.metric.name(), cell(s.mean));
                let _ = writeln!(out, "{},{},std,{}", t.task, s.metric.name(), cell(s.std));
            }
        }
        out
    }
}
