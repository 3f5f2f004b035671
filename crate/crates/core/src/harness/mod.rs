//! Metrics, cross-validated orchestration, run configuration and the stage
//! functions behind the command line.

mod config;
mod metrics;
mod pipeline;
mod report;
mod stages;
mod task;

pub use config::{
    topology_from_dims, AdpenSection, CaeSection, EstimatorSection, ExplainSection,
    OptimizerSection, RunConfig, RunSection, ENV_PREFIX,
};
pub use metrics::{
    balanced_accuracy, f1_weighted, rmse_r2, roc_auc, roc_auc_binary, roc_auc_ovr, AucMode,
    MetricError,
};
pub use pipeline::{evaluate_task, load_cohort, run_fold, run_pipeline, FoldOutcome, TaskSplit};
pub use report::{mean_std, FoldFailure, Metric, MetricSeries, MetricsReport, TaskMetrics, TaskReport};
pub use stages::{
    explain_stage, generate_stage, train_adpen_stage, train_estimator_stage, ExplainOutputs,
    ADPEN_FILE, CAE_FILE, COHORT_FILE,
};
pub use task::Task;

use crate::adpen::AdpenError;
use crate::cohort::CohortError;
use crate::explain::ExplainError;
use crate::likelihood::LikelihoodError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Adpen(#[from] AdpenError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    /// A stage was started before the artifacts it depends on exist.
    #[error("stage order: {0}")]
    Stage(String),
    #[error("{} fold stage(s) failed", .0.len())]
    Folds(Vec<FoldFailure>),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Cohort(_) => "cohort",
            HarnessError::Adpen(_) => "adpen",
            HarnessError::Likelihood(_) => "likelihood",
            HarnessError::Explain(_) => "explain",
            HarnessError::Metric(_) => "metric",
            HarnessError::Stage(_) => "stage",
            HarnessError::Folds(_) => "folds",
        }
    }

    /// `{"error": {"kind": …, "message": …}}`
    pub fn to_json(&self) -> String {
        let mut error = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        if let HarnessError::Folds(failures) = self {
            error["failures"] = serde_json::to_value(failures).unwrap_or_default();
        }
        serde_json::json!({ "error": error }).to_string()
    }
}

pub(crate) fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}
