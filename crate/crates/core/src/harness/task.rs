//! Downstream tasks as views over a four-stage cohort.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::AucMode;
use crate::cohort::{CohortSample, AGE_MAX, MMSE_MAX};
use crate::likelihood::{TaskKind, TaskTarget};

const CN: usize = 0;
const SMCI: usize = 1;
const PMCI: usize = 2;
const AD: usize = 3;

/// Classification scenarios merge or drop stages; regression tasks predict
/// a normalized clinical value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CnAd,
    CnMci,
    MciAd,
    SmciPmci,
    CnMciAd,
    /// One class per stage.
    Stages,
    Mmse,
    /// Healthy samples only.
    Age,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::CnAd,
        Task::CnMci,
        Task::MciAd,
        Task::SmciPmci,
        Task::CnMciAd,
        Task::Stages,
        Task::Mmse,
        Task::Age,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CnAd => "cn_ad",
            Task::CnMci => "cn_mci",
            Task::MciAd => "mci_ad",
            Task::SmciPmci => "smci_pmci",
            Task::CnMciAd => "cn_mci_ad",
            Task::Stages => "stages",
            Task::Mmse => "mmse",
            Task::Age => "age",
        }
    }

    pub fn kind(self, num_stages: usize) -> TaskKind {
        match self {
            Task::CnMciAd => TaskKind::Classification { num_classes: 3 },
            Task::Stages => TaskKind::Classification { num_classes: num_stages },
            Task::Mmse | Task::Age => TaskKind::Regression,
            _ => TaskKind::Classification { num_classes: 2 },
        }
    }

    pub fn auc_mode(self) -> AucMode {
        match self.kind(4) {
            TaskKind::Classification { num_classes: 2 } => AucMode::Binary,
            _ => AucMode::Ovr,
        }
    }

    /// Whether the task relies on the CN / sMCI / pMCI / AD layout.
    pub fn needs_four_stages(self) -> bool {
        !matches!(self, Task::Stages | Task::Mmse)
    }

    /// Target of one sample, or `None` when the task leaves it out.
    pub fn target(self, sample: &CohortSample) -> Option<TaskTarget> {
        let stage = sample.record.stage;
        let class = |c: usize| Some(TaskTarget::Class(c));
        match self {
            Task::CnAd => match stage {
                CN => class(0),
                AD => class(1),
                _ => None,
            },
            Task::CnMci => match stage {
                CN => class(0),
                SMCI | PMCI => class(1),
                _ => None,
            },
            Task::MciAd => match stage {
                SMCI | PMCI => class(0),
                AD => class(1),
                _ => None,
            },
            Task::SmciPmci => match stage {
                SMCI => class(0),
                PMCI => class(1),
                _ => None,
            },
            Task::CnMciAd => match stage {
                CN => class(0),
                SMCI | PMCI => class(1),
                _ => class(2),
            },
            Task::Stages => class(stage),
            Task::Mmse => Some(TaskTarget::Value(sample.clinical.score())),
            Task::Age => (stage == CN).then(|| TaskTarget::Value(sample.clinical.age())),
        }
    }

    /// Converts a normalized regression value back to clinical units.
    pub fn denormalize(self, value: f64) -> f64 {
        match self {
            Task::Mmse => value * MMSE_MAX,
            Task::Age => value * AGE_MAX,
            _ => value,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}
