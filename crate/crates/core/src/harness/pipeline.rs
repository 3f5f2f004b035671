//! Stratified cross-validation over the full pipeline.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::RunConfig;
use super::metrics::{balanced_accuracy, f1_weighted, rmse_r2, roc_auc};
use super::report::{FoldFailure, Metric, MetricsReport, TaskMetrics};
use super::task::Task;
use super::{write_file, HarnessError};
use crate::adpen::{finetune_som, train_adpen, AdpenCheckpoint, AdpenModel};
use crate::autodiff::Tensor;
use crate::cohort::{argmax, generate_cohort, Cohort, FoldSplit};
use crate::likelihood::{
    gather_rows, pretrain_cae, pseudo_maps, train_estimator, ConsistencyCae, EstimatorData, EstimatorLog,
    EstimatorStack, LikelihoodMap, MapKind, TaskKind, TaskTarget, Temperature,
};

/// The configured cohort file, or a freshly generated synthetic cohort.
pub fn load_cohort(config: &RunConfig) -> Result<Cohort, HarnessError> {
    match &config.run.cohort_path {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(Cohort::read_ndjson(BufReader::new(file), config.cohort.num_stages())?)
        }
        None => Ok(generate_cohort(&config.cohort)?),
    }
}

pub(crate) fn check_tasks(tasks: &[Task], num_stages: usize) -> Result<(), HarnessError> {
    if let Some(t) = tasks.iter().find(|t| t.needs_four_stages() && num_stages != 4) {
        return Err(HarnessError::Config(format!(
            "task {t} needs the four-stage layout, cohort has {num_stages} stages"
        )));
    }
    Ok(())
}

pub(crate) fn imaging_matrix(cohort: &Cohort) -> Result<Tensor, HarnessError> {
    let rows: Vec<Vec<f64>> = cohort.samples().iter().map(|s| s.imaging.features.clone()).collect();
    Ok(Tensor::from_rows(&rows).map_err(crate::likelihood::LikelihoodError::from)?)
}

/// Imaging features, pseudo maps and task targets of one cohort split.
pub(crate) struct SplitMaps {
    pub imaging: Tensor,
    pub maps: Tensor,
}

impl SplitMaps {
    pub fn new(cohort: &Cohort, model: &AdpenModel, temperature: Temperature) -> Result<Self, HarnessError> {
        Ok(Self {
            imaging: imaging_matrix(cohort)?,
            maps: pseudo_maps(&model.latents(cohort)?, &model.grid, temperature)?,
        })
    }

    /// Rows the task keeps, as estimator data.
    pub fn task_data(&self, cohort: &Cohort, task: Task) -> Result<EstimatorData, HarnessError> {
        let (rows, targets): (Vec<usize>, Vec<TaskTarget>) = cohort
            .samples()
            .iter()
            .enumerate()
            .filter_map(|(i, s)| task.target(s).map(|t| (i, t)))
            .unzip();
        if rows.is_empty() {
            return Err(HarnessError::Config(format!("task {task} keeps no samples in this split")));
        }
        Ok(EstimatorData::new(
            gather_rows(&self.imaging, &rows),
            gather_rows(&self.maps, &rows),
            targets,
        )?)
    }
}

/// Train/validation/test data of one task on one fold.
pub struct TaskSplit {
    pub train: EstimatorData,
    pub validation: EstimatorData,
    pub test: EstimatorData,
}

/// Test-fold metrics of a trained estimator. Regression errors are reported
/// in clinical units.
pub fn evaluate_task(
    task: Task,
    kind: TaskKind,
    stack: &EstimatorStack,
    cae: &ConsistencyCae,
    test: &EstimatorData,
    fold: usize,
) -> Result<TaskMetrics, HarnessError> {
    let out = stack.predict(cae, &test.imaging)?;
    let mut values = BTreeMap::new();
    match kind {
        TaskKind::Classification { num_classes } => {
            let probs: Vec<Vec<f64>> = (0..out.rows()).map(|r| out.row(r).to_vec()).collect();
            let labels: Vec<usize> = test
                .targets
                .iter()
                .map(|t| match t {
                    TaskTarget::Class(c) => Ok(*c),
                    TaskTarget::Value(_) => Err(HarnessError::Config(format!("task {task} has a regression target"))),
                })
                .collect::<Result<_, _>>()?;
            let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
            values.insert(Metric::Auc, roc_auc(&probs, &labels, task.auc_mode())?);
            values.insert(Metric::BalancedAccuracy, balanced_accuracy(&pred, &labels, num_classes)?);
            values.insert(Metric::F1Weighted, f1_weighted(&pred, &labels, num_classes)?);
        }
        TaskKind::Regression => {
            let pred: Vec<f64> = (0..out.rows()).map(|r| task.denormalize(out.row(r)[0])).collect();
            let targets: Vec<f64> = test
                .targets
                .iter()
                .map(|t| match t {
                    TaskTarget::Value(v) => Ok(task.denormalize(*v)),
                    TaskTarget::Class(_) => Err(HarnessError::Config(format!("task {task} has a class target"))),
                })
                .collect::<Result<_, _>>()?;
            let (rmse, r2) = rmse_r2(&pred, &targets)?;
            values.insert(Metric::Rmse, rmse);
            values.insert(Metric::R2, r2);
        }
    }
    Ok(TaskMetrics { fold, task, values })
}

/// Per-fold metrics and the stages that failed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoldOutcome {
    pub metrics: Vec<TaskMetrics>,
    pub failures: Vec<FoldFailure>,
}

pub(crate) fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add(fold as u64)
}

pub(crate) fn train_adpen_fold(
    config: &RunConfig,
    train: &Cohort,
    seed: u64,
    dir: Option<&Path>,
) -> Result<AdpenModel, HarnessError> {
    let adpen = config.adpen_config(train.num_stages(), seed)?;
    let (mut model, log) = train_adpen(train, &adpen)?;
    let (grid, finetune) = finetune_som(&model.vae, &model.grid, train, &adpen)?;
    model.grid = grid;
    if let Some(dir) = dir {
        write_file(&dir.join("adpen_curve.csv"), log.to_csv())?;
        let mut curve = String::from("epoch,quantization_error\n");
        for (e, q) in finetune.quantization_error.iter().enumerate() {
            curve.push_str(&format!("{e},{q}\n"));
        }
        write_file(&dir.join("finetune_curve.csv"), curve)?;
        let ckpt = AdpenCheckpoint::new(model.clone(), &adpen);
        write_file(&dir.join(super::ADPEN_FILE), ckpt.to_json()?)?;
    }
    Ok(model)
}

pub(crate) fn pretrain_cae_fold(
    config: &RunConfig,
    model: &AdpenModel,
    train_maps: &Tensor,
    seed: u64,
    dir: Option<&Path>,
) -> Result<ConsistencyCae, HarnessError> {
    let (cae, curve) = pretrain_cae(train_maps, &config.cae_config(seed))?;
    if let Some(dir) = dir {
        let maps = (0..train_maps.rows())
            .map(|r| LikelihoodMap::new(MapKind::Pseudo, model.grid.topology, train_maps.row(r).to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        write_file(&dir.join("pseudo_maps.json"), json(&maps)?)?;
        let mut csv = String::from("epoch,reconstruction_error\n");
        for (e, v) in curve.iter().enumerate() {
            csv.push_str(&format!("{e},{v}\n"));
        }
        write_file(&dir.join("cae_curve.csv"), csv)?;
        write_file(&dir.join(super::CAE_FILE), json(&cae)?)?;
    }
    Ok(cae)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn train_task(
    config: &RunConfig,
    task: Task,
    split: &TaskSplit,
    cae: &ConsistencyCae,
    model: &AdpenModel,
    num_stages: usize,
    seed: u64,
    dir: Option<&Path>,
) -> Result<(EstimatorStack, EstimatorLog), HarnessError> {
    let kind = task.kind(num_stages);
    let (stack, log) = train_estimator(
        &split.train,
        &split.validation,
        cae,
        model.grid.topology,
        kind,
        &config.estimator_config(seed),
    )?;
    if let Some(dir) = dir {
        write_file(&dir.join(format!("estimator_{task}.json")), json(&stack)?)?;
        write_file(&dir.join(format!("estimator_{task}_curve.csv")), log.to_csv())?;
        let est = stack.estimate(&split.test.imaging)?;
        let maps = (0..est.rows())
            .map(|r| LikelihoodMap::new(MapKind::Estimated, model.grid.topology, est.row(r).to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        write_file(&dir.join(format!("estimated_maps_{task}.json")), json(&maps)?)?;
    }
    Ok((stack, log))
}

pub(crate) fn json<T: serde::Serialize>(value: &T) -> Result<String, HarnessError> {
    serde_json::to_string(value).map_err(|e| HarnessError::Config(e.to_string()))
}

/// One fold: ADPEN, SOM fine-tuning, pseudo maps, CAE, then one estimator
/// per task scored on the test split. A failing stage is recorded and skips
/// whatever depends on it.
pub fn run_fold(
    config: &RunConfig,
    cohort: &Cohort,
    fold: usize,
    split: &FoldSplit,
    dir: Option<&Path>,
) -> FoldOutcome {
    let mut outcome = FoldOutcome::default();
    let seed = fold_seed(config.run.seed, fold);
    let train = cohort.subset(&split.train);
    let validation = cohort.subset(&split.validation);
    let test = cohort.subset(&split.test);
    let shared = (|| {
        let model = train_adpen_fold(config, &train, seed, dir)?;
        let temperature = config.temperature();
        let maps = [
            SplitMaps::new(&train, &model, temperature)?,
            SplitMaps::new(&validation, &model, temperature)?,
            SplitMaps::new(&test, &model, temperature)?,
        ];
        let cae = pretrain_cae_fold(config, &model, &maps[0].maps, seed, dir)?;
        Ok::<_, HarnessError>((model, maps, cae))
    })();
    let (model, maps, cae) = match shared {
        Ok(v) => v,
        Err(e) => {
            outcome.failures.push(FoldFailure::new(fold, None, "prototypes", &e));
            return outcome;
        }
    };
    for &task in &config.run.tasks {
        let result = (|| {
            let split = TaskSplit {
                train: maps[0].task_data(&train, task)?,
                validation: maps[1].task_data(&validation, task)?,
                test: maps[2].task_data(&test, task)?,
            };
            let (stack, _) = train_task(config, task, &split, &cae, &model, cohort.num_stages(), seed, dir)?;
            evaluate_task(task, task.kind(cohort.num_stages()), &stack, &cae, &split.test, fold)
        })();
        match result {
            Ok(m) => outcome.metrics.push(m),
            Err(e) => outcome.failures.push(FoldFailure::new(fold, Some(task), "estimator", &e)),
        }
    }
    outcome
}

fn fold_dir(config: &RunConfig, fold: usize) -> PathBuf {
    config.run.output_dir.join(format!("fold_{fold}"))
}

/// Stratified k-fold evaluation of every configured task. Writes per-fold
/// artifacts under `output_dir/fold_<i>/` and `metrics.json` / `metrics.csv`
/// at the top level.
pub fn run_pipeline(config: &RunConfig) -> Result<MetricsReport, HarnessError> {
    config.validate()?;
    let cohort = load_cohort(config)?;
    check_tasks(&config.run.tasks, cohort.num_stages())?;
    let splits = cohort.stratified_kfold(config.run.folds, config.run.seed)?;
    let outcomes: Vec<FoldOutcome> = splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| {
            let dir = fold_dir(config, fold);
            run_fold(config, &cohort, fold, split, Some(&dir))
        })
        .collect();
    let mut metrics = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        metrics.extend(o.metrics);
        failures.extend(o.failures);
    }
    let report = MetricsReport::from_folds(config.run.folds, &config.run.tasks, &metrics, failures);
    let out = &config.run.output_dir;
    write_file(&out.join("metrics.json"), report.to_json()?)?;
    write_file(&out.join("metrics.csv"), report.to_csv())?;
    write_file(&out.join("config.toml"), config.to_toml()?)?;
    Ok(report)
}
