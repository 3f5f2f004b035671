//! Single-split stages run by the command line. Each stage reads the
//! artifacts of the previous one from `run.output_dir` and refuses to start
//! when they are missing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::pipeline::{
    check_tasks, evaluate_task, fold_seed, imaging_matrix, json, load_cohort, pretrain_cae_fold,
    train_adpen_fold, train_task, SplitMaps, TaskSplit,
};
use super::report::TaskMetrics;
use super::task::Task;
use super::{read_file, write_file, HarnessError};
use crate::adpen::{AdpenCheckpoint, AdpenModel};
use crate::cohort::{generate_cohort, Cohort, FoldSplit};
use crate::explain::{
    build_clinical_map, decode_prototypes, morph_difference, retrieve_nearest_samples,
    select_stage_representatives, ExplainableMap, MorphDiffMap, PrototypicalSampleSet, StageSelection,
};
use crate::likelihood::{ConsistencyCae, EstimatorStack, LikelihoodMap};

pub const COHORT_FILE: &str = "cohort.ndjson";
pub const ADPEN_FILE: &str = "adpen.json";
pub const CAE_FILE: &str = "cae.json";

fn estimator_file(task: Task) -> String {
    format!("estimator_{task}.json")
}

/// Writes the synthetic cohort described by `[cohort]` as NDJSON.
pub fn generate_stage(config: &RunConfig) -> Result<PathBuf, HarnessError> {
    let cohort = generate_cohort(&config.cohort)?;
    let mut buf = Vec::new();
    cohort.write_ndjson(&mut buf)?;
    let path = config.run.output_dir.join(COHORT_FILE);
    write_file(&path, buf)?;
    Ok(path)
}

struct StageData {
    cohort: Cohort,
    split: FoldSplit,
    seed: u64,
}

fn stage_data(config: &RunConfig) -> Result<StageData, HarnessError> {
    config.validate()?;
    let cohort = load_cohort(config)?;
    check_tasks(&config.run.tasks, cohort.num_stages())?;
    let mut splits = cohort.stratified_kfold(config.run.folds, config.run.seed)?;
    let split = splits.swap_remove(config.run.fold);
    Ok(StageData {
        cohort,
        split,
        seed: fold_seed(config.run.seed, config.run.fold),
    })
}

fn require(path: &Path, stage: &str) -> Result<String, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Stage(format!(
            "{} not found; run {stage} first",
            path.display()
        )));
    }
    read_file(path)
}

fn load_adpen(dir: &Path) -> Result<AdpenModel, HarnessError> {
    let text = require(&dir.join(ADPEN_FILE), "train-adpen")?;
    Ok(AdpenCheckpoint::from_json(&text)?.model)
}

fn load_cae(dir: &Path) -> Result<ConsistencyCae, HarnessError> {
    let text = require(&dir.join(CAE_FILE), "train-adpen")?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Stage(format!("{CAE_FILE}: {e}")))
}

/// Trains ADPEN and fine-tunes its grid on the configured split, then
/// pretrains the consistency autoencoder on the resulting pseudo maps.
pub fn train_adpen_stage(config: &RunConfig) -> Result<AdpenModel, HarnessError> {
    let data = stage_data(config)?;
    let dir = config.run.output_dir.as_path();
    let train = data.cohort.subset(&data.split.train);
    let model = train_adpen_fold(config, &train, data.seed, Some(dir))?;
    let maps = SplitMaps::new(&train, &model, config.temperature())?;
    pretrain_cae_fold(config, &model, &maps.maps, data.seed, Some(dir))?;
    Ok(model)
}

fn task_split(config: &RunConfig, data: &StageData, model: &AdpenModel, task: Task) -> Result<TaskSplit, HarnessError> {
    let part = |rows: &[usize]| -> Result<_, HarnessError> {
        let cohort = data.cohort.subset(rows);
        SplitMaps::new(&cohort, model, config.temperature())?.task_data(&cohort, task)
    };
    Ok(TaskSplit {
        train: part(&data.split.train)?,
        validation: part(&data.split.validation)?,
        test: part(&data.split.test)?,
    })
}

/// Trains one estimator per configured task and scores it on the test
/// split. Writes `estimator_metrics.json` and `.csv`.
pub fn train_estimator_stage(config: &RunConfig) -> Result<Vec<TaskMetrics>, HarnessError> {
    let dir = config.run.output_dir.as_path();
    let model = load_adpen(dir)?;
    let cae = load_cae(dir)?;
    let data = stage_data(config)?;
    let num_stages = data.cohort.num_stages();
    let mut results = Vec::new();
    for &task in &config.run.tasks {
        let split = task_split(config, &data, &model, task)?;
        let (stack, _) = train_task(config, task, &split, &cae, &model, num_stages, data.seed, Some(dir))?;
        results.push(evaluate_task(task, task.kind(num_stages), &stack, &cae, &split.test, config.run.fold)?);
    }
    let mut csv = String::from("task,metric,value\n");
    for r in &results {
        for (m, v) in &r.values {
            csv.push_str(&format!("{},{},{v}\n", r.task, m.name()));
        }
    }
    write_file(&dir.join("estimator_metrics.json"), json(&results)?)?;
    write_file(&dir.join("estimator_metrics.csv"), csv)?;
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainOutputs {
    /// Row of the test split that was explained.
    pub sample: usize,
    pub query_age: f64,
    pub estimated: LikelihoodMap,
    pub explainable: ExplainableMap,
    pub samples: PrototypicalSampleSet,
    pub selection: Vec<StageSelection>,
    pub morph: MorphDiffMap,
}

/// Explains one held-out sample with the estimator of the first configured
/// task: its estimated and clinical maps, prototypical samples, per-stage
/// representatives and difference maps against them.
pub fn explain_stage(config: &RunConfig) -> Result<ExplainOutputs, HarnessError> {
    let dir = config.run.output_dir.as_path();
    let model = load_adpen(dir)?;
    load_cae(dir)?;
    let task = config.run.tasks[0];
    let text = require(&dir.join(estimator_file(task)), "train-estimator")?;
    let stack: EstimatorStack =
        serde_json::from_str(&text).map_err(|e| HarnessError::Stage(format!("{}: {e}", estimator_file(task))))?;
    let data = stage_data(config)?;
    let e = &config.explain;
    let row = *data.split.test.get(e.sample).ok_or_else(|| {
        HarnessError::Config(format!(
            "explain.sample {} beyond the {} test samples",
            e.sample,
            data.split.test.len()
        ))
    })?;
    let query = &data.cohort.samples()[row];
    let query_age = e.query_age.unwrap_or(query.record.age_years);

    let estimated = stack.estimate_map(&query.imaging.features)?;
    let states = decode_prototypes(&model.vae, &model.grid)?;
    let explainable = build_clinical_map(&estimated, &states)?;

    let train = data.cohort.subset(&data.split.train);
    let samples = retrieve_nearest_samples(&model.grid, &model.latents(&train)?, &imaging_matrix(&train)?, e.neighbours)?;
    let selection = select_stage_representatives(&states, data.cohort.num_stages(), query_age, e.per_stage)?;
    let references: Vec<(usize, &[f64])> = selection
        .iter()
        .flat_map(|s| s.prototypes.iter())
        .map(|&k| (k, samples.prototypes[k].mean.as_slice()))
        .collect();
    let morph = morph_difference(&query.imaging.features, &references, e.threshold)?;

    write_file(&dir.join("estimated_map.json"), estimated.to_json()?)?;
    write_file(&dir.join("explainable_map.json"), explainable.to_json()?)?;
    write_file(&dir.join("prototypical_samples.json"), json(&samples)?)?;
    write_file(&dir.join("stage_selection.json"), json(&selection)?)?;
    write_file(&dir.join("morph_diff.csv"), morph.to_csv())?;
    Ok(ExplainOutputs {
        sample: e.sample,
        query_age,
        estimated,
        explainable,
        samples,
        selection,
        morph,
    })
}
