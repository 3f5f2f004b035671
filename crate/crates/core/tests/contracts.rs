mod common;

use std::process::Command;

use common::{small_config, SMALL_CONFIG};
use protomap::adpen::{finetune_som, train_adpen, AdpenCheckpoint, AdpenConfig, Topology, VaeConfig};
use protomap::autodiff::Parameterized;
use protomap::cohort::{generate_cohort, SyntheticSpec};
use protomap::harness::{
    explain_stage, generate_stage, run_pipeline, train_adpen_stage, train_estimator_stage, HarnessError,
    MetricsReport, RunConfig, Task,
};
use protomap::likelihood::{
    pretrain_cae, pseudo_maps, train_estimator, CaeConfig, ConsistencyCae, EstimatorConfig, EstimatorData,
    EstimatorStack, TaskKind, TaskTarget, Temperature,
};
use protomap::autodiff::Tensor;

fn tiny_adpen() -> (protomap::cohort::Cohort, AdpenConfig) {
    let spec = SyntheticSpec { stage_counts: vec![12; 4], feature_dim: 8, ..SyntheticSpec::default() };
    let cohort = generate_cohort(&spec).unwrap();
    let config = AdpenConfig {
        vae: VaeConfig { hidden: vec![8, 6], ..VaeConfig::default() },
        topology: Topology::Grid2d { rows: 2, cols: 4 },
        epochs: 20,
        finetune_epochs: 10,
        ..AdpenConfig::default()
    };
    (cohort, config)
}

#[test]
fn adpen_checkpoint_round_trips() {
    let (cohort, config) = tiny_adpen();
    let (model, _) = train_adpen(&cohort, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adpen.json");
    AdpenCheckpoint::new(model.clone(), &config).save(&path).unwrap();
    let back = AdpenCheckpoint::load(&path).unwrap();
    assert_eq!(back.model, model);
    assert_eq!(back.model.latents(&cohort).unwrap(), model.latents(&cohort).unwrap());
    assert!(AdpenCheckpoint::from_json("{\"version\": 99}").is_err());
}

#[test]
fn finetuning_leaves_the_encoder_untouched() {
    let (cohort, config) = tiny_adpen();
    let (model, _) = train_adpen(&cohort, &config).unwrap();
    let before = model.vae.checksum();
    let (grid, log) = finetune_som(&model.vae, &model.grid, &cohort, &config).unwrap();
    assert_eq!(model.vae.checksum(), before);
    assert_ne!(grid.prototypes, model.grid.prototypes);
    assert!(log.topographic_error_after.is_finite());
}

fn estimator_fixture() -> (EstimatorData, ConsistencyCae, Topology) {
    let (cohort, config) = tiny_adpen();
    let (model, _) = train_adpen(&cohort, &config).unwrap();
    let latents = model.latents(&cohort).unwrap();
    let maps = pseudo_maps(&latents, &model.grid, Temperature::Variance).unwrap();
    let (cae, _) = pretrain_cae(&maps, &CaeConfig { hidden: 6, code_dim: 3, epochs: 5, ..CaeConfig::default() }).unwrap();
    let imaging = Tensor::from_rows(&cohort.samples().iter().map(|s| s.imaging.features.clone()).collect::<Vec<_>>()).unwrap();
    let targets = cohort.samples().iter().map(|s| TaskTarget::Class(s.record.stage)).collect();
    (EstimatorData::new(imaging, maps, targets).unwrap(), cae, config.topology)
}

#[test]
fn estimator_training_freezes_the_autoencoder_and_round_trips() {
    let (data, cae, topology) = estimator_fixture();
    let before = cae.checksum();
    let config = EstimatorConfig { epochs: 5, ..EstimatorConfig::default() };
    let train = data.subset(&(0..36).collect::<Vec<_>>());
    let val = data.subset(&(36..48).collect::<Vec<_>>());
    let kind = TaskKind::Classification { num_classes: 4 };
    let (stack, log) = train_estimator(&train, &val, &cae, topology, kind, &config).unwrap();
    assert_eq!(cae.checksum(), before);
    assert_eq!(log.epochs.len(), 5);

    let back: EstimatorStack = serde_json::from_str(&serde_json::to_string(&stack).unwrap()).unwrap();
    assert_eq!(back.checksum(), stack.checksum());
    let cae_back: ConsistencyCae = serde_json::from_str(&serde_json::to_string(&cae).unwrap()).unwrap();
    assert_eq!(cae_back, cae);
}

#[test]
fn stages_refuse_to_run_out_of_order() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let stage = |r: Result<_, HarnessError>| matches!(r, Err(HarnessError::Stage(_)));
    assert!(stage(train_estimator_stage(&config).map(|_| ())));
    assert!(stage(explain_stage(&config).map(|_| ())));

    generate_stage(&config).unwrap();
    train_adpen_stage(&config).unwrap();
    assert!(dir.path().join("adpen.json").exists());
    assert!(stage(explain_stage(&config).map(|_| ())));
    let metrics = train_estimator_stage(&config).unwrap();
    assert_eq!(metrics.len(), 3);
    let out = explain_stage(&config).unwrap();
    assert_eq!(out.sample, 0);
    for file in ["explainable_map.json", "morph_diff.csv", "estimated_map.json", "estimator_metrics.csv"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
}

#[test]
fn two_fold_pipeline_writes_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.folds, 2);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    for fold in 0..2 {
        let fold_dir = dir.path().join(format!("fold_{fold}"));
        for file in ["adpen.json", "cae.json", "estimator_cn_ad.json", "estimator_mmse_curve.csv"] {
            assert!(fold_dir.join(file).exists(), "fold {fold} {file}");
        }
    }
    let text = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    assert_eq!(MetricsReport::from_json(&text).unwrap(), report);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("task,metric,fold,value\n"));
    assert_eq!(report.tasks.iter().map(|t| t.task).collect::<Vec<_>>(), vec![Task::CnAd, Task::Stages, Task::Mmse]);
}

#[test]
fn config_overrides_and_rejections() {
    let env = |pairs: &[(&str, &str)]| pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Vec<_>>();
    let c = RunConfig::from_toml(SMALL_CONFIG, env(&[("PROTOMAP_ADPEN_EPOCHS", "7"), ("PROTOMAP_RUN_TASKS", "[\"mmse\"]"), ("HOME", "x")])).unwrap();
    assert_eq!(c.adpen.epochs, 7);
    assert_eq!(c.run.tasks, vec![Task::Mmse]);

    let bad = [
        RunConfig::from_toml("[adpen]\nepochz = 3\n", []),
        RunConfig::from_toml("[nonsense]\nx = 1\n", []),
        RunConfig::from_toml("[run]\nfolds = 1\n", []),
        RunConfig::from_toml("", env(&[("PROTOMAP_CAE_WIDTH", "3")])),
        RunConfig::from_toml("[adpen]\ntopology = [3, 4]\n[cae]\ncode_dim = 16\n", []),
    ];
    for r in bad {
        assert!(matches!(r, Err(HarnessError::Config(_))), "{r:?}");
    }
    let round = RunConfig::from_toml(&c.to_toml().unwrap(), []).unwrap();
    assert_eq!(round.adpen.epochs, 7);
}

#[test]
fn cli_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, format!("{SMALL_CONFIG}\n")).unwrap();
    let bin = env!("CARGO_BIN_EXE_protomap");
    let run = |sub: &str| {
        Command::new(bin)
            .args([sub, "--config", config.to_str().unwrap(), "--seed", "4"])
            .env("PROTOMAP_RUN_OUTPUT_DIR", dir.path().join("out"))
            .output()
            .unwrap()
    };
    let out = run("train-estimator");
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"]["kind"], "stage");

    let out = run("generate");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("out/cohort.ndjson").exists());

    std::fs::write(&config, "[run]\nbogus = 1\n").unwrap();
    let out = run("evaluate");
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}
