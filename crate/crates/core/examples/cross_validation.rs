// Two-fold cross-validation of the whole pipeline from a TOML config, with
// an environment-style override.

use protomap::harness::{run_pipeline, Metric, RunConfig, Task};

const CONFIG: &str = r#"
[run]
seed = 1
folds = 2
tasks = ["cn_ad", "stages", "mmse"]

[cohort]
stage_counts = [20, 20, 20, 20]

[adpen]
topology = [3, 5]
epochs = 60
finetune_epochs = 30

[cae]
code_dim = 6
epochs = 40

[estimator]
epochs = 100
classification_learning_rate = 2e-3
regression_learning_rate = 1e-2
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join(format!("protomap-cv-{}", std::process::id()));
    let env = vec![("PROTOMAP_RUN_OUTPUT_DIR".to_string(), out.display().to_string())];
    let config = RunConfig::from_toml(CONFIG, env)?;
    let report = run_pipeline(&config)?;
    for task in [Task::CnAd, Task::Stages] {
        let s = report.series(task, Metric::BalancedAccuracy).ok_or("missing metric")?;
        println!("{task}: balanced accuracy per fold {:?}", s.per_fold);
    }
    println!("mmse R² {:?}", report.mean(Task::Mmse, Metric::R2));
    println!("failures: {}", report.failures.len());
    print!("{}", std::fs::read_to_string(out.join("metrics.csv"))?.lines().take(4).map(|l| format!("{l}\n")).collect::<String>());
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
