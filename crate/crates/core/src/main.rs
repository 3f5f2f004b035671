use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use protomap::harness::{
    explain_stage, generate_stage, run_pipeline, train_adpen_stage, train_estimator_stage,
    HarnessError, RunConfig,
};

#[derive(Parser)]
#[command(name = "protomap", version, about = "Prototype maps over a clinical spectrum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort; `--seed` sets the cohort seed.
    Generate(Common),
    /// Train ADPEN, fine-tune its grid and pretrain the consistency autoencoder.
    TrainAdpen(Common),
    /// Train one estimator per task on the configured split.
    TrainEstimator(Common),
    /// Cross-validate the full pipeline.
    Evaluate(Common),
    /// Explain one held-out sample.
    Explain(Common),
}

fn load(common: &Common, cohort_seed: bool) -> Result<RunConfig, HarnessError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        if cohort_seed {
            config.cohort.seed = seed;
        } else {
            config.run.seed = seed;
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<serde_json::Value, HarnessError> {
    let to_value = |v: Result<serde_json::Value, serde_json::Error>| {
        v.map_err(|e| HarnessError::Config(e.to_string()))
    };
    match cli.command {
        Command::Generate(c) => {
            let path = generate_stage(&load(&c, true)?)?;
            Ok(serde_json::json!({ "cohort": path }))
        }
        Command::TrainAdpen(c) => {
            let config = load(&c, false)?;
            train_adpen_stage(&config)?;
            Ok(serde_json::json!({ "output_dir": config.run.output_dir }))
        }
        Command::TrainEstimator(c) => to_value(serde_json::to_value(train_estimator_stage(&load(&c, false)?)?)),
        Command::Evaluate(c) => {
            let report = run_pipeline(&load(&c, false)?)?;
            if !report.failures.is_empty() {
                return Err(HarnessError::Folds(report.failures));
            }
            to_value(serde_json::to_value(report))
        }
        Command::Explain(c) => {
            let out = explain_stage(&load(&c, false)?)?;
            Ok(serde_json::json!({
                "sample": out.sample,
                "peak": out.explainable.peak(),
                "morph_threshold": out.morph.threshold,
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
