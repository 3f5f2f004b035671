// Train ADPEN on a small cohort: VAE, ordering head and a 4×6 prototype
// grid, then fine-tune the grid and save a checkpoint.

use protomap::adpen::{
    finetune_som, quantization_error, topographic_error, train_adpen, AdpenCheckpoint, AdpenConfig,
    Topology,
};
use protomap::cohort::{generate_cohort, SyntheticSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = generate_cohort(&SyntheticSpec {
        stage_counts: vec![30; 4],
        ..SyntheticSpec::default()
    })?;
    let config = AdpenConfig {
        topology: Topology::Grid2d { rows: 4, cols: 6 },
        epochs: 150,
        finetune_epochs: 100,
        ..AdpenConfig::default()
    };
    let (mut model, log) = train_adpen(&cohort, &config)?;
    let (grid, finetune) = finetune_som(&model.vae, &model.grid, &cohort, &config)?;
    model.grid = grid;

    let latents = model.latents(&cohort)?;
    let last = log.epochs.last().ok_or("no epochs")?;
    println!("joint loss {:.3} (vae {:.3}, ordering {:.3}, som {:.4})", last.total, last.vae, last.ordering, last.som);
    println!(
        "QE {:.4}, TE {:.3} -> {:.3}",
        quantization_error(&latents, &model.grid),
        finetune.topographic_error_before,
        topographic_error(&latents, &model.grid)
    );

    let per_stage: Vec<f64> = (0..4)
        .map(|stage| {
            let rows: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.samples()[i].record.stage == stage).collect();
            rows.iter().map(|&i| model.head.project(latents.row(i))).sum::<f64>() / rows.len() as f64
        })
        .collect();
    println!("mean ordering projection per stage {per_stage:.3?}");

    let ckpt = AdpenCheckpoint::new(model, &config);
    let back = AdpenCheckpoint::from_json(&ckpt.to_json()?)?;
    assert_eq!(back.model.latents(&cohort)?, latents);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
