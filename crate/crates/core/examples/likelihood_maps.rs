// Pseudo maps from clinical latents, a consistency autoencoder over them and
// an imaging-side estimator trained against both.

use protomap::adpen::{bmu_index, finetune_som, train_adpen, AdpenConfig, Topology};
use protomap::autodiff::Tensor;
use protomap::cohort::{generate_cohort, SyntheticSpec};
use protomap::likelihood::{
    pretrain_cae, pseudo_map, pseudo_maps, train_estimator, CaeConfig, EstimatorConfig, EstimatorData, TaskKind,
    TaskTarget, Temperature,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = generate_cohort(&SyntheticSpec {
        stage_counts: vec![25; 4],
        imaging_noise: 0.0,
        ..SyntheticSpec::default()
    })?;
    let adpen = AdpenConfig {
        topology: Topology::Grid2d { rows: 4, cols: 5 },
        epochs: 100,
        finetune_epochs: 50,
        ..AdpenConfig::default()
    };
    let (mut model, _) = train_adpen(&cohort, &adpen)?;
    model.grid = finetune_som(&model.vae, &model.grid, &cohort, &adpen)?.0;

    let latents = model.latents(&cohort)?;
    let rho = pseudo_map(latents.row(0), &model.grid, Temperature::Variance)?;
    assert_eq!(rho.argmax(), bmu_index(latents.row(0), &model.grid));
    println!("sample 0 peaks at prototype {} of {}", rho.argmax(), rho.len());

    let maps = pseudo_maps(&latents, &model.grid, Temperature::Variance)?;
    let (cae, curve) = pretrain_cae(&maps, &CaeConfig { code_dim: 8, epochs: 100, ..CaeConfig::default() })?;
    println!("CAE reconstruction {:.3} -> {:.3}", curve[0], curve[curve.len() - 1]);

    let imaging = Tensor::from_rows(&cohort.samples().iter().map(|s| s.imaging.features.clone()).collect::<Vec<_>>())?;
    let targets = cohort.samples().iter().map(|s| TaskTarget::Class(s.record.stage)).collect();
    let data = EstimatorData::new(imaging, maps, targets)?;
    let (train, validation) = (data.subset(&(0..80).collect::<Vec<_>>()), data.subset(&(80..100).collect::<Vec<_>>()));
    let config = EstimatorConfig {
        epochs: 40,
        learning_rate: Some(1e-3),
        ..EstimatorConfig::default()
    };
    let kind = TaskKind::Classification { num_classes: 4 };
    let (stack, log) = train_estimator(&train, &validation, &cae, model.grid.topology, kind, &config)?;
    let est = stack.estimate(&validation.imaging)?;
    let mae = est.values().iter().zip(validation.maps.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() / est.len() as f64;
    println!("best epoch {}, validation map MAE {mae:.3}", log.best_epoch);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
