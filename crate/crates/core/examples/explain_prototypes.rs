// Read a trained grid in clinical terms: decoded prototype states, a
// clinical explainable map, prototypical samples and difference maps.

use protomap::adpen::{finetune_som, train_adpen, AdpenConfig, Topology};
use protomap::autodiff::Tensor;
use protomap::cohort::{generate_cohort, SyntheticSpec};
use protomap::explain::{
    build_clinical_map, decode_prototypes, morph_difference, retrieve_nearest_samples, select_stage_representatives,
};
use protomap::likelihood::{pseudo_map, Temperature};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = generate_cohort(&SyntheticSpec {
        stage_counts: vec![25; 4],
        ..SyntheticSpec::default()
    })?;
    let config = AdpenConfig {
        topology: Topology::Grid2d { rows: 3, cols: 6 },
        epochs: 400,
        finetune_epochs: 100,
        ..AdpenConfig::default()
    };
    let (mut model, _) = train_adpen(&cohort, &config)?;
    model.grid = finetune_som(&model.vae, &model.grid, &cohort, &config)?.0;

    let states = decode_prototypes(&model.vae, &model.grid)?;
    for (k, s) in states.iter().enumerate().take(4) {
        println!("prototype {k}: stage {} mmse {:.1} age {:.1}", s.stage(), s.mmse(), s.age_years());
    }

    let latents = model.latents(&cohort)?;
    let query = &cohort.samples()[0];
    let rho = pseudo_map(latents.row(0), &model.grid, Temperature::Variance)?;
    let map = build_clinical_map(&rho, &states)?;
    let peak = &map.entries[map.peak()];
    println!("query (stage {}) peaks at a prototype with mmse {:.1}", query.record.stage, peak.mmse);

    let imaging = Tensor::from_rows(&cohort.samples().iter().map(|s| s.imaging.features.clone()).collect::<Vec<_>>())?;
    let samples = retrieve_nearest_samples(&model.grid, &latents, &imaging, 3)?;
    let selection = select_stage_representatives(&states, 4, query.record.age_years, 3)?;
    let refs: Vec<(usize, &[f64])> = selection
        .iter()
        .flat_map(|s| &s.prototypes)
        .map(|&k| (k, samples.prototypes[k].mean.as_slice()))
        .collect();
    let diff = morph_difference(&query.imaging.features, &refs, None)?;
    println!("{} difference rows above threshold {:.3}", diff.rows.len(), diff.threshold);
    print!("{}", diff.to_csv().lines().take(2).map(|l| format!("{:.60}\n", l)).collect::<String>());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
