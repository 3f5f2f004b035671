// Generate a seeded four-stage cohort, split it and write it as NDJSON.

use protomap::cohort::{generate_cohort, sample_ordering_pairs, Cohort, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        stage_counts: vec![20; 4],
        ..SyntheticSpec::default()
    };
    let cohort = generate_cohort(&spec)?;
    println!("{} samples, {} imaging features, stages {:?}", cohort.len(), cohort.feature_dim(), cohort.stage_counts());

    let first = &cohort.samples()[0];
    println!(
        "stage {} mmse {} age {:.1} -> c = {:?}",
        first.record.stage,
        first.record.mmse,
        first.record.age_years,
        first.clinical.values()
    );

    for (i, split) in cohort.stratified_kfold(5, 0)?.iter().enumerate() {
        println!("fold {i}: train {} validation {} test {}", split.train.len(), split.validation.len(), split.test.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<usize> = cohort.stages().into_iter().step_by(7).collect();
    let pairs = sample_ordering_pairs(&batch, 4, &mut rng);
    println!("{} ordering pairs in a batch with stages {batch:?}", pairs.len());

    let mut ndjson = Vec::new();
    cohort.write_ndjson(&mut ndjson)?;
    let back = Cohort::read_ndjson(ndjson.as_slice(), 4)?;
    assert_eq!(back, cohort);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
