mod autodiff_basics {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/autodiff_basics.rs"));
}

mod synthetic_cohort {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/synthetic_cohort.rs"));
}

mod prototype_training {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/prototype_training.rs"));
}

mod likelihood_maps {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/likelihood_maps.rs"));
}

mod explain_prototypes {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/explain_prototypes.rs"));
}

mod metrics {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/metrics.rs"));
}

mod cross_validation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cross_validation.rs"));
}

#[test]
fn autodiff_basics_example_runs() {
    autodiff_basics::run_example().expect("autodiff_basics example should run");
}

#[test]
fn synthetic_cohort_example_runs() {
    synthetic_cohort::run_example().expect("synthetic_cohort example should run");
}

#[test]
fn prototype_training_example_runs() {
    prototype_training::run_example().expect("prototype_training example should run");
}

#[test]
fn likelihood_maps_example_runs() {
    likelihood_maps::run_example().expect("likelihood_maps example should run");
}

#[test]
fn explain_prototypes_example_runs() {
    explain_prototypes::run_example().expect("explain_prototypes example should run");
}

#[test]
fn metrics_example_runs() {
    metrics::run_example().expect("metrics example should run");
}

#[test]
fn cross_validation_example_runs() {
    cross_validation::run_example().expect("cross_validation example should run");
}
