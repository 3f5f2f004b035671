mod common;

use proptest::prelude::*;
use protomap::adpen::{bmu_index, neighborhood_weights, PrototypeGrid, SomSchedule, Topology};
use protomap::autodiff::{Tape, Tensor};
use protomap::cohort::{denormalize_clinical, normalize_clinical, sample_ordering_pairs, stratified_kfold, ClinicalRecord};
use protomap::explain::percentile;
use protomap::harness::mean_std;
use protomap::likelihood::{minmax_normalize, pseudo_map, pseudo_probabilities, Temperature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-30.0f64..30.0, rows * cols).prop_map(move |v| Tensor::matrix(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_rows_are_distributions(x in (1usize..6, 1usize..8).prop_flat_map(|(r, c)| matrix(r, c))) {
        let mut tape = Tape::new();
        let v = tape.leaf(&x);
        let s = tape.softmax_rows(v);
        let ls = tape.log_softmax_rows(v);
        let (s, ls) = (tape.value(s).clone(), tape.value(ls).clone());
        for r in 0..x.rows() {
            let total: f64 = s.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|p| *p >= 0.0 && *p <= 1.0));
            for (p, lp) in s.row(r).iter().zip(ls.row(r)) {
                prop_assert!(lp.is_finite() && *lp <= 0.0);
                prop_assert!((lp.exp() - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn minmax_spans_the_unit_interval(v in prop::collection::vec(-5.0f64..5.0, 2..40)) {
        let out = minmax_normalize(&v);
        prop_assert_eq!(out.len(), v.len());
        let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 1e-6 {
            prop_assert!(out.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!(out.contains(&0.0));
            prop_assert!(out.iter().any(|x| (*x - 1.0).abs() < 1e-12));
            for i in 0..v.len() {
                for j in 0..v.len() {
                    if v[i] < v[j] { prop_assert!(out[i] <= out[j]); }
                }
            }
        }
    }

    #[test]
    fn folds_partition_and_stratify(
        labels in prop::collection::vec(0usize..4, 8..120),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!((0..4).all(|c| labels.iter().filter(|&&l| l == c).count() >= k || !labels.contains(&c)));
        let splits = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(splits.len(), k);
        let mut seen = vec![0usize; labels.len()];
        for s in &splits {
            for &i in &s.test { seen[i] += 1; }
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for c in 0..4 {
                let total = labels.iter().filter(|&&l| l == c).count() as f64;
                let here = s.test.iter().filter(|&&i| labels[i] == c).count() as f64;
                prop_assert!((here - total / k as f64).abs() < 1.0 + 1e-9);
            }
        }
        prop_assert!(seen.iter().all(|&n| n == 1));
        prop_assert_eq!(stratified_kfold(&labels, k, seed).unwrap(), splits);
    }

    #[test]
    fn clinical_normalization_round_trips(stage in 0usize..4, mmse in 0u8..=30, age in 40.0f64..100.0) {
        let record = ClinicalRecord::new(stage, mmse, age, 4).unwrap();
        let c = normalize_clinical(&record, 4).unwrap();
        prop_assert!(c.values().iter().all(|x| (0.0..=1.0).contains(x)));
        let back = denormalize_clinical(&c).unwrap();
        prop_assert_eq!(back.stage, stage);
        prop_assert_eq!(back.mmse, mmse);
        prop_assert!((back.age_years - age).abs() < 1e-12);
    }

    #[test]
    fn pseudo_map_peaks_at_the_bmu(
        protos in matrix(12, 3),
        h in prop::collection::vec(-30.0f64..30.0, 3),
        fixed in prop::option::of(0.05f64..50.0),
    ) {
        let grid = PrototypeGrid::new(protos, Topology::Grid2d { rows: 3, cols: 4 }).unwrap();
        let policy = fixed.map_or(Temperature::Variance, |gamma| Temperature::Fixed { gamma });
        let p = pseudo_probabilities(&h, &grid, policy);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let map = pseudo_map(&h, &grid, policy).unwrap();
        let bmu = bmu_index(&h, &grid);
        let top = map.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(map.values()[bmu], top);
    }

    #[test]
    fn neighbourhood_weights_decay_with_distance(gamma in 0.1f64..10.0, d in prop::collection::vec(0.0f64..20.0, 1..20)) {
        let w = neighborhood_weights(&d, gamma).unwrap();
        for i in 0..d.len() {
            prop_assert!(w[i] > 0.0 && w[i] <= 1.0);
            for j in 0..d.len() {
                if d[i] < d[j] { prop_assert!(w[i] >= w[j]); }
            }
        }
    }

    #[test]
    fn schedule_is_monotone(gmax in 0.6f64..20.0, ratio in 0.01f64..1.0, steps in 1u64..5000) {
        let gmin = gmax * ratio;
        let s = SomSchedule::new(gmax, gmin, steps).unwrap();
        let mut last = f64::INFINITY;
        for t in (0..=steps).step_by((steps as usize / 50).max(1)) {
            let r = s.radius_at(t);
            prop_assert!(r <= last && r >= gmin * (1.0 - 1e-12) && r <= gmax * (1.0 + 1e-12));
            last = r;
        }
    }

    #[test]
    fn ordering_pairs_step_one_stage(stages in prop::collection::vec(0usize..4, 0..60), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in sample_ordering_pairs(&stages, 4, &mut rng) {
            prop_assert_eq!(stages[p.partner], stages[p.anchor] + 1);
        }
    }

    #[test]
    fn percentile_is_bounded(v in prop::collection::vec(-10.0f64..10.0, 1..50), q in 0.0f64..=100.0) {
        let p = percentile(&v, q);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo && p <= hi);
        prop_assert_eq!(percentile(&v, 0.0), lo);
        prop_assert_eq!(percentile(&v, 100.0), hi);
    }

    #[test]
    fn mean_std_matches_definition(v in prop::collection::vec(-100.0f64..100.0, 1..30)) {
        let (m, s) = mean_std(&v).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        prop_assert!((m - mean).abs() < 1e-9);
        prop_assert!((s * s - v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).abs() < 1e-6);
    }
}
