use protomap::adpen::{bmu_index, kl_divergence, two_nearest};
use protomap::explain::{retrieve_nearest_samples, select_stage_representatives, PrototypicalState};
use protomap::harness::{balanced_accuracy, f1_weighted, rmse_r2, roc_auc_binary, roc_auc_ovr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

/// Worst relative gap between the closed-form KL and a Monte-Carlo estimate
/// of `E_q[log q(z) − log p(z)]` with `samples` antithetic draws, over
/// `pairs` random diagonal Gaussians.
pub fn kl_monte_carlo(pairs: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let dim = rng.random_range(1..=4);
        let mu: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let log_var: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let closed = kl_divergence(&mu, &log_var);

        let mut total = 0.0;
        for _ in 0..samples / 2 {
            let eps: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for sign in [1.0, -1.0] {
                let mut log_ratio = 0.0;
                for i in 0..dim {
                    let sd = (0.5 * log_var[i]).exp();
                    let z = mu[i] + sign * sd * eps[i];
                    let log_q = -0.5 * (ln_2pi + log_var[i] + (z - mu[i]).powi(2) / sd.powi(2));
                    let log_p = -0.5 * (ln_2pi + z * z);
                    log_ratio += log_q - log_p;
                }
                total += log_ratio;
            }
        }
        let estimate = total / (2 * (samples / 2)) as f64;
        worst = worst.max((estimate - closed).abs() / closed);
    }
    worst
}

fn random_states<R: Rng>(rng: &mut R, k: usize, stages: usize) -> Vec<PrototypicalState> {
    (0..k)
        .map(|_| {
            // Coarse values force probability and age ties.
            let raw: Vec<f64> = (0..stages).map(|_| rng.random_range(1..=4) as f64).collect();
            let total: f64 = raw.iter().sum();
            PrototypicalState {
                stage_probs: raw.iter().map(|r| r / total).collect(),
                score: rng.random_range(0.0..1.0),
                age: rng.random_range(50..=90) as f64 / 100.0,
            }
        })
        .collect()
}

fn brute_stage_selection(states: &[PrototypicalState], stages: usize, age: f64, per_stage: usize) -> Vec<Vec<usize>> {
    (0..stages)
        .map(|stage| {
            let members: Vec<usize> = (0..states.len())
                .filter(|&k| {
                    let p = &states[k].stage_probs;
                    (0..p.len()).all(|j| p[stage] > p[j] || (p[stage] == p[j] && stage <= j))
                })
                .collect();
            let mut chosen: Vec<usize> = Vec::new();
            for _ in 0..per_stage.min(members.len()) {
                let mut best: Option<usize> = None;
                for &k in &members {
                    if chosen.contains(&k) {
                        continue;
                    }
                    let gap = (states[k].age_years() - age).abs();
                    if best.is_none_or(|b| gap < (states[b].age_years() - age).abs()) {
                        best = Some(k);
                    }
                }
                chosen.push(best.unwrap());
            }
            chosen
        })
        .collect()
}

/// Counts disagreements of BMU, two-nearest, top-3 retrieval and stage
/// selection with exhaustive scans over `instances` random grids.
pub fn retrieval_mismatches(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let topology = random_topology(&mut rng, 100);
        let grid = random_grid(&mut rng, topology, 3);
        let protos = grid.prototypes.clone();
        let n = rng.random_range(3..40);
        let latents = lattice_points(&mut rng, n, 3);

        for r in 0..n {
            let h = latents.row(r);
            if bmu_index(h, &grid) != brute_bmu(h, &grid) {
                mismatches += 1;
            }
            let (a, b) = two_nearest(h, &grid);
            if vec![a, b] != brute_nearest(&protos, h, 2) {
                mismatches += 1;
            }
        }

        let imaging = random_tensor(&mut rng, n, 4, -1.0, 1.0);
        let set = retrieve_nearest_samples(&grid, &latents, &imaging, 3).unwrap();
        for (k, entry) in set.prototypes.iter().enumerate() {
            let expected = brute_nearest(&latents, grid.prototype(k), 3);
            let mean: Vec<f64> = (0..4)
                .map(|j| expected.iter().map(|&i| imaging.row(i)[j]).sum::<f64>() / expected.len() as f64)
                .collect();
            let mean_ok = entry.mean.iter().zip(&mean).all(|(a, b)| (a - b).abs() < 1e-12);
            if entry.prototype != k || entry.sample_ids != expected || !mean_ok {
                mismatches += 1;
            }
        }

        let states = random_states(&mut rng, grid.len(), 4);
        let age = rng.random_range(50..=90) as f64;
        let selection = select_stage_representatives(&states, 4, age, 3).unwrap();
        let expected = brute_stage_selection(&states, 4, age, 3);
        for (s, sel) in selection.iter().enumerate() {
            if sel.stage != s || sel.prototypes != expected[s] {
                mismatches += 1;
            }
        }
    }
    mismatches
}

/// Largest absolute gap between the library metrics and brute-force
/// references over `cases` random small problems.
pub fn metric_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut track = |a: f64, b: f64| worst = worst.max((a - b).abs());
    for _ in 0..cases {
        let classes = rng.random_range(2..=4);
        let n = rng.random_range(classes * 2..=20);
        // Every class present, then the rest at random.
        let mut labels: Vec<usize> = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        track(balanced_accuracy(&pred, &labels, classes).unwrap(), brute_balanced_accuracy(&pred, &labels, classes));
        track(f1_weighted(&pred, &labels, classes).unwrap(), brute_f1_weighted(&pred, &labels, classes));

        // Coarse scores force ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
        track(roc_auc_binary(&scores, &positive).unwrap(), brute_auc(&scores, &positive));

        let probs: Vec<Vec<f64>> = (0..n).map(|_| (0..classes).map(|_| rng.random_range(0..6) as f64 / 5.0).collect()).collect();
        let ovr = (0..classes)
            .map(|c| {
                let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
                let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                brute_auc(&s, &pos)
            })
            .sum::<f64>()
            / classes as f64;
        track(roc_auc_ovr(&probs, &labels, classes).unwrap(), ovr);

        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let preds: Vec<f64> = targets.iter().map(|t| t + rng.random_range(-1.0..1.0)).collect();
        let (rmse, r2) = rmse_r2(&preds, &targets).unwrap();
        let (brmse, br2) = brute_rmse_r2(&preds, &targets);
        track(rmse, brmse);
        track(r2, br2);
    }
    worst
}
