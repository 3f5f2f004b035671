#![allow(dead_code)]

pub mod cases;
pub mod oracle_runs;

use protomap::adpen::{PrototypeGrid, Topology};
use protomap::autodiff::{AutodiffError, Parameterized, Tape, Tensor, Var};
use rand::Rng;

pub const FD_EPS: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, with random sign.
pub fn signed_away_from_zero<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let values = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.2..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::matrix(rows, cols, values).unwrap()
}

type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError> + 'a;

/// Largest relative error between the tape gradient of a scalar built from
/// `inputs` and central differences with step [`FD_EPS`].
pub fn check_inputs(inputs: &[Tensor], build: &Build<'_>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let eval = |values: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t)).collect();
        let loss = build(&mut tape, &vars).unwrap();
        tape.scalar(loss)
    };
    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x = inputs[i].values()[j];
            work[i].values_mut()[j] = x + FD_EPS;
            let up = eval(&work);
            work[i].values_mut()[j] = x - FD_EPS;
            let down = eval(&work);
            work[i].values_mut()[j] = x;
            let numeric = (up - down) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[i].values()[j], numeric));
        }
    }
    worst
}

/// Same check against every parameter of `model`. `build` records the loss
/// and returns it with the parameter variables in `parameters()` order.
pub fn check_parameters<M, F>(model: &M, build: F) -> f64
where
    M: Parameterized + Clone,
    F: Fn(&M, &mut Tape) -> (Var, Vec<Var>),
{
    let mut tape = Tape::new();
    let (loss, vars) = build(model, &mut tape);
    let grads = tape.backward(loss).unwrap();
    let params = model.parameters();
    assert_eq!(vars.len(), params.len());
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
    let eval = |m: &M| -> f64 {
        let mut tape = Tape::new();
        let (loss, _) = build(m, &mut tape);
        tape.scalar(loss)
    };
    let mut worst: f64 = 0.0;
    let mut work = model.clone();
    for (i, (_, p)) in params.iter().enumerate() {
        for j in 0..p.len() {
            let x = p.values()[j];
            work.parameters_mut()[i].1.values_mut()[j] = x + FD_EPS;
            let up = eval(&work);
            work.parameters_mut()[i].1.values_mut()[j] = x - FD_EPS;
            let down = eval(&work);
            work.parameters_mut()[i].1.values_mut()[j] = x;
            let numeric = (up - down) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(analytic[i].values()[j], numeric));
        }
    }
    worst
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output entry gets a
/// distinct upstream gradient.
pub fn project(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var, AutodiffError> {
    let r = tape.leaf(weights);
    let m = tape.mul(out, r)?;
    Ok(tape.sum(m))
}

pub fn random_topology<R: Rng>(rng: &mut R, max_units: usize) -> Topology {
    loop {
        let t = match rng.random_range(0..3) {
            0 => Topology::Chain { len: rng.random_range(2..=max_units) },
            1 => Topology::Grid2d {
                rows: rng.random_range(1..=10),
                cols: rng.random_range(2..=10),
            },
            _ => Topology::Grid3d {
                depth: rng.random_range(1..=4),
                rows: rng.random_range(1..=5),
                cols: rng.random_range(2..=5),
            },
        };
        if t.size() <= max_units {
            return t;
        }
    }
}

/// Coordinates drawn from a small lattice so exact distance ties occur.
pub fn random_grid<R: Rng>(rng: &mut R, topology: Topology, dim: usize) -> PrototypeGrid {
    let k = topology.size();
    let values = (0..k * dim).map(|_| rng.random_range(-4..=4) as f64 * 0.25).collect();
    PrototypeGrid::new(Tensor::matrix(k, dim, values).unwrap(), topology).unwrap()
}

pub fn lattice_points<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Tensor {
    Tensor::matrix(n, dim, (0..n * dim).map(|_| rng.random_range(-4..=4) as f64 * 0.25).collect()).unwrap()
}

// Brute-force references.

pub fn brute_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

/// Lowest index among the minimal distances.
pub fn brute_bmu(h: &[f64], grid: &PrototypeGrid) -> usize {
    let mut best = 0;
    for k in 1..grid.len() {
        if brute_sq_dist(h, grid.prototype(k)) < brute_sq_dist(h, grid.prototype(best)) {
            best = k;
        }
    }
    best
}

/// The `n` nearest rows of `points` to `p`, nearest first, lower index on ties.
pub fn brute_nearest(points: &Tensor, p: &[f64], n: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..n.min(points.rows()) {
        let mut best: Option<usize> = None;
        for i in 0..points.rows() {
            if chosen.contains(&i) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => brute_sq_dist(points.row(i), p) < brute_sq_dist(points.row(b), p),
            };
            if better {
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
}

pub fn brute_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn brute_balanced_accuracy(pred: &[usize], labels: &[usize], classes: usize) -> f64 {
    let mut sum = 0.0;
    for c in 0..classes {
        let support = labels.iter().filter(|&&l| l == c).count() as f64;
        let hit = pred.iter().zip(labels).filter(|(&p, &l)| l == c && p == c).count() as f64;
        sum += hit / support;
    }
    sum / classes as f64
}

pub fn brute_f1_weighted(pred: &[usize], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let tp = pred.iter().zip(labels).filter(|(&p, &l)| p == c && l == c).count() as f64;
        let fp = pred.iter().zip(labels).filter(|(&p, &l)| p == c && l != c).count() as f64;
        let fneg = pred.iter().zip(labels).filter(|(&p, &l)| p != c && l == c).count() as f64;
        let f1 = if tp == 0.0 {
            0.0
        } else {
            let precision = tp / (tp + fp);
            let recall = tp / (tp + fneg);
            2.0 * precision * recall / (precision + recall)
        };
        total += f1 * (tp + fneg);
    }
    total / labels.len() as f64
}

pub fn brute_rmse_r2(pred: &[f64], targets: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..targets.len() {
        ss_res += (pred[i] - targets[i]).powi(2);
        ss_tot += (targets[i] - mean).powi(2);
    }
    ((ss_res / n).sqrt(), 1.0 - ss_res / ss_tot)
}

/// Spearman correlation via Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// A fast end-to-end configuration over a 40-sample cohort.
pub const SMALL_CONFIG: &str = r#"
[run]
seed = 3
folds = 2
tasks = ["cn_ad", "stages", "mmse"]

[cohort]
stage_counts = [10, 10, 10, 10]
feature_dim = 16

[adpen]
topology = [3, 4]
epochs = 30
finetune_epochs = 10

[cae]
code_dim = 4
epochs = 10

[estimator]
epochs = 15
"#;

pub fn small_config(output_dir: &std::path::Path) -> protomap::harness::RunConfig {
    let env = [("PROTOMAP_RUN_OUTPUT_DIR".to_string(), output_dir.display().to_string())];
    protomap::harness::RunConfig::from_toml(SMALL_CONFIG, env).unwrap()
}
