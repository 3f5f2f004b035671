use protomap::adpen::{
    ordering_loss_tape, som_loss_tape, OrderingConfig, OrderingForm, OrderingHead, PrototypeGrid, Topology, VaeConfig,
    VaeModel,
};
use protomap::autodiff::{Activation, DenseLayer, Mlp, Parameterized, Tape, Tensor, Var};
use protomap::cohort::OrderingPair;
use protomap::likelihood::{
    pretrain_cae, total_loss_tape, CaeConfig, EstimatorStack, LossWeights, StackWidths, TaskKind, TaskTarget,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, check_parameters, project, random_tensor, signed_away_from_zero};

pub struct GradCase {
    pub name: String,
    pub max_rel_err: f64,
}

fn unary(
    out: &mut Vec<GradCase>,
    name: &str,
    seeds: u64,
    input: impl Fn(&mut ChaCha8Rng) -> Tensor,
    op: impl Fn(&mut Tape, Var) -> Var,
) {
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = input(&mut rng);
        let shape = {
            let mut t = Tape::new();
            let v = t.leaf(&x);
            let y = op(&mut t, v);
            let value = t.value(y);
            (value.rows(), value.cols())
        };
        let r = random_tensor(&mut rng, shape.0, shape.1, -1.0, 1.0);
        let err = check_inputs(&[x], &|t, v| {
            let y = op(t, v[0]);
            project(t, y, &r)
        });
        out.push(GradCase { name: format!("{name}/{seed}"), max_rel_err: err });
    }
}

fn ops(out: &mut Vec<GradCase>) {
    let plain = |rng: &mut ChaCha8Rng| random_tensor(rng, 3, 4, -1.5, 1.5);
    let positive = |rng: &mut ChaCha8Rng| random_tensor(rng, 3, 4, 0.2, 2.0);
    let signed = |rng: &mut ChaCha8Rng| signed_away_from_zero(rng, 3, 4);
    unary(out, "scale", 3, plain, |t, x| t.scale(x, -1.7));
    unary(out, "offset", 2, plain, |t, x| t.offset(x, 0.3));
    unary(out, "relu", 3, signed, |t, x| t.relu(x));
    unary(out, "sigmoid", 3, plain, |t, x| t.sigmoid(x));
    unary(out, "exp", 3, plain, |t, x| t.exp(x));
    unary(out, "ln", 3, positive, |t, x| t.ln(x));
    unary(out, "sqrt", 3, positive, |t, x| t.sqrt(x));
    unary(out, "abs", 3, signed, |t, x| t.abs(x));
    unary(out, "square", 3, plain, |t, x| t.square(x));
    unary(out, "softmax_rows", 3, plain, |t, x| t.softmax_rows(x));
    unary(out, "log_softmax_rows", 3, plain, |t, x| t.log_softmax_rows(x));
    unary(out, "slice_cols", 2, plain, |t, x| t.slice_cols(x, 1, 3).unwrap());
    unary(out, "gather_rows", 2, plain, |t, x| t.gather_rows(x, &[2, 0, 2, 1]).unwrap());
    unary(out, "sum_cols", 2, plain, |t, x| t.sum_cols(x));
    for seed in 0..2 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random_tensor(&mut rng, 3, 4, -1.0, 1.0);
        let err = check_inputs(&[x], &|t, v| Ok(t.sum(v[0])));
        out.push(GradCase { name: format!("sum/{seed}"), max_rel_err: err });
    }

    type Binary = fn(&mut Tape, Var, Var) -> Var;
    let binaries: [(&str, Binary, bool); 5] = [
        ("add", |t, a, b| t.add(a, b).unwrap(), false),
        ("sub", |t, a, b| t.sub(a, b).unwrap(), false),
        ("mul", |t, a, b| t.mul(a, b).unwrap(), false),
        ("div", |t, a, b| t.div(a, b).unwrap(), true),
        ("concat_cols", |t, a, b| t.concat_cols(&[a, b]).unwrap(), false),
    ];
    for (name, op, denominator) in binaries {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let a = random_tensor(&mut rng, 3, 4, -1.5, 1.5);
            let b = if denominator { signed_away_from_zero(&mut rng, 3, 4) } else { random_tensor(&mut rng, 3, 4, -1.5, 1.5) };
            let width = if name == "concat_cols" { 8 } else { 4 };
            let r = random_tensor(&mut rng, 3, width, -1.0, 1.0);
            let err = check_inputs(&[a, b], &|t, v| {
                let y = op(t, v[0], v[1]);
                project(t, y, &r)
            });
            out.push(GradCase { name: format!("{name}/{seed}"), max_rel_err: err });
        }
    }

    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = random_tensor(&mut rng, 3, 4, -1.0, 1.0);
        let w = random_tensor(&mut rng, 5, 4, -1.0, 1.0);
        let row = random_tensor(&mut rng, 1, 5, -1.0, 1.0);
        let r = random_tensor(&mut rng, 3, 5, -1.0, 1.0);
        let err = check_inputs(&[x, w, row], &|t, v| {
            let y = t.matmul_t(v[0], v[1])?;
            let y = t.add_row(y, v[2])?;
            project(t, y, &r)
        });
        out.push(GradCase { name: format!("matmul_t+add_row/{seed}"), max_rel_err: err });

        let a = random_tensor(&mut rng, 3, 2, -1.0, 1.0);
        let b = random_tensor(&mut rng, 4, 2, -1.0, 1.0);
        let r = random_tensor(&mut rng, 3, 4, -1.0, 1.0);
        let err = check_inputs(&[a, b], &|t, v| {
            let d = t.pairwise_sq_dist(v[0], v[1])?;
            project(t, d, &r)
        });
        out.push(GradCase { name: format!("pairwise_sq_dist/{seed}"), max_rel_err: err });
    }
}

fn layers(out: &mut Vec<GradCase>) {
    let activations = [
        ("identity", Activation::Identity),
        ("relu", Activation::Relu),
        ("sigmoid", Activation::Sigmoid),
        ("softmax", Activation::Softmax),
    ];
    for (name, act) in activations {
        for seed in 0..2 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let layer = DenseLayer::new(4, 3, act, &mut rng);
            let x = random_tensor(&mut rng, 5, 4, -1.0, 1.0);
            let r = random_tensor(&mut rng, 5, 3, -1.0, 1.0);
            let err = check_parameters(&layer, |l, t| {
                let bound = l.bind(t);
                let xv = t.leaf(&x);
                let y = protomap::autodiff::affine_forward(t, &bound, xv).unwrap();
                (project(t, y, &r).unwrap(), bound.vars().to_vec())
            });
            out.push(GradCase { name: format!("dense_{name}/{seed}"), max_rel_err: err });
        }
    }
    for seed in 0..2 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let mlp = Mlp::new(&[4, 6, 5, 2], Activation::Relu, Activation::Sigmoid, &mut rng);
        let x = random_tensor(&mut rng, 6, 4, -1.0, 1.0);
        let r = random_tensor(&mut rng, 6, 2, -1.0, 1.0);
        let err = check_parameters(&mlp, |m, t| {
            let bound = m.bind(t);
            let xv = t.leaf(&x);
            let y = bound.forward(t, xv).unwrap();
            (project(t, y, &r).unwrap(), bound.vars())
        });
        out.push(GradCase { name: format!("mlp/{seed}"), max_rel_err: err });
    }
}

fn clinical_batch(rng: &mut ChaCha8Rng, n: usize, stages: usize) -> Tensor {
    let mut rows = Vec::new();
    for _ in 0..n {
        let mut row = vec![0.0; stages + 2];
        row[rng.random_range(0..stages)] = 1.0;
        row[stages] = rng.random_range(0.0..1.0);
        row[stages + 1] = rng.random_range(0.0..1.0);
        rows.push(row);
    }
    Tensor::from_rows(&rows).unwrap()
}

fn adpen_terms(out: &mut Vec<GradCase>) {
    for seed in 0..2 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let config = VaeConfig { num_stages: 4, hidden: vec![5, 4], latent_dim: 3 };
        let vae = VaeModel::new(&config, &mut rng);
        let c = clinical_batch(&mut rng, 6, 4);
        let eps = random_tensor(&mut rng, 6, 3, -1.0, 1.0);
        let err = check_parameters(&vae, |m, t| {
            let bound = m.bind(t);
            let cv = t.leaf(&c);
            let fwd = m.forward_tape(t, &bound, cv, Some(&eps)).unwrap();
            (m.loss_tape(t, &fwd, cv).unwrap(), bound.vars())
        });
        out.push(GradCase { name: format!("vae_elbo/{seed}"), max_rel_err: err });
    }

    let forms = [
        ("bounded", OrderingConfig { form: OrderingForm::Bounded, detach_distance: false }),
        ("raw", OrderingConfig { form: OrderingForm::Raw, detach_distance: false }),
    ];
    let pairs = [(0, 3), (1, 4), (2, 5), (3, 5)].map(|(anchor, partner)| OrderingPair { anchor, partner });
    for (name, config) in forms {
        for seed in 0..2 {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
            let head = OrderingHead::new(3, &mut rng);
            let h = random_tensor(&mut rng, 6, 3, -1.5, 1.5);
            let err = check_inputs(std::slice::from_ref(&h), &|t, v| {
                let bound = head.bind(t);
                Ok(ordering_loss_tape(t, &bound, v[0], &pairs, config)?.unwrap())
            });
            out.push(GradCase { name: format!("ordering_{name}_latents/{seed}"), max_rel_err: err });
            let err = check_parameters(&head, |m, t| {
                let bound = m.bind(t);
                let hv = t.leaf(&h);
                (ordering_loss_tape(t, &bound, hv, &pairs, config).unwrap().unwrap(), bound.vars().to_vec())
            });
            out.push(GradCase { name: format!("ordering_{name}_head/{seed}"), max_rel_err: err });
        }
    }

    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let topology = Topology::Grid2d { rows: 2, cols: 3 };
        let protos = random_tensor(&mut rng, 6, 3, -2.0, 2.0);
        let grid = PrototypeGrid::new(protos.clone(), topology).unwrap();
        let h = random_tensor(&mut rng, 5, 3, -2.0, 2.0);
        let err = check_inputs(&[h, protos], &|t, v| {
            som_loss_tape(t, v[0], v[1], &grid, 1.3).map_err(|e| protomap::autodiff::AutodiffError::Usage(e.to_string()))
        });
        out.push(GradCase { name: format!("som/{seed}"), max_rel_err: err });
    }
}

fn estimator_objective(out: &mut Vec<GradCase>) {
    let kinds = [
        ("classification", TaskKind::Classification { num_classes: 3 }),
        ("regression", TaskKind::Regression),
    ];
    for (name, kind) in kinds {
        for seed in 0..2 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let topology = Topology::Grid2d { rows: 2, cols: 3 };
            let maps = random_tensor(&mut rng, 7, 6, 0.05, 0.95);
            let cae_config = CaeConfig { hidden: 5, code_dim: 3, epochs: 2, batches_per_epoch: 1, ..CaeConfig::default() };
            let (cae, _) = pretrain_cae(&maps, &cae_config).unwrap();
            let widths = StackWidths { extractor_hidden: 6, feature_dim: 4, estimator_hidden: 5, task_hidden: 4 };
            let mut stack = EstimatorStack::new(5, topology, 3, widths, kind, &mut rng);
            // Zero biases put dead-feature rows exactly on a ReLU kink.
            for (_, p) in stack.parameters_mut() {
                if p.shape().len() == 1 {
                    p.values_mut().iter_mut().for_each(|b| *b = rng.random_range(0.05..0.3));
                }
            }
            let imaging = random_tensor(&mut rng, 7, 5, -1.0, 1.0);
            let targets: Vec<TaskTarget> = (0..7)
                .map(|i| match kind {
                    TaskKind::Classification { .. } => TaskTarget::Class(i % 3),
                    TaskKind::Regression => TaskTarget::Value(rng.random_range(0.0..1.0)),
                })
                .collect();
            let weights = LossWeights { consistency: 0.7, task: 1.3 };
            let err = check_parameters(&stack, |s, t| {
                let obj = total_loss_tape(t, s, &cae, &imaging, &maps, &targets, weights).unwrap();
                (obj.total, obj.params)
            });
            out.push(GradCase { name: format!("estimator_total_{name}/{seed}"), max_rel_err: err });
        }
    }
}

/// Every differentiable building block, on several random draws.
pub fn gradient_cases() -> Vec<GradCase> {
    let mut out = Vec::new();
    ops(&mut out);
    layers(&mut out);
    adpen_terms(&mut out);
    estimator_objective(&mut out);
    out
}
