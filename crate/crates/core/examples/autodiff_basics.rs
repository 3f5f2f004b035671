// Fit a two-layer network to `y = sin(x)` with the recording tape and Adam.
//
// ```bash
// cargo run --example autodiff_basics
// ```

use protomap::autodiff::{adam_update, Activation, AdamConfig, AdamState, Mlp, Parameterized, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..32).map(|i| -3.0 + 6.0 * i as f64 / 31.0).collect();
    let x = Tensor::matrix(32, 1, xs.clone())?;
    let y = Tensor::matrix(32, 1, xs.iter().map(|v| v.sin()).collect())?;

    let mut mlp = Mlp::new(&[1, 16, 1], Activation::Relu, Activation::Identity, &mut rng);
    let mut adam = AdamState::new(AdamConfig::default(), mlp.parameters().into_iter().map(|(_, t)| t));
    let mut tape = Tape::new();
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..500 {
        tape.clear();
        let bound = mlp.bind(&mut tape);
        let input = tape.leaf(&x);
        let target = tape.leaf(&y);
        let out = bound.forward(&mut tape, input)?;
        let err = tape.sub(out, target)?;
        let sq = tape.square(err);
        let total = tape.sum(sq);
        let loss = tape.scale(total, 1.0 / 32.0);
        last = tape.scalar(loss);
        first.get_or_insert(last);
        let grads = tape.backward(loss)?;
        let like: Vec<Tensor> = mlp.parameters().into_iter().map(|(_, t)| t.clone()).collect();
        let grads = grads.collect(&bound.vars(), &like.iter().collect::<Vec<_>>());
        adam_update(&mut mlp.parameters_mut(), &grads, &mut adam, 1e-2)?;
    }
    println!("mse {:.4} -> {last:.4}", first.unwrap_or(last));
    assert!(last < first.unwrap_or(f64::INFINITY));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
