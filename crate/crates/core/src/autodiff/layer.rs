use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::{matmul_transposed, sigmoid, softmax_in_place, Tensor};
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    fn apply(self, t: &mut Tensor) {
        match self {
            Activation::Identity => {}
            Activation::Relu => t.values_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => t.values_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                for r in 0..t.rows() {
                    softmax_in_place(t.row_mut(r));
                }
            }
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Softmax => tape.softmax_rows(x),
        }
    }
}

/// Anything holding trainable tensors, listed in a fixed order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<(String, &Tensor)>;
    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Order-sensitive fingerprint of every parameter bit pattern.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.parameters() {
            for v in t.values() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Fully connected layer `activation(W x + b)` with `W: out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weights = (0..input * output)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Tensor::from_parts(output, input, weights),
            bias: Tensor::vector(vec![0.0; output]),
            activation,
        }
    }

    pub fn from_parts(
        weights: Tensor,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self, AutodiffError> {
        if weights.shape().len() != 2 || bias.len() != weights.rows() {
            return Err(AutodiffError::Shape(format!(
                "weights {:?} and bias {:?} disagree",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Untaped forward pass for a batch `x: n × in`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        let mut out = matmul_transposed(x, &self.weights)?;
        let c = out.cols();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v += self.bias.values()[i % c];
        }
        self.activation.apply(&mut out);
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDense {
        BoundDense {
            weights: tape.leaf(&self.weights),
            bias: tape.leaf(&self.bias),
            activation: self.activation,
        }
    }
}

impl Parameterized for DenseLayer {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        vec![("weights".into(), &self.weights), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("weights".into(), &mut self.weights),
            ("bias".into(), &mut self.bias),
        ]
    }
}

/// A [`DenseLayer`] whose parameters live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weights: Var,
    pub bias: Var,
    pub activation: Activation,
}

impl BoundDense {
    pub fn vars(&self) -> [Var; 2] {
        [self.weights, self.bias]
    }
}

/// Records `activation(x Wᵀ + b)` on the tape.
pub fn affine_forward(tape: &mut Tape, layer: &BoundDense, x: Var) -> Result<Var, AutodiffError> {
    let lin = tape.matmul_t(x, layer.weights)?;
    let lin = tape.add_row(lin, layer.bias)?;
    Ok(layer.activation.record(tape, lin))
}

/// Stack of dense layers applied in sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// Layers `widths[0] → widths[1] → …`; `hidden` on every layer but the
    /// last, `last` on the final one.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut R,
    ) -> Self {
        let n = widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                DenseLayer::new(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_dim)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, AutodiffError> {
        let mut h = x.as_matrix();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }
}

impl Parameterized for Mlp {
    fn parameters(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.parameters()
                    .into_iter()
                    .map(move |(n, t)| (format!("layer{i}.{n}"), t))
            })
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.parameters_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("layer{i}.{n}"), t))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<BoundDense>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, AutodiffError> {
        let mut h = x;
        for layer in &self.layers {
            h = affine_forward(tape, layer, h)?;
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(BoundDense::vars).collect()
    }
}
