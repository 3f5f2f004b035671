use serde::{Deserialize, Serialize};

use super::AutodiffError;

/// Dense row-major array of `f64` values.
///
/// Every tensor that flows through the tape is treated as a matrix: rank-0
/// tensors are `1 × 1`, rank-1 tensors of length `n` are `1 × n`, and rank-2
/// tensors are `rows × cols`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AutodiffError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(AutodiffError::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if shape.len() > 2 {
            return Err(AutodiffError::Shape(format!(
                "rank {} tensors are not supported",
                shape.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    /// Builds a `rows × cols` matrix from row-major values.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, AutodiffError> {
        Self::new(vec![rows, cols], values)
    }

    /// Stacks equally long rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, AutodiffError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(AutodiffError::Shape(format!(
                    "row {i} has length {}, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, values)
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self {
            shape: vec![rows, cols],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.values[i * c..(i + 1) * c]
    }

    /// Same values viewed as a `rows × cols` matrix.
    pub fn as_matrix(&self) -> Tensor {
        Tensor::from_parts(self.rows(), self.cols(), self.values.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// `x · wᵀ` for `x: n × in`, `w: out × in`.
pub(crate) fn matmul_transposed(x: &Tensor, w: &Tensor) -> Result<Tensor, AutodiffError> {
    let (n, inner) = (x.rows(), x.cols());
    let (out, w_in) = (w.rows(), w.cols());
    if inner != w_in {
        return Err(AutodiffError::Shape(format!(
            "input has {inner} columns but weights expect {w_in}"
        )));
    }
    let mut values = vec![0.0; n * out];
    for i in 0..n {
        let xi = x.row(i);
        for o in 0..out {
            let wo = w.row(o);
            values[i * out + o] = xi.iter().zip(wo).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Tensor::from_parts(n, out, values))
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for v in row.iter_mut() {
        *v -= log_total;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
