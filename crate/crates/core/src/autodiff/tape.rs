//! Tape-based reverse-mode differentiation over small dense matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a `1 × 1` node walks the record in reverse and
//! accumulates one gradient per node. The tape is left intact afterwards so
//! values can still be read; call [`Tape::clear`] to reuse the allocation for
//! the next step.

use super::tensor::{
    log_softmax_in_place, matmul_transposed, sigmoid, softmax_in_place, Tensor,
};
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Detach,
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    Square(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    SumCols(Var),
    PairwiseSqDist(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::from_parts(r, c, vec![0.0; r * c])
            }
        }
    }

    /// Gradients for `vars`, reshaped to match `like` (parameter shapes).
    pub fn collect(&self, vars: &[Var], like: &[&Tensor]) -> Vec<Tensor> {
        vars.iter()
            .zip(like)
            .map(|(v, p)| {
                let g = self.wrt(*v);
                Tensor::new(p.shape().to_vec(), g.into_values())
                    .expect("gradient shape matches its parameter")
            })
            .collect()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<(), AutodiffError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(AutodiffError::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(t.rows(), t.cols(), t.values().iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        a.rows(),
        a.cols(),
        a.values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.values()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: &Tensor) -> Var {
        self.push(value.as_matrix(), Op::Leaf)
    }

    pub fn leaf_owned(&mut self, value: Tensor) -> Var {
        let value = if value.shape().len() == 2 {
            value
        } else {
            value.as_matrix()
        };
        self.push(value, Op::Leaf)
    }

    /// Same value as `x`, but no gradient flows back through it.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.push(v, Op::Detach)
    }

    /// `x · wᵀ` for `x: n × in` and `w: out × in`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var, AutodiffError> {
        let v = matmul_transposed(self.value(x), self.value(w))?;
        Ok(self.push(v, Op::MatMulT(x, w)))
    }

    /// Adds a `1 × cols` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, AutodiffError> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.len() != xv.cols() {
            return Err(AutodiffError::Shape(format!(
                "bias of length {} cannot broadcast over {} columns",
                rv.len(),
                xv.cols()
            )));
        }
        let c = xv.cols();
        let values = xv
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v + rv.values()[i % c])
            .collect();
        let v = Tensor::from_parts(xv.rows(), c, values);
        Ok(self.push(v, Op::AddRow(x, row)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        same_shape(self.value(a), self.value(b), "add")?;
        let v = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let v = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let v = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        same_shape(self.value(a), self.value(b), "div")?;
        let v = zip(self.value(a), self.value(b), |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = map(self.value(x), |a| a * factor);
        self.push(v, Op::Scale(x, factor))
    }

    pub fn offset(&mut self, x: Var, shift: f64) -> Var {
        let v = map(self.value(x), |a| a + shift);
        self.push(v, Op::Offset(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = map(self.value(x), |a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = map(self.value(x), sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = map(self.value(x), f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = map(self.value(x), f64::ln);
        self.push(v, Op::Ln(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let v = map(self.value(x), f64::sqrt);
        self.push(v, Op::Sqrt(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = map(self.value(x), f64::abs);
        self.push(v, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = map(self.value(x), |a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for r in 0..v.rows() {
            log_softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::LogSoftmaxRows(x))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if start > end || end > xv.cols() {
            return Err(AutodiffError::Shape(format!(
                "column range {start}..{end} out of bounds for {} columns",
                xv.cols()
            )));
        }
        let width = end - start;
        let mut values = Vec::with_capacity(xv.rows() * width);
        for r in 0..xv.rows() {
            values.extend_from_slice(&xv.row(r)[start..end]);
        }
        let v = Tensor::from_parts(xv.rows(), width, values);
        Ok(self.push(v, Op::SliceCols(x, start, end)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let rows = parts
            .first()
            .map(|p| self.value(*p).rows())
            .ok_or_else(|| AutodiffError::Shape("concat of zero tensors".into()))?;
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(AutodiffError::Shape("concat rows differ".into()));
        }
        let width: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut values = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for p in parts {
                values.extend_from_slice(self.value(*p).row(r));
            }
        }
        let v = Tensor::from_parts(rows, width, values);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows of `x` selected by `indices` (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if let Some(bad) = indices.iter().find(|&&i| i >= xv.rows()) {
            return Err(AutodiffError::Shape(format!(
                "row {bad} out of bounds for {} rows",
                xv.rows()
            )));
        }
        let mut values = Vec::with_capacity(indices.len() * xv.cols());
        for &i in indices {
            values.extend_from_slice(xv.row(i));
        }
        let v = Tensor::from_parts(indices.len(), xv.cols(), values);
        Ok(self.push(v, Op::GatherRows(x, indices.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::from_parts(1, 1, vec![self.value(x).sum()]);
        self.push(v, Op::SumAll(x))
    }

    /// Per-row sums, `n × c → n × 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let values = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        let v = Tensor::from_parts(xv.rows(), 1, values);
        self.push(v, Op::SumCols(x))
    }

    /// Squared Euclidean distances between rows: `a: n × m`, `b: k × m → n × k`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(AutodiffError::Shape(format!(
                "pairwise distance between {}-d and {}-d rows",
                av.cols(),
                bv.cols()
            )));
        }
        let (n, k) = (av.rows(), bv.rows());
        let mut values = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                values.push(super::tensor::squared_distance(av.row(i), bv.row(j)));
            }
        }
        let v = Tensor::from_parts(n, k, values);
        Ok(self.push(v, Op::PairwiseSqDist(a, b)))
    }

    /// Reverse-accumulates gradients of the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(AutodiffError::Usage(
                "backward called before any forward pass was recorded".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::Usage(format!(
                "loss must be a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(1, 1, vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            let out = &node.value;
            let mut acc = |target: Var, delta: Tensor| {
                let slot = &mut grads[target.0];
                match slot {
                    Some(existing) => {
                        for (e, d) in existing.values_mut().iter_mut().zip(delta.values()) {
                            *e += d;
                        }
                    }
                    None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::MatMulT(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, inner, outd) = (xv.rows(), xv.cols(), wv.rows());
                    let mut dx = vec![0.0; n * inner];
                    let mut dw = vec![0.0; outd * inner];
                    for i in 0..n {
                        let gi = g.row(i);
                        let xi = xv.row(i);
                        for (o, &go) in gi.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            let wo = wv.row(o);
                            for j in 0..inner {
                                dx[i * inner + j] += go * wo[j];
                                dw[o * inner + j] += go * xi[j];
                            }
                        }
                    }
                    acc(*x, Tensor::from_parts(n, inner, dx));
                    acc(*w, Tensor::from_parts(outd, inner, dw));
                }
                Op::AddRow(x, row) => {
                    let c = g.cols();
                    let mut dr = vec![0.0; c];
                    for (i, v) in g.values().iter().enumerate() {
                        dr[i % c] += v;
                    }
                    let (rr, rc) = (self.value(*row).rows(), self.value(*row).cols());
                    acc(*row, Tensor::from_parts(rr, rc, dr));
                    acc(*x, g);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, map(&g, |v| -v));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, zip(&g, bv, |x, y| x * y));
                    acc(*b, zip(&g, av, |x, y| x * y));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(*a, zip(&g, bv, |x, y| x / y));
                    let t = zip(av, bv, |x, y| -x / (y * y));
                    acc(*b, zip(&g, &t, |x, y| x * y));
                }
                Op::Scale(x, f) => acc(*x, map(&g, |v| v * f)),
                Op::Offset(x) => acc(*x, g),
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc(*x, zip(&g, xv, |gv, a| if a > 0.0 { gv } else { 0.0 }));
                }
                Op::Sigmoid(x) => acc(*x, zip(&g, out, |gv, s| gv * s * (1.0 - s))),
                Op::Exp(x) => acc(*x, zip(&g, out, |gv, e| gv * e)),
                Op::Ln(x) => acc(*x, zip(&g, self.value(*x), |gv, a| gv / a)),
                Op::Sqrt(x) => acc(*x, zip(&g, out, |gv, s| gv / (2.0 * s))),
                Op::Abs(x) => acc(*x, zip(&g, self.value(*x), |gv, a| gv * sign(a))),
                Op::Square(x) => acc(*x, zip(&g, self.value(*x), |gv, a| 2.0 * gv * a)),
                Op::SoftmaxRows(x) => {
                    let mut dx = g.clone();
                    for r in 0..out.rows() {
                        let (yr, gr) = (out.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(y, gv)| y * gv).sum();
                        for (j, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(*x, dx);
                }
                Op::LogSoftmaxRows(x) => {
                    let mut dx = g.clone();
                    for r in 0..out.rows() {
                        let gr = g.row(r);
                        let total: f64 = gr.iter().sum();
                        let lr = out.row(r);
                        for (j, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = gr[j] - lr[j].exp() * total;
                        }
                    }
                    acc(*x, dx);
                }
                Op::SliceCols(x, start, end) => {
                    let xv = self.value(*x);
                    let mut dx = Tensor::from_parts(xv.rows(), xv.cols(), vec![0.0; xv.len()]);
                    for r in 0..xv.rows() {
                        dx.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                    }
                    acc(*x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pv = self.value(*p);
                        let w = pv.cols();
                        let mut dp = Vec::with_capacity(pv.len());
                        for r in 0..pv.rows() {
                            dp.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(*p, Tensor::from_parts(pv.rows(), w, dp));
                        offset += w;
                    }
                }
                Op::GatherRows(x, indices) => {
                    let xv = self.value(*x);
                    let mut dx = Tensor::from_parts(xv.rows(), xv.cols(), vec![0.0; xv.len()]);
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, gv) in dx.row_mut(i).iter_mut().zip(g.row(r)) {
                            *d += gv;
                        }
                    }
                    acc(*x, dx);
                }
                Op::SumAll(x) => {
                    let xv = self.value(*x);
                    let gv = g.values()[0];
                    acc(*x, Tensor::from_parts(xv.rows(), xv.cols(), vec![gv; xv.len()]));
                }
                Op::SumCols(x) => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let values = (0..xv.len()).map(|i| g.values()[i / c]).collect();
                    acc(*x, Tensor::from_parts(xv.rows(), c, values));
                }
                Op::PairwiseSqDist(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let m = av.cols();
                    let mut da = vec![0.0; av.len()];
                    let mut db = vec![0.0; bv.len()];
                    for i in 0..av.rows() {
                        let ai = av.row(i);
                        for j in 0..bv.rows() {
                            let gij = g.values()[i * bv.rows() + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let bj = bv.row(j);
                            for d in 0..m {
                                let diff = 2.0 * gij * (ai[d] - bj[d]);
                                da[i * m + d] += diff;
                                db[j * m + d] -= diff;
                            }
                        }
                    }
                    acc(*a, Tensor::from_parts(av.rows(), m, da));
                    acc(*b, Tensor::from_parts(bv.rows(), m, db));
                }
            }
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| (n.value.rows(), n.value.cols()))
            .collect();
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}
