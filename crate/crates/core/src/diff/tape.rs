//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and the backward pass is a single reverse sweep.

use super::tensor::{gemm, Operand, Tensor};
use super::DiffError;

/// Handle to a value recorded on a [`Tape`].
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
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Sqrt(Var),
    Square(Var),
    Min(Var, Var),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass. Consumed by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by a backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `like` when `v` was not reached.
    pub fn get_or_zeros(&self, v: Var, like: (usize, usize)) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.0, like.1))
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is wanted (parameters, or inputs under test).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, _) = self.shape(a);
        let (n, _) = self.shape(b);
        let mut value = Tensor::zeros(m, n);
        gemm(
            Operand::plain(self.value(a)),
            Operand::transposed(self.value(b)),
            &mut value,
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(b), (1, n), "add_row expects a 1x{n} bias");
        let mut value = self.value(a).clone();
        let bias = self.value(b).data().to_vec();
        for row in value.data_mut().chunks_mut(n) {
            for (x, bb) in row.iter_mut().zip(&bias) {
                *x += bb;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::AddRow(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Multiplies each row of `a` by the matching entry of the `m x 1` column `b`.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(b), (m, 1), "mul_col expects an {m}x1 column");
        let mut value = self.value(a).clone();
        let col = self.value(b).data().to_vec();
        for (row, c) in value.data_mut().chunks_mut(n.max(1)).zip(&col) {
            for x in row.iter_mut() {
                *x *= c;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MulCol(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(value, Op::Log(a), rg)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let rg = self.rg(a);
        self.push(value, Op::Softplus(a), rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.rg(a);
        self.push(value, Op::Sqrt(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(value, Op::Square(a), rg)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), f64::min);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Min(a, b), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(value, Op::MeanAll(a), rg)
    }

    /// Row sums: `m x n -> m x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = t.shape();
        let data: Vec<f64> = (0..m).map(|r| t.row_slice(r).iter().sum()).collect();
        let value = Tensor::from_vec(m, 1, data).expect("row sums");
        let _ = n;
        let rg = self.rg(a);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = Tensor::hcat(&[self.value(a), self.value(b)]);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::ConcatCols(a, b), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice_cols(start, end);
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    /// Reverse sweep from a scalar `loss`. The tape is released afterwards.
    pub fn backward(self, loss: Var) -> Result<Gradients, DiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(DiffError::Shape(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(a) {
                    let mut da = Tensor::zeros(self.shape(a).0, self.shape(a).1);
                    gemm(
                        Operand::plain(g),
                        Operand::transposed(self.value(b)),
                        &mut da,
                        0.0,
                    );
                    accumulate(grads, a, da);
                }
                if self.rg(b) {
                    let mut db = Tensor::zeros(self.shape(b).0, self.shape(b).1);
                    gemm(
                        Operand::transposed(self.value(a)),
                        Operand::plain(g),
                        &mut db,
                        0.0,
                    );
                    accumulate(grads, b, db);
                }
            }
            Op::MatMulT(a, b) => {
                if self.rg(a) {
                    let mut da = Tensor::zeros(self.shape(a).0, self.shape(a).1);
                    gemm(
                        Operand::plain(g),
                        Operand::plain(self.value(b)),
                        &mut da,
                        0.0,
                    );
                    accumulate(grads, a, da);
                }
                if self.rg(b) {
                    let mut db = Tensor::zeros(self.shape(b).0, self.shape(b).1);
                    gemm(
                        Operand::transposed(g),
                        Operand::plain(self.value(a)),
                        &mut db,
                        0.0,
                    );
                    accumulate(grads, b, db);
                }
            }
            Op::AddRow(a, b) => {
                if self.rg(a) {
                    accumulate(grads, a, g.clone());
                }
                if self.rg(b) {
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n.max(1)) {
                        for (d, x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    accumulate(grads, b, Tensor::row(&db));
                }
            }
            Op::Add(a, b) => {
                if self.rg(a) {
                    accumulate(grads, a, g.clone());
                }
                if self.rg(b) {
                    accumulate(grads, b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.rg(a) {
                    accumulate(grads, a, g.clone());
                }
                if self.rg(b) {
                    accumulate(grads, b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    accumulate(grads, a, g.zip_map(self.value(b), |x, y| x * y));
                }
                if self.rg(b) {
                    accumulate(grads, b, g.zip_map(self.value(a), |x, y| x * y));
                }
            }
            Op::MulCol(a, b) => {
                let (m, n) = self.shape(a);
                let col = self.value(b);
                if self.rg(a) {
                    let mut da = g.clone();
                    for (row, c) in da.data_mut().chunks_mut(n.max(1)).zip(col.data()) {
                        for x in row.iter_mut() {
                            *x *= c;
                        }
                    }
                    accumulate(grads, a, da);
                }
                if self.rg(b) {
                    let av = self.value(a);
                    let data: Vec<f64> = (0..m)
                        .map(|r| {
                            g.row_slice(r)
                                .iter()
                                .zip(av.row_slice(r))
                                .map(|(x, y)| x * y)
                                .sum()
                        })
                        .collect();
                    accumulate(grads, b, Tensor::from_vec(m, 1, data).expect("column"));
                }
            }
            Op::Scale(a, c) => accumulate(grads, a, g.map(|x| x * c)),
            Op::AddScalar(a) => accumulate(grads, a, g.clone()),
            Op::Relu(a) => {
                let da = g.zip_map(self.value(a), |x, y| if y > 0.0 { x } else { 0.0 });
                accumulate(grads, a, da);
            }
            Op::Tanh(a) => accumulate(grads, a, g.zip_map(out, |x, t| x * (1.0 - t * t))),
            Op::Sigmoid(a) => accumulate(grads, a, g.zip_map(out, |x, s| x * s * (1.0 - s))),
            Op::Exp(a) => accumulate(grads, a, g.zip_map(out, |x, e| x * e)),
            Op::Log(a) => accumulate(grads, a, g.zip_map(self.value(a), |x, y| x / y)),
            Op::Softplus(a) => {
                accumulate(grads, a, g.zip_map(self.value(a), |x, y| x * sigmoid(y)))
            }
            Op::Sqrt(a) => accumulate(grads, a, g.zip_map(out, |x, s| x / (2.0 * s))),
            Op::Square(a) => accumulate(grads, a, g.zip_map(self.value(a), |x, y| 2.0 * x * y)),
            Op::Min(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                if self.rg(a) {
                    let mut da = g.clone();
                    for ((d, x), y) in da.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                        if x > y {
                            *d = 0.0;
                        }
                    }
                    accumulate(grads, a, da);
                }
                if self.rg(b) {
                    let mut db = g.clone();
                    for ((d, x), y) in db.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                        if x <= y {
                            *d = 0.0;
                        }
                    }
                    accumulate(grads, b, db);
                }
            }
            Op::SumAll(a) => {
                let (m, n) = self.shape(a);
                accumulate(grads, a, Tensor::filled(m, n, g.item()));
            }
            Op::MeanAll(a) => {
                let (m, n) = self.shape(a);
                let scale = g.item() / (m * n).max(1) as f64;
                accumulate(grads, a, Tensor::filled(m, n, scale));
            }
            Op::SumCols(a) => {
                let (m, n) = self.shape(a);
                let mut da = Tensor::zeros(m, n);
                for r in 0..m {
                    let gr = g.get(r, 0);
                    for c in 0..n {
                        da.set(r, c, gr);
                    }
                }
                accumulate(grads, a, da);
            }
            Op::ConcatCols(a, b) => {
                let na = self.shape(a).1;
                let nb = self.shape(b).1;
                if self.rg(a) {
                    accumulate(grads, a, g.slice_cols(0, na));
                }
                if self.rg(b) {
                    accumulate(grads, b, g.slice_cols(na, na + nb));
                }
            }
            Op::SliceCols(a, start) => {
                let (m, n) = self.shape(a);
                let width = g.cols();
                let mut da = Tensor::zeros(m, n);
                for r in 0..m {
                    da.data_mut()[r * n + start..r * n + start + width]
                        .copy_from_slice(g.row_slice(r));
                }
                accumulate(grads, a, da);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
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

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
