//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation eagerly computes its value and appends a node; `backward`
//! walks the tape once in reverse. Non-smooth operations use fixed
//! subgradients: `clamp` passes gradient only when the input lies inside the
//! closed interval, `min` sends the whole gradient to its first argument on
//! ties, `relu` passes gradient only for strictly positive input.

use super::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    LogSoftmax(Var),
    Gather(Var, Vec<usize>),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let v = tensor::add_row_bias(self.value(x), self.value(bias));
        self.push(v, Op::AddBias(x, bias))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "elementwise shape mismatch"
        );
        let v = self.value(a).zip_map(self.value(b), f);
        self.push(v, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| if x <= y { x } else { y }, Op::Min(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|a| c * a);
        self.push(v, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| -a);
        self.push(v, Op::Neg(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(v, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|a| a.clamp(lo, hi));
        self.push(v, Op::Clamp(x, lo, hi))
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let v = tensor::log_softmax(self.value(x));
        self.push(v, Op::LogSoftmax(x))
    }

    /// Picks column `indices[i]` from row `i`, giving an `n x 1` column.
    pub fn gather(&mut self, x: Var, indices: Vec<usize>) -> Var {
        let src = self.value(x);
        assert_eq!(src.rows(), indices.len(), "gather index count mismatch");
        let vals = indices.iter().enumerate().map(|(i, &j)| src.get(i, j)).collect();
        self.push(Tensor::column(vals), Op::Gather(x, indices))
    }

    pub fn row_sum(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let vals = (0..src.rows()).map(|i| src.row(i).iter().sum()).collect();
        self.push(Tensor::column(vals), Op::RowSum(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let n = src.data().len() as f64;
        let s: f64 = src.data().iter().sum();
        self.push(Tensor::scalar(s / n), Op::Mean(x))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, tensor::matmul(&g, &bv.transpose()));
                    acc(&mut grads, *b, tensor::matmul(&av.transpose(), &g));
                }
                Op::AddBias(x, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.zip_map(bv, |gi, y| gi * y));
                    acc(&mut grads, *b, g.zip_map(av, |gi, x| gi * x));
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let first = av.zip_map(bv, |x, y| if x <= y { 1.0 } else { 0.0 });
                    acc(&mut grads, *a, g.zip_map(&first, |gi, m| gi * m));
                    acc(&mut grads, *b, g.zip_map(&first, |gi, m| gi * (1.0 - m)));
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g.map(|gi| c * gi)),
                Op::Neg(x) => acc(&mut grads, *x, g.map(|gi| -gi)),
                Op::Tanh(x) => {
                    let y = &node.value;
                    acc(&mut grads, *x, g.zip_map(y, |gi, t| gi * (1.0 - t * t)));
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip_map(xv, |gi, a| if a > 0.0 { gi } else { 0.0 }));
                }
                Op::Exp(x) => acc(&mut grads, *x, g.zip_map(&node.value, |gi, e| gi * e)),
                Op::Square(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip_map(xv, |gi, a| 2.0 * a * gi));
                }
                Op::Clamp(x, lo, hi) => {
                    let xv = self.value(*x);
                    let (lo, hi) = (*lo, *hi);
                    acc(
                        &mut grads,
                        *x,
                        g.zip_map(xv, |gi, a| if a >= lo && a <= hi { gi } else { 0.0 }),
                    );
                }
                Op::LogSoftmax(x) => {
                    // dx = dy - softmax * rowsum(dy)
                    let y = &node.value;
                    let mut gx = g.clone();
                    for i in 0..g.rows() {
                        let s: f64 = g.row(i).iter().sum();
                        for (o, &ly) in gx.row_mut(i).iter_mut().zip(y.row(i)) {
                            *o -= ly.exp() * s;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gather(x, indices) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for (i, &j) in indices.iter().enumerate() {
                        gx.row_mut(i)[j] += g.get(i, 0);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::RowSum(x) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for i in 0..xv.rows() {
                        let gi = g.get(i, 0);
                        gx.row_mut(i).iter_mut().for_each(|o| *o = gi);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    let gi = g.item();
                    acc(&mut grads, *x, xv.map(|_| gi));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let gi = g.item() / xv.data().len() as f64;
                    acc(&mut grads, *x, xv.map(|_| gi));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}
