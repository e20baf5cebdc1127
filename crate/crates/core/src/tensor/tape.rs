//! Define-by-run reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Tape`] is rebuilt for every minibatch. Nodes are appended in
//! evaluation order, so operands always precede their consumers and the
//! backward sweep is a single reverse scan.

use super::matrix::{gemm, Matrix};
use super::ops;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `x * w^T + b`
    Linear { x: NodeId, w: NodeId, b: NodeId },
    /// Elementwise map with its derivative captured at forward time.
    Pointwise { x: NodeId, deriv: Matrix },
    Gate { x: NodeId, w: NodeId, eps: f64 },
    SqDist(NodeId),
    FuzzyCe { target: NodeId, pred: NodeId, delta: f64 },
    L1(NodeId),
    Sum(NodeId),
    Hadamard(NodeId, NodeId),
    Mse { pred: NodeId, target: NodeId },
    Scale(NodeId, f64),
    Add(NodeId, NodeId),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node reachable from it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `id`; zeros when `id` does not influence the loss.
    pub fn get(&self, id: NodeId) -> Matrix {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get_ref(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    /// A differentiable leaf (parameter).
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Copies the value of `id` into a fresh constant, cutting gradient flow.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let value = self.nodes[id.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() || bv.shape() != (1, wv.rows()) {
            return Err(Error::dim(format!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let value = ops::linear(xv, wv, bv);
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Elementwise `f(flat index, input)` with derivative
    /// `df(flat index, input, output)`; `df` only runs when a gradient can
    /// flow through the node.
    pub fn pointwise(
        &mut self,
        x: NodeId,
        f: impl Fn(usize, f64) -> f64,
        df: impl Fn(usize, f64, f64) -> f64,
    ) -> NodeId {
        let rg = self.any_grad(&[x]);
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let src = xv.as_slice();
        let value: Vec<f64> = src.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        let deriv = if rg {
            src.iter().zip(&value).enumerate().map(|(i, (&v, &y))| df(i, v, y)).collect()
        } else {
            Vec::new()
        };
        let value = Matrix::new(rows, cols, value).expect("shape preserved");
        let deriv = if rg {
            Matrix::new(rows, cols, deriv).expect("shape preserved")
        } else {
            Matrix::zeros(0, 0)
        };
        self.push(value, Op::Pointwise { x, deriv }, rg)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = ops::leaky_relu(self.value(x), slope);
        let deriv = self.value(x).map(|v| if v > 0.0 { 1.0 } else { slope });
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Pointwise { x, deriv }, rg)
    }

    /// Hard feature gate: column `j` is `w_j * x_j` if `w_j > eps`, else 0.
    /// Closed columns pass no gradient to either `x` or `w`.
    pub fn gate(&mut self, x: NodeId, w: NodeId, eps: f64) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape() != (1, xv.cols()) {
            return Err(Error::dim(format!(
                "gate weights {:?} for input with {} columns",
                wv.shape(),
                xv.cols()
            )));
        }
        let value = ops::gate(xv, wv.as_slice(), eps);
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(value, Op::Gate { x, w, eps }, rg))
    }

    /// All-pairs squared distances between the rows of `z`.
    pub fn sq_dist(&mut self, z: NodeId) -> NodeId {
        let value = ops::self_sq_dist(self.value(z));
        let rg = self.any_grad(&[z]);
        self.push(value, Op::SqDist(z), rg)
    }

    /// Fuzzy-set (binary) cross entropy over off-diagonal entries, averaged by
    /// `1 / N^2`, with predictions clamped to `[delta, 1 - delta]`.
    pub fn fuzzy_ce(&mut self, target: NodeId, pred: NodeId, delta: f64) -> Result<NodeId> {
        let (t, p) = (self.value(target), self.value(pred));
        t.ensure_same_shape(p, "fuzzy cross entropy")?;
        if t.rows() != t.cols() {
            return Err(Error::dim("fuzzy cross entropy expects square similarity matrices"));
        }
        let value = Matrix::scalar(fuzzy_ce_value(t, p, delta));
        let rg = self.any_grad(&[target, pred]);
        Ok(self.push(value, Op::FuzzyCe { target, pred, delta }, rg))
    }

    pub fn l1(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).as_slice().iter().map(|v| v.abs()).sum();
        let rg = self.any_grad(&[x]);
        self.push(Matrix::scalar(v), Op::L1(x), rg)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).sum();
        let rg = self.any_grad(&[x]);
        self.push(Matrix::scalar(v), Op::Sum(x), rg)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Hadamard(a, b), rg))
    }

    /// Mean squared error over all entries.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (p, t) = (self.value(pred), self.value(target));
        p.ensure_same_shape(t, "mse")?;
        let n = p.len().max(1) as f64;
        let v = p
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(Matrix::scalar(v), Op::Mse { pred, target }, rg))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).scale(c);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Scale(x, c), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(&node.op, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, op: &Op, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.requires_grad(a) {
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm(1.0, g, false, bv, true, 0.0, &mut ga);
                    accumulate(grads, a, ga);
                }
                if self.requires_grad(b) {
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(1.0, av, true, g, false, 0.0, &mut gb);
                    accumulate(grads, b, gb);
                }
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(x), self.value(w));
                if self.requires_grad(x) {
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    gemm(1.0, g, false, wv, false, 0.0, &mut gx);
                    accumulate(grads, x, gx);
                }
                if self.requires_grad(w) {
                    let mut gw = Matrix::zeros(wv.rows(), wv.cols());
                    gemm(1.0, g, true, xv, false, 0.0, &mut gw);
                    accumulate(grads, w, gw);
                }
                if self.requires_grad(b) {
                    accumulate(grads, b, g.col_sums());
                }
            }
            Op::Pointwise { x, ref deriv } => {
                if self.requires_grad(x) {
                    accumulate(grads, x, g.hadamard(deriv).expect("same shape"));
                }
            }
            Op::Gate { x, w, eps } => {
                let (xv, wv) = (self.value(x), self.value(w));
                let wv = wv.as_slice();
                if self.requires_grad(x) {
                    accumulate(grads, x, ops::gate(g, wv, eps));
                }
                if self.requires_grad(w) {
                    let mut gw = vec![0.0; wv.len()];
                    for r in 0..xv.rows() {
                        for (j, (&xi, &gi)) in xv.row(r).iter().zip(g.row(r)).enumerate() {
                            if wv[j] > eps {
                                gw[j] += xi * gi;
                            }
                        }
                    }
                    accumulate(grads, w, Matrix::row_vector(gw));
                }
            }
            Op::SqDist(z) => {
                if !self.requires_grad(z) {
                    return;
                }
                let zv = self.value(z);
                let n = zv.rows();
                // dZ = 2 (diag(rowsum(H)) Z - H Z), H = G + G^T
                let mut h = Matrix::zeros(n, n);
                let mut rs = vec![0.0; n];
                let gs = g.as_slice();
                for (i, r) in rs.iter_mut().enumerate() {
                    let hr = h.row_mut(i);
                    for (j, o) in hr.iter_mut().enumerate() {
                        if i != j {
                            *o = gs[i * n + j] + gs[j * n + i];
                        }
                    }
                    *r = hr.iter().sum();
                }
                let mut gz = Matrix::zeros(n, zv.cols());
                gemm(-2.0, &h, false, zv, false, 0.0, &mut gz);
                for (i, &r) in rs.iter().enumerate() {
                    for (o, &zi) in gz.row_mut(i).iter_mut().zip(zv.row(i)) {
                        *o += 2.0 * r * zi;
                    }
                }
                accumulate(grads, z, gz);
            }
            Op::FuzzyCe { target, pred, delta } => {
                let (t, p) = (self.value(target), self.value(pred));
                let n = t.rows();
                let scale = -g.item().expect("scalar upstream") / (n * n) as f64;
                if self.requires_grad(pred) {
                    let mut gp = Matrix::zeros(n, n);
                    for i in 0..n {
                        let (tr, pr) = (t.row(i), p.row(i));
                        for (j, o) in gp.row_mut(i).iter_mut().enumerate() {
                            let pv = pr[j];
                            if i == j || pv <= delta || pv >= 1.0 - delta {
                                continue;
                            }
                            let tv = tr[j];
                            *o = scale * (tv / pv - (1.0 - tv) / (1.0 - pv));
                        }
                    }
                    accumulate(grads, pred, gp);
                }
                if self.requires_grad(target) {
                    let mut gt = Matrix::zeros(n, n);
                    for i in 0..n {
                        let pr = p.row(i);
                        for (j, o) in gt.row_mut(i).iter_mut().enumerate() {
                            if i == j {
                                continue;
                            }
                            let pc = pr[j].clamp(delta, 1.0 - delta);
                            *o = scale * (pc.ln() - (1.0 - pc).ln());
                        }
                    }
                    accumulate(grads, target, gt);
                }
            }
            Op::L1(x) => {
                let s = g.item().expect("scalar upstream");
                let gx = self.value(x).map(|v| {
                    if v > 0.0 {
                        s
                    } else if v < 0.0 {
                        -s
                    } else {
                        0.0
                    }
                });
                accumulate(grads, x, gx);
            }
            Op::Sum(x) => {
                let (r, c) = self.value(x).shape();
                accumulate(grads, x, Matrix::filled(r, c, g.item().expect("scalar upstream")));
            }
            Op::Hadamard(a, b) => {
                if self.requires_grad(a) {
                    accumulate(grads, a, g.hadamard(self.value(b)).expect("same shape"));
                }
                if self.requires_grad(b) {
                    accumulate(grads, b, g.hadamard(self.value(a)).expect("same shape"));
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let s = 2.0 * g.item().expect("scalar upstream") / p.len().max(1) as f64;
                let gp = p.zip_map(t, |a, b| s * (a - b)).expect("same shape");
                if self.requires_grad(target) {
                    accumulate(grads, target, gp.scale(-1.0));
                }
                if self.requires_grad(pred) {
                    accumulate(grads, pred, gp);
                }
            }
            Op::Scale(x, c) => accumulate(grads, x, g.scale(c)),
            Op::Add(a, b) => {
                if self.requires_grad(a) {
                    accumulate(grads, a, g.clone());
                }
                if self.requires_grad(b) {
                    accumulate(grads, b, g.clone());
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Value of the clamped fuzzy cross entropy; shared with the tape-free path.
pub fn fuzzy_ce_value(target: &Matrix, pred: &Matrix, delta: f64) -> f64 {
    let n = target.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let (tr, pr) = (target.row(i), pred.row(i));
        for j in 0..n {
            if i == j {
                continue;
            }
            let pc = pr[j].clamp(delta, 1.0 - delta);
            let t = tr[j];
            acc += t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        }
    }
    -acc / (n * n) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn sum_gives_all_ones() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::filled(3, 2, 0.7));
        let s = tape.sum(w);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w), Matrix::filled(3, 2, 1.0));
    }

    #[test]
    fn squared_norm_of_wx_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let wv = random(3, 4, &mut rng);
        let xv = random(4, 1, &mut rng);
        let mut tape = Tape::new();
        let w = tape.param(wv.clone());
        let x = tape.constant(xv.clone());
        let y = tape.matmul(w, x).unwrap();
        let sq = tape.hadamard(y, y).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        let expected = wv.matmul(&xv).unwrap().matmul(&xv.transpose()).unwrap().scale(2.0);
        assert!(g.get(w).max_abs_diff(&expected) < 1e-12);
        assert_eq!(g.get(x), Matrix::zeros(4, 1));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::filled(2, 2, 1.0));
        let unused = tape.param(Matrix::filled(1, 3, 5.0));
        let loss = tape.sum(a);
        let g = tape.backward(loss).unwrap();
        assert!(g.get_ref(unused).is_none());
        assert_eq!(g.get(unused), Matrix::zeros(1, 3));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::zeros(2, 2));
        assert!(matches!(tape.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_operand_accumulates() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::filled(1, 2, 3.0));
        let b = tape.add(a, a).unwrap();
        let loss = tape.sum(b);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn closed_gate_blocks_both_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let w = tape.param(Matrix::row_vector(vec![0.5, 0.05]));
        let y = tape.gate(x, w, 0.1).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).as_slice(), &[0.5, 0.0, 0.5, 0.0]);
        assert_eq!(g.get(w).as_slice(), &[4.0, 0.0]);
    }
}
