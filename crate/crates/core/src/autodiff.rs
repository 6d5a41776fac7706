//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation in creation order, so the node list
//! is already topologically sorted. [`Graph::backward`] walks it once in
//! reverse and returns gradients for the parameter leaves only.

use std::collections::BTreeMap;

use crate::tensor::{gemm, Result, Tensor, TensorError};

/// Lower and upper clamp applied to every sigmoid output.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identifies one parameter tensor: the owning parameter set and the tensor
/// position inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey {
    pub owner: u64,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => clamped_sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// Logistic function clamped into `[PROB_EPS, 1 - PROB_EPS]`.
pub fn clamped_sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Ln(NodeId),
    Act(NodeId, Activation),
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize),
    Sum(NodeId),
    Mean(NodeId),
    MeanSquaredError(NodeId, NodeId),
    BinaryCrossEntropy(NodeId, Vec<f64>),
    SoftmaxCrossEntropy(NodeId, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamKey>,
}

/// Parameter gradients produced by a backward pass, keyed by [`ParamKey`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    map: BTreeMap<ParamKey, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, key: ParamKey) -> Option<&[f64]> {
        self.map.get(&key).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        self.map.keys().copied()
    }

    pub fn owners(&self) -> impl Iterator<Item = u64> + '_ {
        let mut last = None;
        self.map.keys().filter_map(move |k| {
            if last == Some(k.owner) {
                None
            } else {
                last = Some(k.owner);
                Some(k.owner)
            }
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Computation graph recorded during a forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    flip_gradient_sign: bool,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn as_matrix(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Negates every parameter gradient. Only used to verify that the
    /// gradient checks detect a broken backward pass.
    pub fn set_gradient_fault(&mut self, on: bool) {
        self.flip_gradient_sign = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "constant" });
        }
        Ok(self.push(value.with_requires_grad(false), Op::Leaf))
    }

    /// Adds a trainable leaf whose gradient is reported under `key`.
    pub fn param(&mut self, key: ParamKey, value: &Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "param" });
        }
        let id = self.push(value.clone().with_requires_grad(true), Op::Leaf);
        self.nodes[id.0].param = Some(key);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.values(), false, tb.values(), false, &mut out, false);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (m, n) = as_matrix(tx);
        if tb.len() != n {
            return Err(shape_err("add_bias", tx, tb));
        }
        let mut out = tx.values().to_vec();
        for r in 0..m {
            for (o, b) in out[r * n..(r + 1) * n].iter_mut().zip(tb.values()) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::new(tx.shape().to_vec(), out)?, Op::AddBias(x, bias)))
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op_name, ta, tb));
        }
        let out = ta.zip_map(tb, f)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c))
    }

    /// Elementwise natural logarithm; inputs must be positive.
    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a);
        if t.values().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Invalid {
                op: "ln",
                msg: "non-positive input".into(),
            });
        }
        let out = t.map(f64::ln);
        Ok(self.push(out, Op::Ln(a)))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> Result<NodeId> {
        let t = self.value(a);
        if !t.is_finite() {
            return Err(TensorError::NonFinite { op: "activation" });
        }
        let out = t.map(|v| kind.apply(v));
        Ok(self.push(out, Op::Act(a, kind)))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let out = self.value(a).slice_cols(start, end)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).values().iter().fold(0.0, |acc, v| acc + v);
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let s = t.values().iter().fold(0.0, |acc, v| acc + v) / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Mean over all elements of `(a - b)²`.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mse", ta, tb));
        }
        let s = ta
            .values()
            .iter()
            .zip(tb.values())
            .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y));
        let out = Tensor::scalar(s / ta.len() as f64);
        Ok(self.push(out, Op::MeanSquaredError(a, b)))
    }

    /// Mean binary cross entropy of probabilities `p` against 0/1 targets.
    /// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce(&mut self, p: NodeId, targets: Vec<f64>) -> Result<NodeId> {
        let tp = self.value(p);
        if tp.len() != targets.len() {
            return Err(TensorError::Invalid {
                op: "bce",
                msg: format!("{} probabilities vs {} targets", tp.len(), targets.len()),
            });
        }
        if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(TensorError::Invalid {
                op: "bce",
                msg: "targets must be 0 or 1".into(),
            });
        }
        let s = tp.values().iter().zip(&targets).fold(0.0, |acc, (&q, &t)| {
            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            acc - (t * q.ln() + (1.0 - t) * (1.0 - q).ln())
        });
        let out = Tensor::scalar(s / targets.len() as f64);
        Ok(self.push(out, Op::BinaryCrossEntropy(p, targets)))
    }

    /// Mean cross entropy of row-wise softmax over `logits` against labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        let t = self.value(logits);
        let (m, n) = as_matrix(t);
        if labels.len() != m || labels.iter().any(|&l| l >= n) {
            return Err(TensorError::Invalid {
                op: "softmax_cross_entropy",
                msg: format!("{} labels for {m}×{n} logits", labels.len()),
            });
        }
        let mut s = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = t.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().fold(0.0, |acc, v| acc + (v - max).exp()).ln() + max;
            s += lse - row[label];
        }
        let out = Tensor::scalar(s / m as f64);
        Ok(self.push(out, Op::SoftmaxCrossEntropy(logits, labels)))
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for parameter
    /// leaves only; intermediate gradients are dropped.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    if let Some(key) = node.param {
                        let g = if self.flip_gradient_sign {
                            g.into_iter().map(|v| -v).collect()
                        } else {
                            g
                        };
                        match out.map.get_mut(&key) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                            None => {
                                out.map.insert(key, g);
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, &g, false, tb.values(), true, &mut ga, false);
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.values(), true, &g, false, &mut gb, false);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(x, bias) => {
                    let n = self.value(*bias).len();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    accumulate(&mut grads, *x, g);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = g.iter().zip(tb.values()).map(|(g, y)| g * y).collect();
                    let gb = g.iter().zip(ta.values()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g.iter().map(|v| v * c).collect());
                }
                Op::Ln(a) => {
                    let x = self.value(*a).values();
                    accumulate(&mut grads, *a, g.iter().zip(x).map(|(g, x)| g / x).collect());
                }
                Op::Act(a, kind) => {
                    let x = self.value(*a).values();
                    let y = node.value.values();
                    let ga = g
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(g, (&x, &y))| g * kind.derivative(x, y))
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Vec::with_capacity(g.len() / (ca + cb) * ca);
                    let mut gb = Vec::with_capacity(g.len() / (ca + cb) * cb);
                    for row in g.chunks(ca + cb) {
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let (m, n) = as_matrix(src);
                    let w = node.value.cols();
                    let mut ga = vec![0.0; m * n];
                    for r in 0..m {
                        ga[r * n + start..r * n + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0] / n as f64; n]);
                }
                Op::MeanSquaredError(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let c = 2.0 * g[0] / ta.len() as f64;
                    let ga: Vec<f64> = ta
                        .values()
                        .iter()
                        .zip(tb.values())
                        .map(|(x, y)| c * (x - y))
                        .collect();
                    let gb = ga.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::BinaryCrossEntropy(p, targets) => {
                    let tp = self.value(*p);
                    let n = targets.len() as f64;
                    let gp = tp
                        .values()
                        .iter()
                        .zip(targets)
                        .map(|(&q, &t)| {
                            let qc = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
                            if qc != q {
                                // clamped region is flat
                                0.0
                            } else {
                                g[0] * (qc - t) / (qc * (1.0 - qc)) / n
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *p, gp);
                }
                Op::SoftmaxCrossEntropy(logits, labels) => {
                    let t = self.value(*logits);
                    let (m, n) = as_matrix(t);
                    let mut gl = vec![0.0; m * n];
                    for (r, &label) in labels.iter().enumerate() {
                        let row = t.row(r);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z = row.iter().fold(0.0, |acc, v| acc + (v - max).exp());
                        for c in 0..n {
                            let p = (row[c] - max).exp() / z;
                            let target = if c == label { 1.0 } else { 0.0 };
                            gl[r * n + c] = g[0] * (p - target) / m as f64;
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: usize) -> ParamKey {
        ParamKey { owner: 1, index: i }
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let mut g = Graph::new();
        let eye = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()).unwrap();
        let b = g.constant(Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap()).unwrap();
        let ia = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(ia).values(), &[1.0, 2.0, 3.0, 4.0]);
        let ab = g.matmul(a, b).unwrap();
        assert_eq!(g.value(ab).values(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]).unwrap()).unwrap();
        let b = g.constant(Tensor::zeros(vec![2, 3]).unwrap()).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-3.5), 0.0);
        assert_eq!(Activation::Relu.apply(2.25), 2.25);
        for x in [-1e6, -50.0, 50.0, 1e6] {
            let y = Activation::Sigmoid.apply(x);
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn activation_rejects_non_finite() {
        let mut g = Graph::new();
        assert!(g.constant(Tensor::scalar(f64::NAN)).is_err());
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut g = Graph::new();
        let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 3.0, 4.0, -7.0]).unwrap();
        let xn = g.param(key(0), &x).unwrap();
        let s = g.sum(xn);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(key(0)).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn mse_gradient_vanishes_at_minimum() {
        let mut g = Graph::new();
        let x = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let xn = g.param(key(0), &x).unwrap();
        let yn = g.constant(x.clone()).unwrap();
        let l = g.mse(xn, yn).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(key(0)).unwrap(), &[0.0; 4]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(key(0), &Tensor::zeros(vec![3]).unwrap()).unwrap();
        assert!(matches!(g.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn shared_param_accumulates() {
        // loss = sum(x * x) -> grad 2x
        let mut g = Graph::new();
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let xn = g.param(key(0), &x).unwrap();
        let sq = g.mul(xn, xn).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(key(0)).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn bce_rejects_bad_targets() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::scalar(0.5)).unwrap();
        assert!(g.bce(p, vec![0.5]).is_err());
        let l = g.bce(p, vec![1.0]).unwrap();
        assert!((g.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
