use std::borrow::Cow;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::sparsela::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Largest `f64` below 1.
const SIGMOID_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
const SIGMOID_MIN: f64 = f64::MIN_POSITIVE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            // Kept inside the open interval: the plain formula rounds to
            // exactly 1 above x ≈ 37 and to 0 below x ≈ -745.
            Activation::Sigmoid => (1.0 / (1.0 + (-x).exp())).clamp(SIGMOID_MIN, SIGMOID_MAX),
            Activation::Identity => x,
        }
    }
}

enum Op<'a> {
    Leaf,
    MatMul(NodeId, NodeId),
    Spmm(&'a CsrMatrix, NodeId),
    Activation(Activation, NodeId),
    /// `mask` holds 0 for dropped entries and `1 / (1 - rate)` for kept ones.
    Dropout(NodeId, DenseMatrix),
    ConcatCols(Vec<NodeId>),
    RowScale(NodeId, NodeId),
    Bilinear { h0: NodeId, hr: NodeId, w: NodeId },
    /// `targets` are `(row, class)` pairs; `probs` holds the softmax of each
    /// target row, aligned with `targets`.
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<(usize, usize)>,
        probs: DenseMatrix,
    },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Spmm(..) => "spmm",
            Op::Activation(..) => "activation",
            Op::Dropout(..) => "dropout",
            Op::ConcatCols(..) => "concat_cols",
            Op::RowScale(..) => "row_scale",
            Op::Bilinear { .. } => "batched_bilinear",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

struct TapeNode<'a> {
    op: Op<'a>,
    value: Cow<'a, DenseMatrix>,
    requires_grad: bool,
}

/// Append-only record of a differentiable computation.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<TapeNode<'a>>,
    #[cfg(test)]
    fault: Option<(&'static str, f64)>,
}

/// Adjoints of every gradient-requiring leaf reached from the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    visited: usize,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, or zeros of `shape` when the loss does not depend
    /// on it.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> DenseMatrix {
        self.get(id).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }

    /// Number of tape nodes whose adjoint was propagated.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

fn check_finite(op: &'static str, value: &DenseMatrix) -> Result<()> {
    if value.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn accumulate(slot: &mut Option<DenseMatrix>, delta: DenseMatrix) {
    match slot {
        Some(acc) => *acc += &delta,
        None => *slot = Some(delta),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.value(id).dim()
    }

    fn push(&mut self, op: Op<'a>, value: Cow<'a, DenseMatrix>) -> Result<NodeId> {
        check_finite(op.name(), &value)?;
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::RowScale(a, b) => self.needs(*a) || self.needs(*b),
            Op::Spmm(_, x) | Op::Activation(_, x) | Op::Dropout(x, _) => self.needs(*x),
            Op::ConcatCols(parts) => parts.iter().any(|&p| self.needs(p)),
            Op::Bilinear { h0, hr, w } => self.needs(*h0) || self.needs(*hr) || self.needs(*w),
            Op::SoftmaxCrossEntropy { logits, .. } => self.needs(*logits),
        };
        self.nodes.push(TapeNode { op, value, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A trainable leaf; [`Tape::backward`] reports its gradient.
    pub fn param(&mut self, value: DenseMatrix) -> Result<NodeId> {
        let id = self.push(Op::Leaf, Cow::Owned(value))?;
        self.nodes[id.0].requires_grad = true;
        Ok(id)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Result<NodeId> {
        self.push(Op::Leaf, Cow::Owned(value))
    }

    /// A constant leaf borrowed for the lifetime of the tape.
    pub fn constant_ref(&mut self, value: &'a DenseMatrix) -> Result<NodeId> {
        self.push(Op::Leaf, Cow::Borrowed(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", av.dim(), bv.dim())));
        }
        let out = av.dot(bv);
        self.push(Op::MatMul(a, b), Cow::Owned(out))
    }

    pub fn spmm(&mut self, s: &'a CsrMatrix, x: NodeId) -> Result<NodeId> {
        let out = s.mul_dense(self.value(x).view())?;
        self.push(Op::Spmm(s, x), Cow::Owned(out))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        let out = self.value(x).mapv(|v| kind.apply(v));
        self.push(Op::Activation(kind, x), Cow::Owned(out))
    }

    /// Inverted dropout. Outside training, or with `rate == 0`, this is the
    /// identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: NodeId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = self
            .value(x)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep });
        let out = self.value(x) * &mask;
        self.push(Op::Dropout(x, mask), Cow::Owned(out))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let rows = self.value(first).nrows();
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).nrows() != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("row counts {} and {}", rows, self.value(bad).nrows()),
            ));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        self.push(Op::ConcatCols(parts.to_vec()), Cow::Owned(out))
    }

    /// `Y[i, :] = s[i] · X[i, :]` for an `N × d` input and an `N × 1` scale.
    pub fn row_scale(&mut self, x: NodeId, scale: NodeId) -> Result<NodeId> {
        let (xv, sv) = (self.value(x), self.value(scale));
        if sv.dim() != (xv.nrows(), 1) {
            return Err(Error::shape("row_scale", format!("{:?} by {:?}", xv.dim(), sv.dim())));
        }
        let out = xv * sv;
        self.push(Op::RowScale(x, scale), Cow::Owned(out))
    }

    /// Row-wise bilinear form `out[i] = h0[i, :] · W · hr[i, :]ᵀ`.
    pub fn batched_bilinear(&mut self, h0: NodeId, hr: NodeId, w: NodeId) -> Result<NodeId> {
        let (h0v, hrv, wv) = (self.value(h0), self.value(hr), self.value(w));
        if h0v.nrows() != hrv.nrows() || wv.dim() != (h0v.ncols(), hrv.ncols()) {
            return Err(Error::shape(
                "batched_bilinear",
                format!("h0 {:?}, hr {:?}, W {:?}", h0v.dim(), hrv.dim(), wv.dim()),
            ));
        }
        let projected = hrv.dot(&wv.t());
        let out = (h0v * &projected).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::Bilinear { h0, hr, w }, Cow::Owned(out))
    }

    /// Summed (not averaged) cross-entropy of the softmax of `logits` over
    /// the `(row, class)` targets. Returns a `1 × 1` node.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &[(usize, usize)]) -> Result<NodeId> {
        if targets.is_empty() {
            return Err(Error::invalid("cross-entropy mask is empty"));
        }
        let lv = self.value(logits);
        let (n, classes) = lv.dim();
        let mut probs = Array2::zeros((targets.len(), classes));
        let mut loss = 0.0;
        for (k, &(row, label)) in targets.iter().enumerate() {
            if row >= n || label >= classes {
                return Err(Error::invalid(format!(
                    "target (node {row}, class {label}) outside logits {n}x{classes}"
                )));
            }
            let z = lv.row(row);
            let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut p = probs.row_mut(k);
            Zip::from(&mut p).and(&z).for_each(|p, &v| *p = (v - max).exp());
            let total: f64 = p.sum();
            p /= total;
            loss += max + total.ln() - z[label];
        }
        let op = Op::SoftmaxCrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        self.push(op, Cow::Owned(Array2::from_elem((1, 1), loss)))
    }

    /// Reverse sweep from a `1 × 1` loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::shape("backward", format!("loss is {:?}, expected 1x1", self.shape(loss))));
        }
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Array2::ones((1, 1)));
        let mut visited = 0;

        for k in (0..=loss.0).rev() {
            let node = &self.nodes[k];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[k].take() else { continue };
            visited += 1;
            let mut contributions: Vec<(NodeId, DenseMatrix)> = Vec::with_capacity(2);
            match &node.op {
                Op::Leaf => {
                    grads[k] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        contributions.push((*a, g.dot(&self.value(*b).t())));
                    }
                    if self.needs(*b) {
                        contributions.push((*b, self.value(*a).t().dot(&g)));
                    }
                }
                Op::Spmm(s, x) => contributions.push((*x, s.transpose_mul_dense(g.view())?)),
                Op::Activation(kind, x) => {
                    let dx = match kind {
                        Activation::Relu => {
                            let mut dx = g;
                            Zip::from(&mut dx)
                                .and(self.value(*x))
                                .for_each(|d, &v| if v <= 0.0 { *d = 0.0 });
                            dx
                        }
                        Activation::Sigmoid => {
                            let mut dx = g;
                            Zip::from(&mut dx)
                                .and(node.value.as_ref())
                                .for_each(|d, &y| *d *= y * (1.0 - y));
                            dx
                        }
                        Activation::Identity => g,
                    };
                    contributions.push((*x, dx));
                }
                Op::Dropout(x, mask) => contributions.push((*x, g * mask)),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).ncols();
                        if self.needs(p) {
                            contributions.push((p, g.slice(s![.., offset..offset + width]).to_owned()));
                        }
                        offset += width;
                    }
                }
                Op::RowScale(x, scale) => {
                    let sv = self.value(*scale);
                    if self.needs(*scale) {
                        let ds = (self.value(*x) * &g).sum_axis(Axis(1)).insert_axis(Axis(1));
                        contributions.push((*scale, ds));
                    }
                    if self.needs(*x) {
                        contributions.push((*x, g * sv));
                    }
                }
                Op::Bilinear { h0, hr, w } => {
                    let (h0v, hrv, wv) = (self.value(*h0), self.value(*hr), self.value(*w));
                    if self.needs(*h0) {
                        contributions.push((*h0, hrv.dot(&wv.t()) * &g));
                    }
                    if self.needs(*hr) {
                        contributions.push((*hr, h0v.dot(wv) * &g));
                    }
                    if self.needs(*w) {
                        let weighted = h0v * &g;
                        contributions.push((*w, weighted.t().dot(hrv)));
                    }
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let upstream = g[[0, 0]];
                    let mut dl = Array2::zeros(self.shape(*logits));
                    for (k, &(row, label)) in targets.iter().enumerate() {
                        let mut d = dl.row_mut(row);
                        d.scaled_add(upstream, &probs.row(k));
                        d[label] -= upstream;
                    }
                    contributions.push((*logits, dl));
                }
            }
            #[cfg(test)]
            if let Some((op, factor)) = self.fault {
                if op == node.op.name() {
                    for (_, d) in &mut contributions {
                        *d *= factor;
                    }
                }
            }
            for (input, delta) in contributions {
                accumulate(&mut adj[input.0], delta);
            }
        }
        Ok(Gradients { grads, visited })
    }

    /// Scales every adjoint produced by `op` so that gradient checks can be
    /// shown to catch a broken backward rule.
    #[cfg(test)]
    pub(crate) fn corrupt_adjoint(&mut self, op: &'static str, factor: f64) {
        self.fault = Some((op, factor));
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    use super::*;
    use crate::diffcore::{finite_diff_check, numeric_gradient};

    const STEP: f64 = 1e-5;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-1.0, 1.0).unwrap();
        Array2::from_shape_fn((rows, cols), |_| dist.sample(&mut rng))
    }

    /// Moves entries away from the relu kink.
    fn nudged(m: DenseMatrix) -> DenseMatrix {
        m.mapv(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
    }

    /// Reduces a node to a scalar with fixed random weights so every output
    /// entry influences the loss differently.
    fn probe<'a>(tape: &mut Tape<'a>, y: NodeId, seed: u64) -> NodeId {
        let (r, c) = tape.shape(y);
        let weights = tape.constant(random(c, 1, seed)).unwrap();
        let col = tape.matmul(y, weights).unwrap();
        let ones = tape.constant(random(1, r, seed + 1)).unwrap();
        tape.matmul(ones, col).unwrap()
    }

    /// Builds `f(params)` on a fresh tape, compares backward against central
    /// differences and returns the worst relative error.
    fn check<'s, F>(params: Vec<DenseMatrix>, build: F) -> f64
    where
        F: Fn(&mut Tape<'s>, &[NodeId]) -> NodeId,
    {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = params.iter().map(|p| tape.param(p.clone()).unwrap()).collect();
        let out = build(&mut tape, &ids);
        let loss = probe(&mut tape, out, 99);
        let grads = tape.backward(loss).unwrap();
        let analytic: Vec<DenseMatrix> =
            ids.iter().zip(&params).map(|(&id, p)| grads.get_or_zeros(id, p.dim())).collect();
        let f = |ps: &[DenseMatrix]| {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = ps.iter().map(|p| tape.param(p.clone()).unwrap()).collect();
            let out = build(&mut tape, &ids);
            let loss = probe(&mut tape, out, 99);
            Ok(tape.value(loss)[[0, 0]])
        };
        finite_diff_check(f, &params, &analytic, STEP).unwrap()
    }

    #[test]
    fn matmul_identity_and_scalar_rule() {
        let mut tape = Tape::new();
        let a = tape.param(array![[3.0]]).unwrap();
        let b = tape.param(array![[4.0]]).unwrap();
        let c = tape.matmul(a, b).unwrap();
        let g = tape.backward(c).unwrap();
        assert_eq!(g.get(a).unwrap()[[0, 0]], 4.0);
        assert_eq!(g.get(b).unwrap()[[0, 0]], 3.0);

        let mut tape = Tape::new();
        let a = tape.param(random(3, 3, 1)).unwrap();
        let i = tape.constant(Array2::eye(3)).unwrap();
        let c = tape.matmul(a, i).unwrap();
        assert_eq!(tape.value(c), tape.value(a));
        let bad = tape.constant(Array2::eye(2)).unwrap();
        assert!(matches!(tape.matmul(a, bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let err = check(vec![random(3, 4, 1), random(4, 2, 2)], |t, p| t.matmul(p[0], p[1]).unwrap());
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn spmm_gradient_and_star_adjoint() {
        let s = CsrMatrix::from_triplets(4, 4, [(0, 1, 1. / 3.), (0, 2, 1. / 3.), (0, 3, 1. / 3.), (1, 0, 1.), (2, 0, 1.), (3, 0, 1.)])
            .unwrap();
        let err = check(vec![random(4, 3, 5)], |t, p| t.spmm(&s, p[0]).unwrap());
        assert!(err < 1e-7, "{err}");

        // Only the centre row receives a uniform upstream gradient: each leaf
        // gets 1/deg(centre) of it.
        let mut tape = Tape::new();
        let x = tape.param(random(4, 2, 6)).unwrap();
        let y = tape.spmm(&s, x).unwrap();
        let pick = tape.constant(array![[1.0, 0.0, 0.0, 0.0]]).unwrap();
        let row = tape.matmul(pick, y).unwrap();
        let ones = tape.constant(Array2::ones((2, 1))).unwrap();
        let loss = tape.matmul(row, ones).unwrap();
        let g = tape.backward(loss).unwrap();
        let dx = g.get(x).unwrap();
        for leaf in 1..4 {
            for j in 0..2 {
                assert!((dx[[leaf, j]] - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert_eq!(dx.row(0).sum(), 0.0);
    }

    #[test]
    fn activation_values_and_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(array![[-1.0, 0.0]]).unwrap();
        let r = tape.activation(x, Activation::Relu).unwrap();
        assert_eq!(tape.value(r), &array![[0.0, 0.0]]);
        let w = tape.constant(array![[1.0], [1.0]]).unwrap();
        let loss = tape.matmul(r, w).unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(x).unwrap(), &array![[0.0, 0.0]]);

        let mut tape = Tape::new();
        let x = tape.param(array![[0.0]]).unwrap();
        let y = tape.activation(x, Activation::Sigmoid).unwrap();
        assert_eq!(tape.value(y)[[0, 0]], 0.5);
        assert_eq!(tape.backward(y).unwrap().get(x).unwrap()[[0, 0]], 0.25);

        let mut tape = Tape::new();
        let x = tape.param(array![[2.5]]).unwrap();
        let y = tape.activation(x, Activation::Identity).unwrap();
        assert_eq!(tape.value(y)[[0, 0]], 2.5);
        assert_eq!(tape.backward(y).unwrap().get(x).unwrap()[[0, 0]], 1.0);

        let (hi, lo) = (Activation::Sigmoid.apply(800.0), Activation::Sigmoid.apply(-800.0));
        assert!(hi < 1.0 && hi > 0.9999);
        assert!(lo > 0.0 && lo < 1e-300);

        for kind in [Activation::Relu, Activation::Sigmoid, Activation::Identity] {
            let err = check(vec![nudged(random(4, 3, 7))], |t, p| t.activation(p[0], kind).unwrap());
            assert!(err < 1e-7, "{kind:?}: {err}");
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.param(random(3, 3, 1)).unwrap();
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.6, false, &mut rng).unwrap(), x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rate = 0.6;
        let input = 2.0;
        let trials = 10_000;
        let mut tape = Tape::new();
        let x = tape.constant(Array2::from_elem((1, trials), input)).unwrap();
        let y = tape.dropout(x, rate, true, &mut rng).unwrap();
        let mean = tape.value(y).mean().unwrap();
        // Each output is input/(1-rate) with prob (1-rate), else 0.
        let sd = input * (rate / (1.0 - rate)).sqrt() / (trials as f64).sqrt();
        assert!((mean - input).abs() < 3.0 * sd, "mean {mean}, sd {sd}");
    }

    #[test]
    fn dropout_reuses_mask_in_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.param(Array2::ones((2, 5))).unwrap();
        let y = tape.dropout(x, 0.5, true, &mut rng).unwrap();
        let loss = probe(&mut tape, y, 1);
        let g = tape.backward(loss).unwrap();
        let dx = g.get(x).unwrap();
        Zip::from(dx).and(tape.value(y)).for_each(|&d, &v| assert_eq!(d == 0.0, v == 0.0));
    }

    #[test]
    fn concat_shapes_and_gradient() {
        let mut tape = Tape::new();
        let parts: Vec<NodeId> = (0..3).map(|i| tape.param(random(2, 8, i)).unwrap()).collect();
        let c = tape.concat_cols(&parts).unwrap();
        assert_eq!(tape.shape(c), (2, 24));
        let single = tape.concat_cols(&parts[..1]).unwrap();
        assert_eq!(tape.value(single), tape.value(parts[0]));
        let odd = tape.param(random(3, 1, 9)).unwrap();
        assert!(tape.concat_cols(&[parts[0], odd]).is_err());

        let err = check(vec![random(3, 2, 1), random(3, 4, 2), random(3, 1, 3)], |t, p| {
            t.concat_cols(p).unwrap()
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn row_scale_forced_cases() {
        let mut tape = Tape::new();
        let x = tape.param(random(5, 3, 1)).unwrap();
        let ones = tape.param(Array2::ones((5, 1))).unwrap();
        let y = tape.row_scale(x, ones).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let zeros = tape.param(Array2::zeros((5, 1))).unwrap();
        let y = tape.row_scale(x, zeros).unwrap();
        assert!(tape.value(y).iter().all(|&v| v == 0.0));
        let dy = random(3, 1, 77);
        let w = tape.constant(dy.clone()).unwrap();
        let col = tape.matmul(y, w).unwrap();
        let sum = tape.constant(Array2::ones((1, 5))).unwrap();
        let loss = tape.matmul(sum, col).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).unwrap().iter().all(|&v| v == 0.0));
        // dY[i, :] = dyᵀ for every row, so ds[i] = <X[i], dyᵀ>.
        let want = tape.value(x).dot(&dy);
        let ds = g.get(zeros).unwrap();
        for i in 0..5 {
            assert!((ds[[i, 0]] - want[[i, 0]]).abs() < 1e-15);
        }
    }

    #[test]
    fn row_scale_gradient() {
        let err = check(vec![random(5, 3, 1), random(5, 1, 2)], |t, p| t.row_scale(p[0], p[1]).unwrap());
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn bilinear_forced_cases() {
        let mut tape = Tape::new();
        let h = tape.constant(Array2::eye(3)).unwrap();
        let zero = tape.param(Array2::zeros((3, 3))).unwrap();
        let out = tape.batched_bilinear(h, h, zero).unwrap();
        assert!(tape.value(out).iter().all(|&v| v == 0.0));
        let eye = tape.param(Array2::eye(3)).unwrap();
        let out = tape.batched_bilinear(h, h, eye).unwrap();
        assert_eq!(tape.value(out), &Array2::<f64>::ones((3, 1)));
        let wrong = tape.param(Array2::eye(2)).unwrap();
        assert!(tape.batched_bilinear(h, h, wrong).is_err());
    }

    #[test]
    fn bilinear_gradients_match_finite_differences() {
        let err = check(vec![random(5, 4, 1), random(5, 4, 2), random(4, 4, 3)], |t, p| {
            t.batched_bilinear(p[0], p[1], p[2]).unwrap()
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::new();
        let logits = tape.param(Array2::zeros((3, 7))).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[(1, 4)]).unwrap();
        assert!((tape.value(loss)[[0, 0]] - 7f64.ln()).abs() < 1e-12);
        assert!((tape.value(loss)[[0, 0]] - 1.945910).abs() < 1e-6);

        let confident = tape.param(array![[50.0, 0.0, 0.0]]).unwrap();
        let loss = tape.softmax_cross_entropy(confident, &[(0, 0)]).unwrap();
        assert!(tape.value(loss)[[0, 0]] < 1e-20);

        assert!(tape.softmax_cross_entropy(logits, &[]).is_err());
        assert!(tape.softmax_cross_entropy(logits, &[(0, 7)]).is_err());

        // Large logits must not overflow.
        let big = tape.param(array![[1000.0, 0.0]]).unwrap();
        let loss = tape.softmax_cross_entropy(big, &[(0, 1)]).unwrap();
        assert!((tape.value(loss)[[0, 0]] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_gradient() {
        let targets = [(0, 2), (3, 0)];
        let logits = array![[0.3, -1.2, 2.0], [9.0, 9.0, 9.0], [0.0, 0.1, 0.2], [1.5, 0.5, -0.5]];
        let mut tape = Tape::new();
        let id = tape.param(logits.clone()).unwrap();
        let loss = tape.softmax_cross_entropy(id, &targets).unwrap();
        let analytic = vec![tape.backward(loss).unwrap().get(id).unwrap().clone()];
        assert!(analytic[0].row(1).iter().all(|&v| v == 0.0));
        let f = |ps: &[DenseMatrix]| {
            let mut tape = Tape::new();
            let id = tape.param(ps[0].clone())?;
            let loss = tape.softmax_cross_entropy(id, &targets)?;
            Ok(tape.value(loss)[[0, 0]])
        };
        let numeric = numeric_gradient(f, std::slice::from_ref(&logits), STEP).unwrap();
        let err = crate::diffcore::max_relative_error(&analytic, &numeric);
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn parameter_reuse_sums_branches() {
        let mut tape = Tape::new();
        let w = tape.param(array![[2.0]]).unwrap();
        let a = tape.constant(array![[3.0]]).unwrap();
        let b = tape.constant(array![[5.0]]).unwrap();
        let left = tape.matmul(a, w).unwrap();
        let right = tape.matmul(b, w).unwrap();
        let both = tape.concat_cols(&[left, right]).unwrap();
        let ones = tape.constant(array![[1.0], [1.0]]).unwrap();
        let loss = tape.matmul(both, ones).unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(w).unwrap()[[0, 0]], 8.0);
    }

    #[test]
    fn backward_requires_scalar_and_visits_each_node_once() {
        let mut tape = Tape::new();
        let x = tape.param(random(2, 2, 1)).unwrap();
        let y = tape.activation(x, Activation::Sigmoid).unwrap();
        assert!(tape.backward(y).is_err());
        let loss = probe(&mut tape, y, 3);
        let g = tape.backward(loss).unwrap();
        assert!(g.visited() <= tape.len());
        // x, sigmoid, two matmuls in the probe
        assert_eq!(g.visited(), 4);
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::new();
        assert!(matches!(tape.param(array![[f64::NAN]]), Err(Error::NonFinite { .. })));
        let x = tape.param(array![[1e300]]).unwrap();
        assert!(matches!(tape.matmul(x, x), Err(Error::NonFinite { op: "matmul" })));
    }

    #[test]
    fn backward_is_bit_reproducible() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.param(random(6, 5, 1)).unwrap();
            let b = tape.param(random(5, 5, 2)).unwrap();
            let h = tape.matmul(a, b).unwrap();
            let s = tape.batched_bilinear(h, h, b).unwrap();
            let s = tape.activation(s, Activation::Sigmoid).unwrap();
            let y = tape.row_scale(h, s).unwrap();
            let loss = tape.softmax_cross_entropy(y, &[(0, 1), (4, 3)]).unwrap();
            let g = tape.backward(loss).unwrap();
            (g.get(a).unwrap().clone(), g.get(b).unwrap().clone())
        };
        assert_eq!(run(), run());
    }
}
