//! Tape-based reverse-mode automatic differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep.

use super::{NumericsError, Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Shape and masking information for the fused multi-head attention op.
#[derive(Clone, Debug)]
pub struct AttentionSpec {
    pub batch: usize,
    pub q_len: usize,
    pub kv_len: usize,
    pub heads: usize,
    /// Query `i` may only see keys `j <= i`.
    pub causal: bool,
    /// `batch * kv_len` flags; `true` marks a padded key that receives no weight.
    pub key_padding: Vec<bool>,
}

#[derive(Debug)]
enum Op<T: Scalar> {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: T },
    Softmax { a: NodeId, outer: usize, axis: usize, inner: usize },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, rstd: Vec<T> },
    Embedding { table: NodeId, ids: Vec<usize> },
    Relu { a: NodeId },
    Gelu { a: NodeId },
    Concat { parts: Vec<NodeId>, outer: usize, inner: usize, widths: Vec<usize> },
    Transpose { a: NodeId, batch: usize, rows: usize, cols: usize },
    MaskedFill { a: NodeId, mask: Vec<bool> },
    Attention { q: NodeId, k: NodeId, v: NodeId, spec: AttentionSpec, probs: Vec<T> },
    Sum { a: NodeId },
    CrossEntropy { logits: NodeId, targets: Vec<usize>, weights: Vec<T>, smoothing: T, probs: Vec<T> },
}

#[derive(Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// A single forward computation and its reverse sweep.
#[derive(Debug)]
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

fn mismatch(op: &'static str, detail: String) -> NumericsError {
    NumericsError::ShapeMismatch { op, detail }
}

fn accumulate<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
    slot.get_or_insert_with(|| vec![T::zero(); len])
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit(std::f64::consts::FRAC_2_PI.sqrt());
    let a = T::lit(0.044715);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(std::f64::consts::FRAC_2_PI.sqrt());
    let a = T::lit(0.044715);
    let half = T::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    let du = c * (T::one() + T::lit(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), backward_done: false }
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf; its gradient is available after `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Sign pattern (`x > 0`) of every ReLU input, in tape order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu { a } => Some(a),
                _ => None,
            })
            .flat_map(|a| self.value(a).data().iter().map(|&x| x > T::zero()))
            .collect()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, T::zero());
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b }, needs))
    }

    /// `x·w + b` over the last axis of `x`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, NumericsError> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape();
        let d_in = *xs.last().unwrap_or(&0);
        if ws.len() != 2 || ws[0] != d_in {
            return Err(mismatch("linear", format!("{xs:?} x {ws:?}")));
        }
        let d_out = ws[1];
        if let Some(b) = b {
            if self.value(b).len() != d_out {
                return Err(mismatch("linear", format!("bias {:?} for width {d_out}", self.value(b).shape())));
            }
        }
        let rows = self.value(x).leading();
        let mut out = vec![T::zero(); rows * d_out];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_exact_mut(d_out) {
                row.copy_from_slice(bias);
            }
        }
        T::gemm(
            rows,
            d_in,
            d_out,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            &mut out,
            if b.is_some() { T::one() } else { T::zero() },
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = d_out;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch("add", format!("{:?} + {:?}", self.value(a).shape(), self.value(b).shape())));
        }
        let out: Vec<T> = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { a, b }, needs))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch("mul", format!("{:?} * {:?}", self.value(a).shape(), self.value(b).shape())));
        }
        let out: Vec<T> = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, a: NodeId, factor: T) -> NodeId {
        let v = self.value(a);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| x * factor).collect()).expect("same shape");
        let needs = self.needs(a);
        self.push(out, Op::Scale { a, factor }, needs)
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let shape = self.value(a).shape().to_vec();
        if axis >= shape.len() {
            return Err(mismatch("softmax", format!("axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.value(a).data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut max = T::neg_infinity();
                for j in 0..len {
                    max = max.max(x[base + j * inner]);
                }
                let mut sum = T::zero();
                for j in 0..len {
                    let e = (x[base + j * inner] - max).exp();
                    out[base + j * inner] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[base + j * inner] /= sum;
                }
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { a, outer, axis: len, inner }, needs))
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta`.
    /// A constant row normalizes to all zeros before the affine step.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId, NumericsError> {
        let d = self.value(x).last_dim();
        if self.value(gamma).len() != d || self.value(beta).len() != d {
            return Err(mismatch("layer_norm", format!("width {d} with gamma/beta {}", self.value(gamma).len())));
        }
        let rows = self.value(x).leading();
        let xs = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); xs.len()];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / T::lit(d as f64);
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::lit(d as f64);
            let s = T::one() / (var + T::lit(LAYER_NORM_EPS)).sqrt();
            for j in 0..d {
                out[r * d + j] = (row[j] - mean) * s * g[j] + b[j];
            }
            rstd.push(s);
        }
        let shape = self.value(x).shape().to_vec();
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Tensor::new(shape, out)?, Op::LayerNorm { x, gamma, beta, rstd }, needs))
    }

    /// Gathers rows of a `[vocab, d]` table.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, NumericsError> {
        let ts = self.value(table).shape();
        if ts.len() != 2 {
            return Err(mismatch("embedding", format!("table {ts:?}")));
        }
        let (vocab, d) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(NumericsError::IndexOutOfRange { index: bad, bound: vocab });
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let needs = self.needs(table);
        Ok(self.push(Tensor::new(vec![ids.len(), d], out)?, Op::Embedding { table, ids: ids.to_vec() }, needs))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let out =
            Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| x.max(T::zero())).collect()).expect("same shape");
        let needs = self.needs(a);
        self.push(out, Op::Relu { a }, needs)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| gelu(x)).collect()).expect("same shape");
        let needs = self.needs(a);
        self.push(out, Op::Gelu { a }, needs)
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, NumericsError> {
        let first = self.value(*parts.first().ok_or_else(|| mismatch("concat", "no inputs".into()))?).shape().to_vec();
        if axis >= first.len() {
            return Err(mismatch("concat", format!("axis {axis} of {first:?}")));
        }
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            let compatible =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(mismatch("concat", format!("{s:?} vs {first:?} on axis {axis}")));
            }
            widths.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = widths.iter().copied().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[o * w * inner..(o + 1) * w * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat { parts: parts.to_vec(), outer, inner, widths }, needs))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let shape = self.value(a).shape().to_vec();
        if shape.len() < 2 {
            return Err(mismatch("transpose", format!("{shape:?}")));
        }
        let rows = shape[shape.len() - 2];
        let cols = shape[shape.len() - 1];
        let batch: usize = shape[..shape.len() - 2].iter().product();
        let x = self.value(a).data();
        let mut out = vec![T::zero(); x.len()];
        for b in 0..batch {
            let off = b * rows * cols;
            for i in 0..rows {
                for j in 0..cols {
                    out[off + j * rows + i] = x[off + i * cols + j];
                }
            }
        }
        let mut new_shape = shape;
        let n = new_shape.len();
        new_shape.swap(n - 1, n - 2);
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(new_shape, out)?, Op::Transpose { a, batch, rows, cols }, needs))
    }

    /// Replaces masked entries with `value`; no gradient flows through them.
    pub fn masked_fill(&mut self, a: NodeId, mask: &[bool], value: T) -> Result<NodeId, NumericsError> {
        if mask.len() != self.value(a).len() {
            return Err(mismatch("masked_fill", format!("mask of {} for {:?}", mask.len(), self.value(a).shape())));
        }
        let v = self.value(a);
        let out: Vec<T> = v.data().iter().zip(mask).map(|(&x, &m)| if m { value } else { x }).collect();
        let shape = v.shape().to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::MaskedFill { a, mask: mask.to_vec() }, needs))
    }

    /// Fused scaled dot-product multi-head attention.
    ///
    /// `q` is `[batch*q_len, d]`, `k` and `v` are `[batch*kv_len, d]`; heads
    /// split the last axis into contiguous slices. Masked keys get exactly
    /// zero weight, and a query with no visible key outputs zeros.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, spec: AttentionSpec) -> Result<NodeId, NumericsError> {
        let d = self.value(q).last_dim();
        let AttentionSpec { batch, q_len, kv_len, heads, causal, .. } = spec;
        let ok = heads > 0
            && d % heads == 0
            && self.value(q).shape() == [batch * q_len, d]
            && self.value(k).shape() == [batch * kv_len, d]
            && self.value(v).shape() == [batch * kv_len, d]
            && spec.key_padding.len() == batch * kv_len;
        if !ok {
            return Err(mismatch(
                "attention",
                format!(
                    "q {:?} k {:?} v {:?} batch {batch} q_len {q_len} kv_len {kv_len} heads {heads}",
                    self.value(q).shape(),
                    self.value(k).shape(),
                    self.value(v).shape()
                ),
            ));
        }
        let dh = d / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![T::zero(); batch * heads * q_len * kv_len];
        let mut out = vec![T::zero(); batch * q_len * d];
        let mut scores = vec![T::zero(); kv_len];
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..q_len {
                    let qrow = &qd[(b * q_len + i) * d + h * dh..][..dh];
                    let mut max = T::neg_infinity();
                    for j in 0..kv_len {
                        let visible = !spec.key_padding[b * kv_len + j] && !(causal && j > i);
                        if visible {
                            let krow = &kd[(b * kv_len + j) * d + h * dh..][..dh];
                            let s = qrow.iter().zip(krow).map(|(&x, &y)| x * y).sum::<T>() * scale;
                            scores[j] = s;
                            max = max.max(s);
                        } else {
                            scores[j] = T::neg_infinity();
                        }
                    }
                    if max == T::neg_infinity() {
                        continue;
                    }
                    let p = &mut probs[((b * heads + h) * q_len + i) * kv_len..][..kv_len];
                    let mut sum = T::zero();
                    for j in 0..kv_len {
                        if scores[j] != T::neg_infinity() {
                            let e = (scores[j] - max).exp();
                            p[j] = e;
                            sum += e;
                        }
                    }
                    let orow = &mut out[(b * q_len + i) * d + h * dh..][..dh];
                    for j in 0..kv_len {
                        if p[j] == T::zero() {
                            continue;
                        }
                        p[j] /= sum;
                        let vrow = &vd[(b * kv_len + j) * d + h * dh..][..dh];
                        for (o, x) in orow.iter_mut().zip(vrow) {
                            *o += p[j] * *x;
                        }
                    }
                }
            }
        }
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        Ok(self.push(Tensor::new(vec![batch * q_len, d], out)?, Op::Attention { q, k, v, spec, probs }, needs))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: T = self.value(a).data().iter().copied().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum { a }, needs)
    }

    /// Weighted, label-smoothed cross-entropy summed over rows of `[n, vocab]`
    /// logits: `Σ_i w_i · (−Σ_v q_i(v) log p_i(v))` with
    /// `q_i = (1−ε)·onehot(target_i) + ε/V`. Rows with weight 0 contribute
    /// nothing, which is how padding is excluded.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: &[T],
        smoothing: T,
    ) -> Result<NodeId, NumericsError> {
        if !(smoothing >= T::zero() && smoothing < T::one()) {
            return Err(NumericsError::InvalidArgument(format!("label smoothing {smoothing:?} outside [0,1)")));
        }
        let shape = self.value(logits).shape();
        if shape.len() != 2 || shape[0] != targets.len() || weights.len() != targets.len() {
            return Err(mismatch(
                "cross_entropy",
                format!("logits {shape:?}, {} targets, {} weights", targets.len(), weights.len()),
            ));
        }
        let vocab = shape[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(NumericsError::IndexOutOfRange { index: bad, bound: vocab });
        }
        let x = self.value(logits).data();
        let mut probs = vec![T::zero(); x.len()];
        let mut total = T::zero();
        let off = smoothing / T::lit(vocab as f64);
        for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            let row = &x[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            let p = &mut probs[r * vocab..(r + 1) * vocab];
            for (pv, &v) in p.iter_mut().zip(row) {
                *pv = (v - log_z).exp();
            }
            if w == T::zero() {
                continue;
            }
            // −Σ q log p = log_z − Σ q·x
            let mut qx = (T::one() - smoothing) * row[t];
            if smoothing > T::zero() {
                qx += off * row.iter().copied().sum::<T>();
            }
            total += w * (log_z - qx);
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy { logits, targets: targets.to_vec(), weights: weights.to_vec(), smoothing, probs },
            needs,
        ))
    }

    /// Populates gradients of `loss` with respect to every node that needs one.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        if self.backward_done {
            return Err(NumericsError::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if self.nodes[idx].needs_grad {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let need = |id: NodeId| self.nodes[id.0].needs_grad;
        let len = |id: NodeId| self.nodes[id.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if need(*a) {
                    let ga = accumulate(&mut grads[a.0], m * k);
                    T::gemm(m, n, k, g, false, self.value(*b).data(), true, ga, T::one());
                }
                if need(*b) {
                    let gb = accumulate(&mut grads[b.0], k * n);
                    T::gemm(k, m, n, self.value(*a).data(), true, g, false, gb, T::one());
                }
            }
            Op::Linear { x, w, b } => {
                let ws = self.value(*w).shape();
                let (d_in, d_out) = (ws[0], ws[1]);
                let rows = self.value(*x).leading();
                if need(*x) {
                    let gx = accumulate(&mut grads[x.0], rows * d_in);
                    T::gemm(rows, d_out, d_in, g, false, self.value(*w).data(), true, gx, T::one());
                }
                if need(*w) {
                    let gw = accumulate(&mut grads[w.0], d_in * d_out);
                    T::gemm(d_in, rows, d_out, self.value(*x).data(), true, g, false, gw, T::one());
                }
                if let Some(b) = b.filter(|b| need(*b)) {
                    let gb = accumulate(&mut grads[b.0], d_out);
                    for row in g.chunks_exact(d_out) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += *v;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for id in [*a, *b] {
                    if need(id) {
                        let ga = accumulate(&mut grads[id.0], g.len());
                        for (acc, v) in ga.iter_mut().zip(g) {
                            *acc += *v;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                for (id, other) in [(*a, *b), (*b, *a)] {
                    if need(id) {
                        let o = self.value(other).data();
                        let ga = accumulate(&mut grads[id.0], g.len());
                        for ((acc, v), y) in ga.iter_mut().zip(g).zip(o) {
                            *acc += *v * *y;
                        }
                    }
                }
            }
            Op::Scale { a, factor } => {
                let ga = accumulate(&mut grads[a.0], g.len());
                for (acc, v) in ga.iter_mut().zip(g) {
                    *acc += *v * *factor;
                }
            }
            Op::Softmax { a, outer, axis, inner } => {
                let y = node.value.data();
                let ga = accumulate(&mut grads[a.0], g.len());
                for o in 0..*outer {
                    for i in 0..*inner {
                        let base = o * axis * inner + i;
                        let dot: T = (0..*axis).map(|j| g[base + j * inner] * y[base + j * inner]).sum();
                        for j in 0..*axis {
                            let p = base + j * inner;
                            ga[p] += y[p] * (g[p] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, rstd } => {
                let d = self.value(*x).last_dim();
                let xs = self.value(*x).data();
                let gm = self.value(*gamma).data();
                let rows = rstd.len();
                let mut xhat = vec![T::zero(); d];
                let mut dxhat = vec![T::zero(); d];
                let mut gg = need(*gamma).then(|| vec![T::zero(); d]);
                let mut gb = need(*beta).then(|| vec![T::zero(); d]);
                let mut gx = need(*x).then(|| vec![T::zero(); xs.len()]);
                for r in 0..rows {
                    let row = &xs[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let mean = row.iter().copied().sum::<T>() / T::lit(d as f64);
                    for j in 0..d {
                        xhat[j] = (row[j] - mean) * rstd[r];
                        dxhat[j] = gr[j] * gm[j];
                    }
                    if let Some(gg) = gg.as_mut() {
                        for j in 0..d {
                            gg[j] += gr[j] * xhat[j];
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for j in 0..d {
                            gb[j] += gr[j];
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        let m1 = dxhat.iter().copied().sum::<T>() / T::lit(d as f64);
                        let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / T::lit(d as f64);
                        for j in 0..d {
                            gx[r * d + j] += rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                }
                for (id, part) in [(*gamma, gg), (*beta, gb), (*x, gx)] {
                    if let Some(part) = part {
                        let acc = accumulate(&mut grads[id.0], part.len());
                        for (a, v) in acc.iter_mut().zip(&part) {
                            *a += *v;
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.value(*table).last_dim();
                let gt = accumulate(&mut grads[table.0], len(*table));
                for (r, &i) in ids.iter().enumerate() {
                    for (acc, v) in gt[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                        *acc += *v;
                    }
                }
            }
            Op::Relu { a } => {
                let x = self.value(*a).data();
                let ga = accumulate(&mut grads[a.0], g.len());
                for ((acc, v), &xv) in ga.iter_mut().zip(g).zip(x) {
                    if xv > T::zero() {
                        *acc += *v;
                    }
                }
            }
            Op::Gelu { a } => {
                let x = self.value(*a).data();
                let ga = accumulate(&mut grads[a.0], g.len());
                for ((acc, v), &xv) in ga.iter_mut().zip(g).zip(x) {
                    *acc += *v * gelu_grad(xv);
                }
            }
            Op::Concat { parts, outer, inner, widths } => {
                let total: usize = widths.iter().copied().sum();
                let mut offset = 0;
                for (&p, &w) in parts.iter().zip(widths) {
                    if need(p) {
                        let gp = accumulate(&mut grads[p.0], outer * w * inner);
                        for o in 0..*outer {
                            let src = &g[(o * total + offset) * inner..][..w * inner];
                            for (acc, v) in gp[o * w * inner..][..w * inner].iter_mut().zip(src) {
                                *acc += *v;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Transpose { a, batch, rows, cols } => {
                let ga = accumulate(&mut grads[a.0], g.len());
                for b in 0..*batch {
                    let off = b * rows * cols;
                    for i in 0..*rows {
                        for j in 0..*cols {
                            ga[off + i * cols + j] += g[off + j * rows + i];
                        }
                    }
                }
            }
            Op::MaskedFill { a, mask } => {
                let ga = accumulate(&mut grads[a.0], g.len());
                for ((acc, v), &m) in ga.iter_mut().zip(g).zip(mask) {
                    if !m {
                        *acc += *v;
                    }
                }
            }
            Op::Attention { q, k, v, spec, probs } => {
                self.attention_backward(g, *q, *k, *v, spec, probs, grads);
            }
            Op::Sum { a } => {
                let ga = accumulate(&mut grads[a.0], len(*a));
                for acc in ga.iter_mut() {
                    *acc += g[0];
                }
            }
            Op::CrossEntropy { logits, targets, weights, smoothing, probs } => {
                let vocab = self.value(*logits).last_dim();
                let smoothing = *smoothing;
                let off = smoothing / T::lit(vocab as f64);
                let gl = accumulate(&mut grads[logits.0], probs.len());
                for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                    if w == T::zero() {
                        continue;
                    }
                    let scale = g[0] * w;
                    let p = &probs[r * vocab..(r + 1) * vocab];
                    let acc = &mut gl[r * vocab..(r + 1) * vocab];
                    for (j, (a, &pv)) in acc.iter_mut().zip(p).enumerate() {
                        let q = if j == t { T::one() - smoothing + off } else { off };
                        *a += scale * (pv - q);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &[T],
        q: NodeId,
        k: NodeId,
        v: NodeId,
        spec: &AttentionSpec,
        probs: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let d = self.value(q).last_dim();
        let (batch, q_len, kv_len, heads) = (spec.batch, spec.q_len, spec.kv_len, spec.heads);
        let dh = d / heads;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut gq = vec![T::zero(); qd.len()];
        let mut gk = vec![T::zero(); kd.len()];
        let mut gv = vec![T::zero(); vd.len()];
        let mut dp = vec![T::zero(); kv_len];
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..q_len {
                    let p = &probs[((b * heads + h) * q_len + i) * kv_len..][..kv_len];
                    let go = &g[(b * q_len + i) * d + h * dh..][..dh];
                    let mut dot = T::zero();
                    for j in 0..kv_len {
                        if p[j] == T::zero() {
                            dp[j] = T::zero();
                            continue;
                        }
                        let vrow = &vd[(b * kv_len + j) * d + h * dh..][..dh];
                        dp[j] = go.iter().zip(vrow).map(|(&x, &y)| x * y).sum();
                        dot += p[j] * dp[j];
                        let gvrow = &mut gv[(b * kv_len + j) * d + h * dh..][..dh];
                        for (acc, x) in gvrow.iter_mut().zip(go) {
                            *acc += p[j] * *x;
                        }
                    }
                    let qrow = &qd[(b * q_len + i) * d + h * dh..][..dh];
                    for j in 0..kv_len {
                        if p[j] == T::zero() {
                            continue;
                        }
                        let ds = p[j] * (dp[j] - dot) * scale;
                        let krow = &kd[(b * kv_len + j) * d + h * dh..][..dh];
                        let gqrow = &mut gq[(b * q_len + i) * d + h * dh..][..dh];
                        for (acc, x) in gqrow.iter_mut().zip(krow) {
                            *acc += ds * *x;
                        }
                        let gkrow = &mut gk[(b * kv_len + j) * d + h * dh..][..dh];
                        for (acc, x) in gkrow.iter_mut().zip(qrow) {
                            *acc += ds * *x;
                        }
                    }
                }
            }
        }
        for (id, part) in [(q, gq), (k, gk), (v, gv)] {
            if self.nodes[id.0].needs_grad {
                let acc = accumulate(&mut grads[id.0], part.len());
                for (a, x) in acc.iter_mut().zip(&part) {
                    *a += *x;
                }
            }
        }
    }
}
