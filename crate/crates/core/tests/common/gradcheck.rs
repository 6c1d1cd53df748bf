//! Central finite differences in f64 against the tape's analytic gradients.

use ncmt::numerics::{AttentionSpec, Graph, NodeId, Scalar, Tensor};
use ncmt::synlang::SentencePair;
use ncmt::trainer::{loss_graph, UpweightConfig};
use ncmt::transformer::{ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A scalar function of some parameter tensors, buildable in any precision.
pub trait Scenario {
    fn name(&self) -> String;
    fn params(&self) -> Vec<Tensor<f64>>;
    fn build<T: Scalar>(&self, g: &mut Graph<T>, params: &[NodeId]) -> NodeId;
}

pub struct Report {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// Largest relative error of f64 analytic vs f64 central differences.
    pub max_rel_fd: f64,
    /// Largest per-tensor `‖g32 − g64‖∞ / ‖g64‖∞` of the f32 instantiation.
    pub max_rel_f32: f64,
    /// Parameter, element, analytic and numeric value of the worst FD error.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl Report {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_fd < tol && self.max_rel_f32 < tol
    }
}

fn cast<T: Scalar>(t: &Tensor<f64>) -> Tensor<T> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| T::lit(v)).collect()).unwrap()
}

fn evaluate<S: Scenario, T: Scalar>(s: &S, params: &[Tensor<f64>], backward: bool) -> (f64, Vec<Vec<f64>>, Vec<bool>) {
    let mut g = Graph::<T>::new();
    let nodes: Vec<NodeId> = params.iter().map(|p| g.param(cast::<T>(p))).collect();
    let loss = s.build(&mut g, &nodes);
    let value = Scalar::to_f64(g.value(loss).item());
    let pattern = g.relu_pattern();
    let mut grads = Vec::new();
    if backward {
        g.backward(loss).unwrap();
        grads = nodes
            .iter()
            .zip(params)
            .map(|(&n, p)| {
                g.grad(n).map_or_else(|| vec![0.0; p.len()], |gr| gr.iter().map(|&v| Scalar::to_f64(v)).collect())
            })
            .collect();
    }
    (value, grads, pattern)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// `floor` is a lower bound for the relative-error denominator; the
/// effective floor also sits above the finite-difference roundoff level.
/// Checks every parameter element, or a seeded sample of `max_elements`.
pub fn check<S: Scenario>(s: &S, h: f64, floor: f64, max_elements: Option<usize>) -> Report {
    let params = s.params();
    let (loss, analytic, base_pattern) = evaluate::<S, f64>(s, &params, true);
    // Central differences carry roundoff near eps·|L|/h; relative errors are
    // measured against a floor well above it.
    let floor = floor.max(1e4 * f64::EPSILON * loss.abs() / h);
    let (_, analytic32, _) = evaluate::<S, f32>(s, &params, true);
    let mut all: Vec<(usize, usize)> =
        params.iter().enumerate().flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i))).collect();
    if let Some(m) = max_elements {
        if all.len() > m {
            let mut rng = ChaCha8Rng::seed_from_u64(0xfd);
            all = (0..m).map(|_| all[rng.gen_range(0..all.len())]).collect();
        }
    }
    let mut report =
        Report { name: s.name(), checked: 0, skipped_kinks: 0, max_rel_fd: 0.0, max_rel_f32: 0.0, worst: None };
    let global = analytic.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (g32, g64) in analytic32.iter().zip(&analytic) {
        // Tensors whose gradient vanishes analytically hold only rounding noise.
        let scale = g64.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3 * global);
        let err = g32.iter().zip(g64).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale > 0.0 {
            report.max_rel_f32 = report.max_rel_f32.max(err / scale);
        }
    }
    let mut work = params.clone();
    for (p, i) in all {
        let orig = work[p].data()[i];
        work[p].data_mut()[i] = orig + h;
        let (up, _, pat_up) = evaluate::<S, f64>(s, &work, false);
        work[p].data_mut()[i] = orig - h;
        let (down, _, pat_down) = evaluate::<S, f64>(s, &work, false);
        work[p].data_mut()[i] = orig;
        if pat_up != base_pattern || pat_down != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[p][i];
        let e = rel_err(a, numeric, floor);
        if e > report.max_rel_fd {
            report.max_rel_fd = e;
            report.worst = Some((p, i, a, numeric));
        }
        report.checked += 1;
    }
    report
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Reduces any node to a scalar through a fixed random projection so that
/// every output element carries a distinct upstream gradient.
fn project<T: Scalar>(g: &mut Graph<T>, x: NodeId, seed: u64) -> NodeId {
    let shape = g.value(x).shape().to_vec();
    let w = g.input(cast::<T>(&random(&shape, seed)));
    let y = g.mul(x, w).unwrap();
    g.sum(y)
}

/// One graph primitive under a random projection.
pub struct Primitive {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub op: fn(&mut dyn PrimitiveBuilder, &[NodeId]) -> NodeId,
}

/// Object-safe view of a graph used by primitive scenarios.
pub trait PrimitiveBuilder {
    fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId;
    fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId;
    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId;
    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId;
    fn scale(&mut self, a: NodeId, f: f64) -> NodeId;
    fn softmax(&mut self, a: NodeId, axis: usize) -> NodeId;
    fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId;
    fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId;
    fn relu(&mut self, a: NodeId) -> NodeId;
    fn gelu(&mut self, a: NodeId) -> NodeId;
    fn concat(&mut self, parts: &[NodeId], axis: usize) -> NodeId;
    fn transpose(&mut self, a: NodeId) -> NodeId;
    fn masked_fill(&mut self, a: NodeId, mask: &[bool], v: f64) -> NodeId;
    fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, spec: AttentionSpec) -> NodeId;
    fn sum(&mut self, a: NodeId) -> NodeId;
    fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], weights: &[f64], smoothing: f64) -> NodeId;
}

impl<T: Scalar> PrimitiveBuilder for Graph<T> {
    fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Graph::matmul(self, a, b).unwrap()
    }
    fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        Graph::linear(self, x, w, b).unwrap()
    }
    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Graph::add(self, a, b).unwrap()
    }
    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Graph::mul(self, a, b).unwrap()
    }
    fn scale(&mut self, a: NodeId, f: f64) -> NodeId {
        Graph::scale(self, a, T::lit(f))
    }
    fn softmax(&mut self, a: NodeId, axis: usize) -> NodeId {
        Graph::softmax(self, a, axis).unwrap()
    }
    fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        Graph::layer_norm(self, x, gamma, beta).unwrap()
    }
    fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        Graph::embedding(self, table, ids).unwrap()
    }
    fn relu(&mut self, a: NodeId) -> NodeId {
        Graph::relu(self, a)
    }
    fn gelu(&mut self, a: NodeId) -> NodeId {
        Graph::gelu(self, a)
    }
    fn concat(&mut self, parts: &[NodeId], axis: usize) -> NodeId {
        Graph::concat(self, parts, axis).unwrap()
    }
    fn transpose(&mut self, a: NodeId) -> NodeId {
        Graph::transpose(self, a).unwrap()
    }
    fn masked_fill(&mut self, a: NodeId, mask: &[bool], v: f64) -> NodeId {
        Graph::masked_fill(self, a, mask, T::lit(v)).unwrap()
    }
    fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, spec: AttentionSpec) -> NodeId {
        Graph::attention(self, q, k, v, spec).unwrap()
    }
    fn sum(&mut self, a: NodeId) -> NodeId {
        Graph::sum(self, a)
    }
    fn cross_entropy(&mut self, logits: NodeId, targets: &[usize], weights: &[f64], smoothing: f64) -> NodeId {
        let w: Vec<T> = weights.iter().map(|&v| T::lit(v)).collect();
        Graph::cross_entropy(self, logits, targets, &w, T::lit(smoothing)).unwrap()
    }
}

impl Scenario for Primitive {
    fn name(&self) -> String {
        self.name.to_string()
    }
    fn params(&self) -> Vec<Tensor<f64>> {
        self.shapes.iter().enumerate().map(|(i, s)| random(s, 100 + i as u64)).collect()
    }
    fn build<T: Scalar>(&self, g: &mut Graph<T>, params: &[NodeId]) -> NodeId {
        let out = (self.op)(g, params);
        if g.value(out).len() == 1 {
            out
        } else {
            project(g, out, 7)
        }
    }
}

pub fn primitives() -> Vec<Primitive> {
    fn p(name: &'static str, shapes: &[&[usize]], op: fn(&mut dyn PrimitiveBuilder, &[NodeId]) -> NodeId) -> Primitive {
        Primitive { name, shapes: shapes.iter().map(|s| s.to_vec()).collect(), op }
    }
    vec![
        p("matmul", &[&[3, 4], &[4, 5]], |g, x| g.matmul(x[0], x[1])),
        p("linear", &[&[2, 3, 4], &[4, 5], &[5]], |g, x| g.linear(x[0], x[1], Some(x[2]))),
        p("add", &[&[3, 4], &[3, 4]], |g, x| g.add(x[0], x[1])),
        p("mul", &[&[3, 4], &[3, 4]], |g, x| g.mul(x[0], x[1])),
        p("mul_self", &[&[6]], |g, x| g.mul(x[0], x[0])),
        p("scale", &[&[5]], |g, x| g.scale(x[0], -2.5)),
        p("softmax_axis0", &[&[3, 4, 2]], |g, x| g.softmax(x[0], 0)),
        p("softmax_axis1", &[&[3, 4, 2]], |g, x| g.softmax(x[0], 1)),
        p("softmax_axis2", &[&[3, 4, 2]], |g, x| g.softmax(x[0], 2)),
        p("layer_norm", &[&[3, 6], &[6], &[6]], |g, x| g.layer_norm(x[0], x[1], x[2])),
        p("embedding", &[&[5, 3]], |g, x| g.embedding(x[0], &[4, 0, 4, 2])),
        p("relu", &[&[4, 5]], |g, x| g.relu(x[0])),
        p("gelu", &[&[4, 5]], |g, x| g.gelu(x[0])),
        p("concat_axis0", &[&[2, 3], &[1, 3]], |g, x| g.concat(&[x[0], x[1]], 0)),
        p("concat_axis1", &[&[2, 3], &[2, 2]], |g, x| g.concat(&[x[0], x[1], x[0]], 1)),
        p("transpose", &[&[2, 3, 4]], |g, x| g.transpose(x[0])),
        p("masked_fill", &[&[6]], |g, x| g.masked_fill(x[0], &[true, false, false, true, false, false], 3.0)),
        p("sum", &[&[3, 3]], |g, x| g.sum(x[0])),
        p("self_attention_causal_padded", &[&[6, 4], &[6, 4], &[6, 4]], |g, x| {
            let spec = AttentionSpec {
                batch: 2,
                q_len: 3,
                kv_len: 3,
                heads: 2,
                causal: true,
                key_padding: vec![false, false, false, false, false, true],
            };
            g.attention(x[0], x[1], x[2], spec)
        }),
        p("cross_attention_padded", &[&[4, 4], &[6, 4], &[6, 4]], |g, x| {
            let spec = AttentionSpec {
                batch: 2,
                q_len: 2,
                kv_len: 3,
                heads: 2,
                causal: false,
                key_padding: vec![false, true, false, false, false, true],
            };
            g.attention(x[0], x[1], x[2], spec)
        }),
        p("cross_entropy_smoothed_weighted", &[&[4, 5]], |g, x| {
            g.cross_entropy(x[0], &[1, 0, 4, 2], &[1.0, 3.0, 0.0, 0.5], 0.1)
        }),
        p("composite_mlp", &[&[3, 4], &[4, 6], &[6], &[6, 2]], |g, x| {
            let h = g.linear(x[0], x[1], Some(x[2]));
            let h = g.gelu(h);
            let y = g.matmul(h, x[3]);
            let s = g.softmax(y, 1);
            g.scale(s, 3.0)
        }),
    ]
}

/// The full weighted training loss of a tiny transformer.
pub struct TinyTransformer {
    pub model: ModelParams,
    pub pairs: Vec<SentencePair>,
    pub upweight: UpweightConfig,
}

impl TinyTransformer {
    pub fn new(seed: u64) -> Self {
        let config = ModelConfig {
            n_enc_layers: 2,
            n_dec_layers: 2,
            d_model: 8,
            n_heads: 2,
            d_ffn: 16,
            max_positions: 8,
            src_vocab_size: 15,
            tgt_vocab_size: 23,
            dropout: 0.0,
            label_smoothing: 0.1,
        };
        let mut model = ModelParams::init(config, seed).unwrap();
        // Random norms and biases make their gradients non-degenerate.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for (name, t) in model.names().to_vec().iter().zip(model.tensors.iter_mut()) {
            if name.ends_with("bias") || name.ends_with("gamma") || name.ends_with("beta") {
                for v in t.data_mut() {
                    *v += rng.gen_range(-0.3..0.3);
                }
            }
        }
        let pairs = vec![
            SentencePair { src: vec![0, 1, 4], tgt: vec![12, 14] },
            SentencePair { src: vec![5, 6], tgt: vec![15, 16] },
            SentencePair { src: vec![9, 11, 0, 1, 2, 3], tgt: vec![19, 12, 12, 13] },
        ];
        let upweight = UpweightConfig::new(3.0, |s: &[u32]| s.windows(2).any(|w| w == [0, 1]));
        Self { model, pairs, upweight }
    }
}

impl Scenario for TinyTransformer {
    fn name(&self) -> String {
        "tiny_transformer_weighted_loss".into()
    }
    fn params(&self) -> Vec<Tensor<f64>> {
        self.model.tensors_as::<f64>()
    }
    fn build<T: Scalar>(&self, g: &mut Graph<T>, params: &[NodeId]) -> NodeId {
        loss_graph(g, params, &self.model, &self.pairs, &self.upweight).unwrap().0
    }
}
