use super::*;
use crate::numerics::{AdamConfig, Graph, OptimizerState};

fn tiny() -> ModelConfig {
    ModelConfig {
        n_enc_layers: 2,
        n_dec_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ffn: 32,
        max_positions: 16,
        src_vocab_size: 9,
        tgt_vocab_size: 8,
        dropout: 0.0,
        label_smoothing: 0.1,
    }
}

fn close(a: &[f32], b: &[f32], tol: f32) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn forward_shapes_match_contract() {
    let p = ModelParams::init(tiny(), 1).unwrap();
    let (logits, trace) = forward(&p, &[3, 4, 5], &[BOS, 6, 7]).unwrap();
    assert_eq!(logits.shape(), &[3, 8]);
    assert_eq!(trace.hidden.shape(), &[3, 16]);
    assert!(logits.is_finite());
}

#[test]
fn init_is_seeded_and_names_are_unique() {
    let a = ModelParams::init(tiny(), 7).unwrap();
    assert_eq!(a, ModelParams::init(tiny(), 7).unwrap());
    assert_ne!(a, ModelParams::init(tiny(), 8).unwrap());
    let mut names = a.names().to_vec();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), a.names().len());
    assert!(a.names().contains(&"decoder.output.weight".to_string()));
}

#[test]
fn padding_does_not_change_real_positions() {
    let p = ModelParams::init(tiny(), 2).unwrap();
    let short = (vec![3usize, 4], vec![5usize]);
    let long = (vec![5usize, 6, 7, 8], vec![3usize, 4, 5]);
    let (alone, _) = forward(&p, &short.0, &[BOS, 5]).unwrap();
    let batch = Batch::new(&[short, long]);
    let mut g = Graph::<f32>::new();
    let nodes: Vec<_> = p.tensors.iter().map(|t| g.input(t.clone())).collect();
    let out = forward_graph(&mut g, &nodes, &p, &batch, None).unwrap();
    let logits = g.value(out.logits);
    for pos in 0..2 {
        assert!(close(logits.row(pos), alone.row(pos), 1e-5));
    }
}

#[test]
fn decoder_is_causal() {
    let p = ModelParams::init(tiny(), 3).unwrap();
    let (a, ta) = forward(&p, &[3, 4], &[BOS, 5, 6, 3]).unwrap();
    let (b, tb) = forward(&p, &[3, 4], &[BOS, 5, 7, 7]).unwrap();
    for pos in 0..2 {
        assert_eq!(a.row(pos), b.row(pos));
        assert_eq!(ta.hidden.row(pos), tb.hidden.row(pos));
    }
    assert_ne!(a.row(2), b.row(2));
}

#[test]
fn step_output_matches_full_forward() {
    let p = ModelParams::init(tiny(), 4).unwrap();
    let src = vec![3usize, 8, 4];
    let prefix = vec![BOS, 6, 3];
    let (full, trace) = forward(&p, &src, &prefix).unwrap();
    let enc = encode(&p, &[src]).unwrap();
    let step = next_token_step(&p, &enc, &[prefix]).unwrap();
    assert!(close(step.logits.row(0), full.row(2), 1e-5));
    assert!(close(step.hidden.row(0), trace.hidden.row(2), 1e-5));
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let p = ModelParams::init(tiny(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    p.save(&path).unwrap();
    let q = ModelParams::load(&path).unwrap();
    assert_eq!(p, q);
    let (a, _) = forward(&p, &[3, 4], &[BOS, 5]).unwrap();
    let (b, _) = forward(&q, &[3, 4], &[BOS, 5]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_for_another_shape_is_rejected() {
    let p = ModelParams::init(tiny(), 5).unwrap();
    let mut ck = p.to_checkpoint();
    let mut other = tiny();
    other.d_ffn = 24;
    ck.config = serde_json::to_value(&other).unwrap();
    assert!(matches!(ModelParams::from_checkpoint(ck), Err(ModelError::Checkpoint(_))));
}

#[test]
fn bad_inputs_are_errors() {
    let p = ModelParams::init(tiny(), 6).unwrap();
    assert!(matches!(forward(&p, &[9], &[BOS]), Err(ModelError::UnknownToken { id: 9, vocab: 9 })));
    assert!(matches!(forward(&p, &[3; 17], &[BOS]), Err(ModelError::Overlength { len: 17, max: 16 })));
    let mut c = tiny();
    c.n_heads = 3;
    assert!(ModelParams::init(c, 0).is_err());
}

#[test]
fn id_mapping_round_trips() {
    let raw = [0u32, 5, 19];
    assert_eq!(to_model_ids(&raw), vec![3, 8, 22]);
    assert_eq!(to_raw_tokens(&[BOS, 3, 8, 22, EOS]), raw.to_vec());
}

#[test]
fn greedy_edge_cases_and_determinism() {
    let p = ModelParams::init(tiny(), 7).unwrap();
    assert!(greedy_decode(&p, &[3, 4], 0).unwrap().is_empty());
    let a = greedy_decode(&p, &[3, 4, 5], 6).unwrap();
    assert!(a.len() <= 6 && a.iter().all(|&t| t >= SPECIALS));
    assert_eq!(a, greedy_decode(&p, &[3, 4, 5], 6).unwrap());
    let srcs = vec![vec![3, 4, 5], vec![6], vec![7, 7]];
    let batched = greedy_decode_batch(&p, &srcs, |_| 6, 2).unwrap();
    assert_eq!(batched[0], a);
}

#[test]
fn beam_of_one_equals_greedy_on_model() {
    let p = ModelParams::init(tiny(), 8).unwrap();
    for src in [vec![3usize, 4], vec![5, 6, 7, 8], vec![4]] {
        let g = greedy_decode(&p, &src, 5).unwrap();
        assert_eq!(beam_search(&p, &src, 1, 5).unwrap().tokens, g);
    }
}

/// Deterministic scorer over PAD, BOS, EOS and three real tokens whose
/// distribution depends on the whole prefix.
struct ToyScorer;

impl NextTokenScorer for ToyScorer {
    fn next_probs(&mut self, _rows: &[usize], prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f32>>, ModelError> {
        Ok(prefixes
            .iter()
            .map(|p| {
                let h = p.iter().fold(17u64, |h, &t| h.wrapping_mul(31).wrapping_add(t as u64 + 1));
                let raw: Vec<f32> = (0..4).map(|j| 1.0 + ((h >> (8 * j)) % 97) as f32).collect();
                let s: f32 = raw.iter().sum();
                let mut v = vec![0.0, 0.0];
                v.extend(raw.iter().map(|r| r / s));
                v
            })
            .collect())
    }
}

fn brute_force_best(max_len: usize) -> (Vec<usize>, bool, f64) {
    let mut best = (Vec::new(), false, f64::NEG_INFINITY);
    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    while let Some(toks) = stack.pop() {
        if toks.len() < max_len {
            let s = sequence_score(&mut ToyScorer, 0, &toks, true).unwrap();
            if s > best.2 {
                best = (toks.clone(), true, s);
            }
            for t in 3..6 {
                let mut n = toks.clone();
                n.push(t);
                stack.push(n);
            }
        } else {
            let s = sequence_score(&mut ToyScorer, 0, &toks, false).unwrap();
            if s > best.2 {
                best = (toks.clone(), false, s);
            }
        }
    }
    best
}

#[test]
fn exhaustive_beam_matches_brute_force_enumeration() {
    for max_len in 1..=4 {
        let (tokens, finished, score) = brute_force_best(max_len);
        let h = beam_search_with(&mut ToyScorer, 0, 1000, max_len).unwrap();
        assert_eq!(h.tokens, tokens, "max_len {max_len}");
        assert_eq!(h.finished, finished);
        assert!((h.score - score).abs() < 1e-9);
    }
}

#[test]
fn beam_of_one_equals_greedy_on_toy_scorer() {
    for max_len in 1..=6 {
        let g = greedy_search(&mut ToyScorer, &[0], max_len).unwrap().remove(0);
        assert_eq!(beam_search_with(&mut ToyScorer, 0, 1, max_len).unwrap().tokens, g);
    }
}

#[test]
fn overfits_a_single_pair() {
    let p0 = ModelParams::init(tiny(), 9).unwrap();
    let mut p = p0.clone();
    let batch = Batch::new(&[(vec![3usize, 4, 5], vec![7usize, 6, 3])]);
    let cfg = AdamConfig { base_lr: 1e-2, warmup_updates: 10, ..AdamConfig::default() };
    let mut opt = OptimizerState::new(cfg, &p.tensors);
    for _ in 0..200 {
        let mut g = Graph::<f32>::new();
        let nodes: Vec<_> = p.tensors.iter().map(|t| g.param(t.clone())).collect();
        let out = forward_graph(&mut g, &nodes, &p, &batch, None).unwrap();
        let w = vec![1.0; batch.tgt_out.len()];
        let loss = g.cross_entropy(out.logits, &batch.tgt_out, &w, 0.0).unwrap();
        g.backward(loss).unwrap();
        let grads: Vec<&[f32]> = nodes.iter().map(|&n| g.grad(n).unwrap()).collect();
        opt.adam_step(&mut p.tensors, &grads).unwrap();
    }
    assert_eq!(greedy_decode(&p, &[3, 4, 5], 8).unwrap(), vec![7, 6, 3]);
    assert_ne!(greedy_decode(&p0, &[3, 4, 5], 8).unwrap(), vec![7, 6, 3]);
}
