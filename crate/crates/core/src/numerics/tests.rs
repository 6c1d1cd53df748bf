use super::*;

fn t(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::full(&[3, 7], 2.5));
    let y = g.softmax(x, 1).unwrap();
    for v in g.value(y).data() {
        assert!((v - 1.0 / 7.0).abs() < 1e-7);
    }
}

#[test]
fn softmax_rows_sum_to_one_on_any_axis() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::from_fn(&[2, 3, 4], |i| ((i * 37 % 11) as f32 - 5.0) * 0.5));
    for axis in 0..3 {
        let y = g.softmax(x, axis).unwrap();
        let v = g.value(y);
        let shape = v.shape().to_vec();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        for o in 0..outer {
            for i in 0..inner {
                let s: f32 = (0..shape[axis]).map(|j| v.data()[o * shape[axis] * inner + j * inner + i]).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
        assert!(v.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn layer_norm_of_constant_row_is_zero() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::full(&[2, 5], 3.0));
    let gamma = g.input(Tensor::full(&[5], 1.0));
    let beta = g.input(Tensor::zeros(&[5]));
    let y = g.layer_norm(x, gamma, beta).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_matmul_is_identity() {
    let mut g = Graph::<f32>::new();
    let a = Tensor::from_fn(&[4, 3], |i| i as f32 * 0.25 - 1.0);
    let i4 = g.input(Tensor::identity(4));
    let an = g.input(a.clone());
    let y = g.matmul(i4, an).unwrap();
    assert_eq!(g.value(y), &a);
}

#[test]
fn matmul_shape_mismatch_is_an_error() {
    let mut g = Graph::<f32>::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[2, 3]));
    assert!(matches!(g.matmul(a, b), Err(NumericsError::ShapeMismatch { .. })));
}

#[test]
fn gradient_of_sum_is_ones() {
    let mut g = Graph::<f32>::new();
    let x = g.param(Tensor::from_fn(&[2, 3], |i| i as f32));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
}

#[test]
fn gradient_of_square_at_three_is_six() {
    let mut g = Graph::<f32>::new();
    let x = g.param(Tensor::scalar(3.0));
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[6.0]);
}

#[test]
fn backward_twice_and_non_scalar_loss_are_errors() {
    let mut g = Graph::<f32>::new();
    let x = g.param(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x), Err(NumericsError::NonScalarLoss(_))));
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(matches!(g.backward(s), Err(NumericsError::BackwardTwice)));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::<f32>::new();
    let w = g.param(Tensor::full(&[2, 2], 0.5));
    let x = g.input(Tensor::full(&[1, 2], 1.0));
    let y = g.matmul(x, w).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(g.grad(x).is_none());
    assert_eq!(g.grad(w).unwrap(), &[1.0; 4]);
}

#[test]
fn cross_entropy_uniform_logits_is_ln_v() {
    for v in [2usize, 4, 23] {
        for target in [0, v - 1] {
            let l = cross_entropy_label_smoothed(&vec![0.0; v], target, 0.0).unwrap();
            assert!((l - (v as f32).ln()).abs() < 1e-6);
        }
    }
}

#[test]
fn cross_entropy_peaked_on_target_tends_to_zero() {
    let mut logits = vec![0.0; 5];
    logits[3] = 40.0;
    assert!(cross_entropy_label_smoothed(&logits, 3, 0.0).unwrap() < 1e-12);
}

#[test]
fn smoothing_leaves_uniform_loss_at_ln_4() {
    // q = 0.9·onehot + 0.025 sums to 1, and log p = −ln 4 everywhere.
    let l = cross_entropy_label_smoothed(&[0.0; 4], 2, 0.1).unwrap();
    assert!((l - 4f32.ln()).abs() < 1e-6);
}

#[test]
fn smoothed_loss_matches_closed_form() {
    let logits = [1.0f32, -0.5, 2.0];
    let eps = 0.1f64;
    let x: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    let lz = x.iter().map(|v| v.exp()).sum::<f64>().ln();
    let want: f64 = (0..3)
        .map(|j| {
            let q = if j == 1 { 1.0 - eps + eps / 3.0 } else { eps / 3.0 };
            -q * (x[j] - lz)
        })
        .sum();
    let got = cross_entropy_label_smoothed(&logits, 1, 0.1).unwrap();
    assert!((got as f64 - want).abs() < 1e-6);
}

#[test]
fn cross_entropy_rejects_bad_target_and_smoothing() {
    assert!(matches!(cross_entropy_label_smoothed(&[0.0; 3], 3, 0.0), Err(NumericsError::IndexOutOfRange { .. })));
    assert!(cross_entropy_label_smoothed(&[0.0; 3], 0, 1.0).is_err());
}

#[test]
fn zero_weight_rows_are_ignored() {
    let mut g = Graph::<f32>::new();
    let x = g.param(t(&[2, 3], &[1.0, 2.0, 3.0, 9.0, -9.0, 0.0]));
    let l = g.cross_entropy(x, &[0, 1], &[1.0, 0.0], 0.1).unwrap();
    let single = cross_entropy_label_smoothed(&[1.0, 2.0, 3.0], 0, 0.1).unwrap();
    assert_eq!(g.value(l).item(), single);
    g.backward(l).unwrap();
    assert!(g.grad(x).unwrap()[3..].iter().all(|&v| v == 0.0));
}

#[test]
fn concat_and_transpose_layouts() {
    let mut g = Graph::<f32>::new();
    let a = g.input(t(&[2, 1], &[1.0, 2.0]));
    let b = g.input(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let c = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    let r = g.concat(&[b, b], 0).unwrap();
    assert_eq!(g.value(r).shape(), &[4, 2]);
    let tt = g.transpose(c).unwrap();
    assert_eq!(g.value(tt).shape(), &[3, 2]);
    assert_eq!(g.value(tt).data(), &[1.0, 2.0, 3.0, 5.0, 4.0, 6.0]);
}

#[test]
fn masked_fill_blocks_gradient() {
    let mut g = Graph::<f32>::new();
    let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
    let y = g.masked_fill(x, &[false, true, false], -5.0).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, -5.0, 3.0]);
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 1.0]);
}

#[test]
fn embedding_gathers_and_scatters() {
    let mut g = Graph::<f32>::new();
    let table = g.param(Tensor::from_fn(&[4, 2], |i| i as f32));
    let e = g.embedding(table, &[3, 0, 3]).unwrap();
    assert_eq!(g.value(e).data(), &[6.0, 7.0, 0.0, 1.0, 6.0, 7.0]);
    let s = g.sum(e);
    g.backward(s).unwrap();
    assert_eq!(g.grad(table).unwrap(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
    assert!(g.embedding(table, &[4]).is_err());
}

#[test]
fn causal_attention_ignores_future_and_padding() {
    let d = 4;
    let mk = |seed: f32| Tensor::from_fn(&[3, d], move |i| ((i as f32 + seed) * 0.7).sin());
    let run = |v_last: f32, pad_last: bool| {
        let mut g = Graph::<f32>::new();
        let q = g.input(mk(0.1));
        let k = g.input(mk(1.3));
        let mut vt = mk(2.9);
        for x in &mut vt.data_mut()[2 * d..] {
            *x = v_last;
        }
        let v = g.input(vt);
        let spec = AttentionSpec {
            batch: 1,
            q_len: 3,
            kv_len: 3,
            heads: 2,
            causal: true,
            key_padding: vec![false, false, pad_last],
        };
        let o = g.attention(q, k, v, spec).unwrap();
        g.value(o).clone()
    };
    let (a, b) = (run(0.0, false), run(100.0, false));
    assert_eq!(&a.data()[..2 * d], &b.data()[..2 * d]);
    assert_ne!(&a.data()[2 * d..], &b.data()[2 * d..]);
    let (c, e) = (run(0.0, true), run(100.0, true));
    assert_eq!(c, e);
}

#[test]
fn linear_adds_bias_per_row() {
    let mut g = Graph::<f32>::new();
    let x = g.input(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let w = g.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let b = g.input(t(&[3], &[0.5, 0.5, 0.5]));
    let y = g.linear(x, w, Some(b)).unwrap();
    assert_eq!(g.value(y).data(), &[1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
}
