//! Tape primitives on hand-checkable inputs, against a naive convolution,
//! and on the structural properties of the reverse pass.

mod common;

use common::rng;
use dirichlet_pruning::models::{build_mlp, LayerParams};
use dirichlet_pruning::tensor::gradcheck::{finite_difference, max_relative_error};
use dirichlet_pruning::tensor::{Tape, Tensor};
use rand::Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = tape.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let out = tape.matmul(i, b).unwrap();
    assert_eq!(tape.value(out).data(), &[3.0, 4.0, 5.0, 6.0]);
    let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let z = tape.constant(Tensor::zeros(&[2, 1]));
    let out = tape.matmul(a, z).unwrap();
    assert_eq!(tape.value(out).data(), &[0.0]);
    assert!(tape.matmul(a, a).is_err());
}

#[test]
fn matmul_sum_gradient_is_ones_times_b_transpose() {
    let mut r = rng(3);
    let a = Tensor::uniform(&[3, 4], -2.0, 2.0, &mut r);
    let b = Tensor::uniform(&[4, 2], -2.0, 2.0, &mut r);
    let mut tape = Tape::new();
    let av = tape.leaf(a.clone(), true);
    let bv = tape.constant(b.clone());
    let p = tape.matmul(av, bv).unwrap();
    let s = tape.sum(p);
    tape.backward(s).unwrap();
    // (1·bᵀ)[i][k] = Σ_j b[k][j]
    let row_sums: Vec<f64> = b.data().chunks(2).map(|r| r.iter().sum()).collect();
    let expected: Vec<f64> = (0..3).flat_map(|_| row_sums.clone()).collect();
    let g = tape.grad(av).unwrap();
    assert!(max_relative_error(g, &expected, 1e-3) < 1e-14);
    let fd = finite_difference(
        |x| {
            let mut tp = Tape::new();
            let (xv, bv) = (tp.constant(x.clone()), tp.constant(b.clone()));
            let p = tp.matmul(xv, bv)?;
            let s = tp.sum(p);
            tp.value(s).item()
        },
        &a,
        1e-6,
    )
    .unwrap();
    assert!(max_relative_error(g, fd.data(), 1e-3) < 1e-6);
}

/// Direct six-loop cross-correlation.
fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * co * ho * wo];
    for b in 0..n {
        for o in 0..co {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for p in 0..kh {
                            for q in 0..kw {
                                let (y, xx) = ((i * stride + p) as isize - pad as isize, (j * stride + q) as isize - pad as isize);
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((b * ci + c) * h + y as usize) * w + xx as usize]
                                    * k.data()[((o * ci + c) * kh + p) * kw + q];
                            }
                        }
                    }
                    out[((b * co + o) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, co, ho, wo], out).unwrap()
}

fn tape_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
    let mut tape = Tape::new();
    let (xv, kv) = (tape.constant(x.clone()), tape.constant(k.clone()));
    let out = tape.conv2d(xv, kv, stride, pad).unwrap();
    tape.value(out).clone()
}

#[test]
fn conv2d_examples_and_naive_reference() {
    let ones = tape_conv(&Tensor::ones(&[1, 1, 3, 3]), &Tensor::ones(&[1, 1, 3, 3]), 1, 0);
    assert_eq!(ones.shape(), &[1, 1, 1, 1]);
    assert_eq!(ones.data(), &[9.0]);

    let mut r = rng(11);
    let x = Tensor::uniform(&[2, 3, 8, 8], -2.0, 2.0, &mut r);
    let zero = tape_conv(&x, &Tensor::zeros(&[4, 3, 3, 3]), 1, 1);
    assert!(zero.data().iter().all(|&v| v == 0.0));

    let k = Tensor::uniform(&[4, 3, 3, 3], -1.0, 1.0, &mut r);
    for (stride, pad) in [(1, 0), (1, 1), (2, 0), (2, 2), (3, 1)] {
        let got = tape_conv(&x, &k, stride, pad);
        let want = naive_conv(&x, &k, stride, pad);
        assert_eq!(got.shape(), want.shape());
        let worst = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-12, "stride {stride} pad {pad}: {worst:e}");
    }
}

#[test]
fn channel_switch_examples() {
    let mut r = rng(4);
    let h = Tensor::uniform(&[2, 3, 2, 2], -1.0, 1.0, &mut r);
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let ones = tape.constant(Tensor::ones(&[3]));
    let same = tape.broadcast_mul_channels(hv, ones).unwrap();
    assert_eq!(tape.value(same), &h);
    let e1 = tape.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
    let only = tape.broadcast_mul_channels(hv, e1).unwrap();
    for (i, chunk) in tape.value(only).data().chunks(4).enumerate() {
        assert_eq!(chunk.iter().any(|&v| v != 0.0), i % 3 == 1);
    }
    let h2 = Tensor::uniform(&[5, 3], -1.0, 1.0, &mut r);
    let h2v = tape.constant(h2);
    assert!(tape.broadcast_mul_channels(h2v, ones).is_ok());
    let four = tape.constant(Tensor::ones(&[4]));
    assert!(tape.broadcast_mul_channels(h2v, four).is_err());
}

#[test]
fn channel_switch_gradient_in_s() {
    let mut r = rng(6);
    let h = Tensor::uniform(&[3, 4, 2, 2], -1.0, 1.0, &mut r);
    let s = Tensor::uniform(&[4], 0.1, 1.0, &mut r);
    let f = |sv: &Tensor| {
        let mut tape = Tape::new();
        let (hv, sv) = (tape.constant(h.clone()), tape.constant(sv.clone()));
        let o = tape.broadcast_mul_channels(hv, sv)?;
        let total = tape.sum(o);
        tape.value(total).item()
    };
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let sv = tape.leaf(s.clone(), true);
    let o = tape.broadcast_mul_channels(hv, sv).unwrap();
    let total = tape.sum(o);
    tape.backward(total).unwrap();
    let fd = finite_difference(f, &s, 1e-6).unwrap();
    assert!(max_relative_error(tape.grad(sv).unwrap(), fd.data(), 1e-3) <= 1e-6);
}

#[test]
fn softmax_cross_entropy_examples() {
    let mut tape = Tape::new();
    let flat = tape.constant(Tensor::full(&[3, 4], 0.7));
    let l = tape.softmax_cross_entropy(flat, &[0, 2, 3]).unwrap();
    assert!((tape.value(l).item().unwrap() - 4f64.ln()).abs() < 1e-15);
    let sharp = tape.constant(t(&[1, 2], &[10.0, -10.0]));
    let l = tape.softmax_cross_entropy(sharp, &[0]).unwrap();
    let exact = (-20f64).exp().ln_1p();
    assert!((tape.value(l).item().unwrap() - exact).abs() <= 1e-6 * exact);
    assert!(tape.softmax_cross_entropy(sharp, &[2]).is_err());

    let mut r = rng(8);
    let logits = Tensor::uniform(&[5, 3], -2.0, 2.0, &mut r);
    let labels = [0, 2, 1, 1, 0];
    let mut tape = Tape::new();
    let lv = tape.leaf(logits.clone(), true);
    let l = tape.softmax_cross_entropy(lv, &labels).unwrap();
    tape.backward(l).unwrap();
    let fd = finite_difference(
        |x| {
            let mut tp = Tape::new();
            let v = tp.constant(x.clone());
            let l = tp.softmax_cross_entropy(v, &labels)?;
            tp.value(l).item()
        },
        &logits,
        1e-6,
    )
    .unwrap();
    assert!(max_relative_error(tape.grad(lv).unwrap(), fd.data(), 1e-3) <= 1e-6);
}

#[test]
fn backward_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(2.0), true);
    let y = tape.scale(x, 3.0);
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[3.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(5.0), true);
    let y = tape.mul(x, x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[10.0]);

    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
    assert!(tape.backward(v).is_err(), "non-scalar loss");
}

#[test]
fn two_layer_mlp_parameter_gradients() {
    let mut model = build_mlp(4, 6, 3, 2).unwrap();
    let mut r = rng(12);
    for p in model.params_mut() {
        if let LayerParams::Linear { bias, .. } = p {
            for b in bias.data_mut() {
                *b = r.random_range(-0.5..0.5);
            }
        }
    }
    let x = Tensor::uniform(&[6, 4], -2.0, 2.0, &mut r);
    let labels = [0, 1, 2, 2, 1, 0];
    let loss_with = |w: &[Tensor]| -> dirichlet_pruning::Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let v: Vec<_> = w.iter().map(|t| tape.constant(t.clone())).collect();
        let h = tape.linear(xv, v[0], Some(v[1]))?;
        let h = tape.relu(h);
        let o = tape.linear(h, v[2], Some(v[3]))?;
        let l = tape.softmax_cross_entropy(o, &labels)?;
        tape.value(l).item()
    };
    let weights: Vec<Tensor> = model.named_weights().into_iter().filter(|(n, _)| !n.ends_with("switch")).map(|(_, t)| t.clone()).collect();
    assert_eq!(weights.len(), 4);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let v: Vec<_> = weights.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let h = tape.linear(xv, v[0], Some(v[1])).unwrap();
    let h = tape.relu(h);
    let o = tape.linear(h, v[2], Some(v[3])).unwrap();
    let l = tape.softmax_cross_entropy(o, &labels).unwrap();
    tape.backward(l).unwrap();
    for i in 0..4 {
        let fd = finite_difference(
            |probe| {
                let mut w = weights.clone();
                w[i] = probe.clone();
                loss_with(&w)
            },
            &weights[i],
            1e-6,
        )
        .unwrap();
        let err = max_relative_error(tape.grad(v[i]).unwrap(), fd.data(), 1e-3);
        assert!(err <= 1e-5, "parameter {i}: {err:e}");
    }
}

#[test]
fn reused_input_accumulates_exactly() {
    let mut r = rng(13);
    let x = Tensor::uniform(&[3, 3], -2.0, 2.0, &mut r);
    let a = Tensor::uniform(&[3, 3], -2.0, 2.0, &mut r);
    let b = Tensor::uniform(&[3, 3], -2.0, 2.0, &mut r);
    let branch = |tape: &mut Tape, xv, w: &Tensor| {
        let wv = tape.constant(w.clone());
        let p = tape.mul(xv, wv).unwrap();
        let q = tape.relu(p);
        tape.sum(q)
    };
    let single = |w: &Tensor| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let l = branch(&mut tape, xv, w);
        tape.backward(l).unwrap();
        tape.grad(xv).unwrap().to_vec()
    };
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let la = branch(&mut tape, xv, &a);
    let lb = branch(&mut tape, xv, &b);
    let l = tape.add(la, lb).unwrap();
    tape.backward(l).unwrap();
    let want: Vec<f64> = single(&a).iter().zip(single(&b)).map(|(p, q)| p + q).collect();
    assert_eq!(tape.grad(xv).unwrap(), want.as_slice());
}

#[test]
fn forward_values_do_not_depend_on_requires_grad() {
    let mut r = rng(14);
    let x = Tensor::uniform(&[2, 1, 6, 6], -1.0, 1.0, &mut r);
    let k = Tensor::uniform(&[3, 1, 3, 3], -1.0, 1.0, &mut r);
    let s = Tensor::uniform(&[3], 0.1, 1.0, &mut r);
    let run = |grad: bool| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), grad);
        let kv = tape.leaf(k.clone(), grad);
        let sv = tape.leaf(s.clone(), grad);
        let h = tape.conv2d(xv, kv, 1, 1).unwrap();
        let h = tape.broadcast_mul_channels(h, sv).unwrap();
        let h = tape.relu(h);
        let h = tape.max_pool2d(h, 2, 2).unwrap();
        let f = tape.flatten(h).unwrap();
        let p = tape.softplus(f, 1e-6);
        tape.value(p).clone()
    };
    assert_eq!(run(true).data(), run(false).data());
}
