//! Tape gradients against central finite differences, and the Monte Carlo
//! switch gradient against a quadrature oracle.

mod common;

use common::{analytic_mean_error, primitive_cases, primitive_error, random_states, rng};
use dirichlet_pruning::models::{build_lenet5, build_mlp, ModelGraph};
use dirichlet_pruning::special::lgamma;
use dirichlet_pruning::switch::{neg_elbo_with_grad, Estimator, InactiveSwitch, Scope, SwitchState};
use dirichlet_pruning::tensor::Tensor;
use rand::Rng;

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in 0..3 {
        for case in primitive_cases(seed) {
            let err = primitive_error(&case, 1e-6, 1e-3).unwrap();
            assert!(err < 1e-5, "{} (seed {seed}): relative error {err:.3e}", case.name);
        }
    }
}

#[test]
fn analytic_mean_objective_gradient_on_mlp() {
    let model = build_mlp(6, 5, 3, 1).unwrap();
    let mut r = rng(2);
    let x = Tensor::uniform(&[8, 6], -2.0, 2.0, &mut r);
    let labels: Vec<usize> = (0..8).map(|_| r.random_range(0..3)).collect();
    for seed in 0..3 {
        let states = random_states(&model, seed);
        let err = analytic_mean_error(&model, &states, &x, &labels, 50, 1e-6, 1e-3).unwrap();
        assert!(err < 1e-4, "seed {seed}: relative error {err:.3e}");
    }
}

#[test]
fn analytic_mean_objective_gradient_on_small_lenet() {
    let model = build_lenet5([3, 4, 6, 5], 3).unwrap().with_switches().unwrap();
    let mut r = rng(4);
    let x = Tensor::uniform(&[3, 1, 28, 28], 0.0, 1.0, &mut r);
    let labels = [2, 7, 7];
    let states = random_states(&model, 5);
    let err = analytic_mean_error(&model, &states, &x, &labels, 30, 1e-6, 1e-3).unwrap();
    assert!(err < 1e-4, "relative error {err:.3e}");
}

fn nll_at(model: &ModelGraph, x: &Tensor, labels: &[usize], s: f64) -> f64 {
    let mut m = model.clone();
    m.set_switch_values(&[vec![s, 1.0 - s]]).unwrap();
    let logits = m.forward(x).unwrap();
    let k = logits.shape()[1];
    let total: f64 = logits
        .data()
        .chunks(k)
        .zip(labels)
        .map(|(row, &l)| {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() - row[l]
        })
        .sum();
    total / labels.len() as f64
}

/// `E_{s~Beta(a,b)} NLL([s, 1-s])` by composite Simpson quadrature.
fn expected_nll(model: &ModelGraph, x: &Tensor, labels: &[usize], a: f64, b: f64) -> f64 {
    let ln_beta = lgamma(a).unwrap() + lgamma(b).unwrap() - lgamma(a + b).unwrap();
    let n = 20_000;
    let h = 1.0 / n as f64;
    let f = |s: f64| {
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let density = ((a - 1.0) * s.ln() + (b - 1.0) * (1.0 - s).ln() - ln_beta).exp();
        nll_at(model, x, labels, s) * density
    };
    let inner: f64 = (1..n).map(|i| f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(0.0) + f(1.0) + inner) * h / 3.0
}

#[test]
fn implicit_mc_gradient_is_unbiased() {
    // A two-channel switch is Beta distributed, so the expected loss is a
    // one-dimensional integral.
    let model = build_mlp(3, 2, 2, 4).unwrap();
    let mut r = rng(1);
    let x = Tensor::uniform(&[4, 3], -2.0, 2.0, &mut r);
    let labels = [0, 1, 1, 0];
    let phi = [1.6, 2.4];
    let mut state = SwitchState::with_phi(&phi, 0.5, Estimator::ImplicitMc { k: 2000 }).unwrap();
    state.kl_weight = Some(0.0);
    let reps = 30;
    let scope = Scope {
        active: &[true],
        inactive: InactiveSwitch::Mean,
    };
    let mut draws = vec![Vec::new(); 2];
    for _ in 0..reps {
        let g = neg_elbo_with_grad(&model, &[state.clone()], scope, &x, &labels, 100, &mut r).unwrap();
        assert_eq!(g.degenerate_draws, 0);
        for j in 0..2 {
            draws[j].push(g.theta_grads[0][j]);
        }
    }
    let h = 1e-4;
    let dphi = [
        (expected_nll(&model, &x, &labels, phi[0] + h, phi[1]) - expected_nll(&model, &x, &labels, phi[0] - h, phi[1]))
            / (2.0 * h),
        (expected_nll(&model, &x, &labels, phi[0], phi[1] + h) - expected_nll(&model, &x, &labels, phi[0], phi[1] - h))
            / (2.0 * h),
    ];
    for j in 0..2 {
        // dφ/dθ of the softplus parameterisation
        let oracle = dphi[j] / (1.0 + (-state.theta[j]).exp());
        let mean = draws[j].iter().sum::<f64>() / reps as f64;
        let var = draws[j].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - oracle).abs() < 4.0 * se + 1e-5,
            "channel {j}: mc {mean:.6} ± {se:.6}, oracle {oracle:.6}"
        );
    }
}
