//! Shared helpers for the integration tests and the acceptance harness.
#![allow(dead_code)]

use dirichlet_pruning::special::{gamma_implicit_grad, gamma_quantile};
use dirichlet_pruning::switch::{init_states, neg_elbo_minibatch, Estimator, neg_elbo_with_grad, InactiveSwitch, Scope, SwitchState};
use dirichlet_pruning::tensor::gradcheck::{finite_difference, max_relative_error};
use dirichlet_pruning::tensor::{Tape, Tensor, Var};
use dirichlet_pruning::models::ModelGraph;
use dirichlet_pruning::pruning::PruningPlan;
use dirichlet_pruning::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// One autodiff primitive wrapped into a scalar function of its inputs.
pub struct PrimitiveCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub build: Build,
}

/// `Σ out ∘ r` for a fixed random `r`, so every output entry matters.
fn contract(tape: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let p = tape.mul(out, rv)?;
    Ok(tape.sum(p))
}

/// Values at least `gap` away from zero, with random sign.
fn away_from_zero<R: Rng>(shape: &[usize], gap: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::uniform(shape, gap, 1.0, rng);
    for v in t.data_mut() {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    t
}

/// Distinct values spaced `0.05` apart in random order (no pooling ties).
fn distinct<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| 0.05 * i as f64 - 0.025 * n as f64).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).unwrap()
}

/// Wraps a primitive whose output is contracted with a random tensor of
/// `out_shape`.
fn contracted<F>(name: &'static str, inputs: Vec<Tensor>, out_shape: &[usize], rng: &mut ChaCha8Rng, op: F) -> PrimitiveCase
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + 'static,
{
    let r = Tensor::uniform(out_shape, -1.0, 1.0, rng);
    PrimitiveCase {
        name,
        inputs,
        build: Box::new(move |t, v| {
            let out = op(t, v)?;
            contract(t, out, &r)
        }),
    }
}

/// Randomised instances of every tape primitive.
pub fn primitive_cases(seed: u64) -> Vec<PrimitiveCase> {
    let mut g = rng(seed);
    let r = &mut g;
    let u = |shape: &[usize], r: &mut ChaCha8Rng| Tensor::uniform(shape, -1.0, 1.0, r);
    let mut cases = vec![
        contracted("matmul", vec![u(&[3, 4], r), u(&[4, 5], r)], &[3, 5], r, |t, v| t.matmul(v[0], v[1])),
        contracted("linear", vec![u(&[3, 4], r), u(&[5, 4], r), u(&[5], r)], &[3, 5], r, |t, v| {
            t.linear(v[0], v[1], Some(v[2]))
        }),
        contracted("linear_no_bias", vec![u(&[2, 3], r), u(&[4, 3], r)], &[2, 4], r, |t, v| t.linear(v[0], v[1], None)),
        contracted("add", vec![u(&[2, 3], r), u(&[2, 3], r)], &[2, 3], r, |t, v| t.add(v[0], v[1])),
        contracted("mul", vec![u(&[2, 3], r), u(&[2, 3], r)], &[2, 3], r, |t, v| t.mul(v[0], v[1])),
        contracted("scale", vec![u(&[3, 2], r)], &[3, 2], r, |t, v| Ok(t.scale(v[0], -1.7))),
        contracted("relu", vec![away_from_zero(&[3, 4], 0.05, r)], &[3, 4], r, |t, v| Ok(t.relu(v[0]))),
        contracted("broadcast_mul_channels_2d", vec![u(&[4, 3], r), u(&[3], r)], &[4, 3], r, |t, v| {
            t.broadcast_mul_channels(v[0], v[1])
        }),
        contracted("broadcast_mul_channels_4d", vec![u(&[2, 3, 2, 2], r), u(&[3], r)], &[2, 3, 2, 2], r, |t, v| {
            t.broadcast_mul_channels(v[0], v[1])
        }),
        contracted("add_channel_bias", vec![u(&[2, 3, 2, 2], r), u(&[3], r)], &[2, 3, 2, 2], r, |t, v| {
            t.add_channel_bias(v[0], v[1])
        }),
        contracted("conv2d_pad1", vec![u(&[2, 2, 5, 5], r), u(&[3, 2, 3, 3], r)], &[2, 3, 5, 5], r, |t, v| {
            t.conv2d(v[0], v[1], 1, 1)
        }),
        contracted("conv2d_stride2", vec![u(&[1, 2, 6, 6], r), u(&[2, 2, 2, 2], r)], &[1, 2, 3, 3], r, |t, v| {
            t.conv2d(v[0], v[1], 2, 0)
        }),
        contracted("max_pool2d", vec![distinct(&[2, 2, 4, 4], r)], &[2, 2, 2, 2], r, |t, v| t.max_pool2d(v[0], 2, 2)),
        contracted("reshape", vec![u(&[2, 6], r)], &[3, 4], r, |t, v| t.reshape(v[0], &[3, 4])),
        contracted("flatten", vec![u(&[2, 2, 3], r)], &[2, 6], r, |t, v| t.flatten(v[0])),
        contracted("softplus", vec![Tensor::uniform(&[5], -4.0, 4.0, r)], &[5], r, |t, v| Ok(t.softplus(v[0], 1e-6))),
        contracted("normalize", vec![Tensor::uniform(&[5], 0.2, 3.0, r)], &[5], r, |t, v| t.normalize(v[0])),
    ];
    cases.push(PrimitiveCase {
        name: "sum",
        inputs: vec![u(&[3, 3], r)],
        build: Box::new(|t, v| Ok(t.sum(v[0]))),
    });
    let labels: Vec<usize> = (0..4).map(|_| r.random_range(0..5)).collect();
    cases.push(PrimitiveCase {
        name: "softmax_cross_entropy",
        inputs: vec![Tensor::uniform(&[4, 5], -3.0, 3.0, r)],
        build: Box::new(move |t, v| t.softmax_cross_entropy(v[0], &labels)),
    });
    let prior: Vec<f64> = vec![0.5; 4];
    cases.push(PrimitiveCase {
        name: "kl_dirichlet",
        inputs: vec![Tensor::uniform(&[4], 0.3, 6.0, r)],
        build: Box::new(move |t, v| t.kl_dirichlet(v[0], &prior)),
    });
    // The Gamma draws are recomputed from fixed CDF levels at the probed
    // concentrations, so finite differences see the true implicit map.
    let levels: Vec<f64> = (0..4).map(|_| r.random_range(0.1..0.9)).collect();
    let weights = Tensor::uniform(&[4], -1.0, 1.0, r);
    cases.push(PrimitiveCase {
        name: "dirichlet_reparam",
        inputs: vec![Tensor::uniform(&[4], 0.5, 5.0, r)],
        build: Box::new(move |t, v| {
            let phi = t.value(v[0]).data().to_vec();
            let mut gamma = Vec::new();
            let mut dgamma = Vec::new();
            for (&a, &q) in phi.iter().zip(&levels) {
                let y = gamma_quantile(a, q)?;
                gamma.push(y);
                dgamma.push(gamma_implicit_grad(a, y)?);
            }
            let s = t.dirichlet_reparam(v[0], &gamma, &dgamma)?;
            contract(t, s, &weights)
        }),
    });
    cases
}

fn eval_case(case: &PrimitiveCase, inputs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = (case.build)(&mut tape, &vars)?;
    tape.value(out).item()
}

/// Largest relative error between tape and finite-difference gradients
/// over every input entry of `case`.
pub fn primitive_error(case: &PrimitiveCase, h: f64, floor: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = (case.build)(&mut tape, &vars)?;
    tape.backward(out)?;
    let mut worst: f64 = 0.0;
    for (i, x) in case.inputs.iter().enumerate() {
        let analytic = tape.grad(vars[i]).expect("leaf gradient").to_vec();
        let fd = finite_difference(
            |probe| {
                let mut inputs = case.inputs.clone();
                inputs[i] = probe.clone();
                eval_case(case, &inputs)
            },
            x,
            h,
        )?;
        worst = worst.max(max_relative_error(&analytic, fd.data(), floor));
    }
    Ok(worst)
}

/// Analytic-mean switch states with `θ` drawn from `U(-1.5, 1.5)`.
pub fn random_states(model: &ModelGraph, seed: u64) -> Vec<SwitchState> {
    let mut r = rng(seed);
    let mut states = init_states(model, 0.5, Estimator::AnalyticMean).unwrap();
    for s in &mut states {
        s.theta.iter_mut().for_each(|t| *t = r.random_range(-1.5..1.5));
    }
    states
}

/// Largest relative error of the analytic-mean negative ELBO gradient in
/// `θ` against finite differences of the objective value.
pub fn analytic_mean_error(
    model: &ModelGraph,
    states: &[SwitchState],
    x: &Tensor,
    labels: &[usize],
    n: usize,
    h: f64,
    floor: f64,
) -> Result<f64> {
    let active = vec![true; states.len()];
    let scope = Scope {
        active: &active,
        inactive: InactiveSwitch::Mean,
    };
    let g = neg_elbo_with_grad(model, states, scope, x, labels, n, &mut rng(0))?;
    let mut worst: f64 = 0.0;
    for l in 0..states.len() {
        let theta = Tensor::vector(states[l].theta.clone());
        let fd = finite_difference(
            |probe| {
                let mut s = states.to_vec();
                s[l].theta = probe.data().to_vec();
                Ok(neg_elbo_minibatch(model, &s, x, labels, n, &mut rng(0))?.neg_elbo)
            },
            &theta,
            h,
        )?;
        worst = worst.max(max_relative_error(&g.theta_grads[l], fd.data(), floor));
    }
    Ok(worst)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `P(a, x)` by quadrature alone. The substitution `t = u^k` with
/// `k = m/a` and integer `m >= 4a` turns `t^(a-1) e^-t dt` into
/// `k u^(m-1) e^(-u^k) du`, smooth enough at zero for Simpson. The
/// normaliser is the same integral taken far into the tail.
pub fn gamma_cdf_oracle(a: f64, x: f64) -> f64 {
    let m = (4.0 * a).ceil().max(1.0);
    let k = m / a;
    let part = |upper: f64| simpson(|u| k * u.powf(m - 1.0) * (-u.powf(k)).exp(), 0.0, upper.powf(1.0 / k), 200_000);
    let tail = a + 40.0 * a.sqrt() + 60.0;
    part(x) / part(tail)
}

/// Random non-empty increasing keep lists for every prunable layer.
pub fn random_plan<R: Rng>(model: &ModelGraph, rng: &mut R) -> PruningPlan {
    use rand::seq::index::sample;
    let keep = model
        .prunable_widths()
        .into_iter()
        .map(|w| {
            let k = rng.random_range(1..=w);
            let mut idx = sample(rng, w, k).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    PruningPlan { keep }
}

/// Forward pass of the unpruned model with every dropped channel's switch
/// value set to zero.
pub fn masked_forward(model: &ModelGraph, plan: &PruningPlan, x: &Tensor) -> Result<Tensor> {
    let mut m = model.with_switches()?;
    let values: Vec<Vec<f64>> = m
        .switch_values()
        .iter()
        .zip(&plan.keep)
        .map(|(v, keep)| v.iter().enumerate().map(|(c, &s)| if keep.contains(&c) { s } else { 0.0 }).collect())
        .collect();
    m.set_switch_values(&values)?;
    m.forward(x)
}
