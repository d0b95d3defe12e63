//! A binary task generated by a one-hidden-layer network with a known
//! switch, used to check that switch training recovers it.

use crate::data::Dataset;
use crate::dirichlet::SimplexVector;
use crate::error::{Error, Result};
use crate::models::{build_mlp, LayerParams, ModelGraph};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Fraction of hidden units whose true switch value is near zero.
pub const SPARSE_FRACTION: f64 = 0.25;
/// Standard deviation of the class-1 minus class-0 logit over the inputs.
pub const LOGIT_SPREAD: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub d_x: usize,
    pub d_h: usize,
    pub true_switch: SimplexVector,
    /// `[d_h, d_x]`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `[2, d_h]`
    pub w2: Tensor,
    pub b2: Tensor,
    pub n: usize,
}

impl SyntheticTask {
    /// The generating network with its switch set to the true values.
    pub fn model(&self) -> Result<ModelGraph> {
        let mut m = build_mlp(self.d_x, self.d_h, 2, 0)?;
        let p = m.params_mut();
        p[0] = LayerParams::Linear {
            weight: self.w1.clone(),
            bias: self.b1.clone(),
        };
        p[1] = LayerParams::Switch {
            values: Tensor::vector(self.true_switch.values().to_vec()),
        };
        p[3] = LayerParams::Linear {
            weight: self.w2.clone(),
            bias: self.b2.clone(),
        };
        Ok(m)
    }
}

/// Simulates a switch, network weights and `n` labelled examples.
///
/// * Switch: a random quarter of the hidden units get `1e-3/d_h`, the rest
///   independent `U(0,1)` draws; then the vector is renormalised.
/// * Inputs: `n/2` from `N(0, I)` and `n/2` from `N(2·1, 0.2·I)`.
/// * Weights: `W1 ~ N(0, 1/d_x)`, `b1 = 0`. The two `W2` rows are `∓δ/2`
///   with `|δ_j| ~ U(0.5, 1.5)` and a random sign, so every hidden unit
///   moves the logit and its switch value is identifiable. `W2` is then
///   rescaled so the logit difference has standard deviation
///   [`LOGIT_SPREAD`] over the inputs, and `b2` centres it.
/// * Labels: drawn from the switched network's softmax.
pub fn gen_synthetic<R: Rng + ?Sized>(d_x: usize, d_h: usize, n: usize, rng: &mut R) -> Result<(SyntheticTask, Dataset)> {
    if d_x == 0 || d_h == 0 {
        return Err(Error::dim(format!("synthetic dims must be positive, got ({d_x}, {d_h})")));
    }
    if n < 2 || n % 2 == 1 {
        return Err(Error::contract(format!("synthetic dataset size must be even and >= 2, got {n}")));
    }
    let n_sparse = ((SPARSE_FRACTION * d_h as f64).round() as usize).min(d_h - 1);
    let mut units: Vec<usize> = (0..d_h).collect();
    units.shuffle(rng);
    let mut switch: Vec<f64> = (0..d_h).map(|_| rng.random::<f64>()).collect();
    for &u in &units[..n_sparse] {
        switch[u] = 1e-3 / d_h as f64;
    }
    let total: f64 = switch.iter().sum();
    switch.iter_mut().for_each(|s| *s /= total);
    let true_switch = SimplexVector::new(switch)?;

    let mut x = Vec::with_capacity(n * d_x);
    let spread = Normal::new(2.0, 0.2f64.sqrt()).expect("valid normal");
    for i in 0..n {
        for _ in 0..d_x {
            x.push(if i < n / 2 {
                StandardNormal.sample(rng)
            } else {
                spread.sample(rng)
            });
        }
    }
    let inputs = Tensor::new(vec![n, d_x], x)?;

    let w1_scale = (1.0 / d_x as f64).sqrt();
    let w1: Vec<f64> = (0..d_h * d_x)
        .map(|_| { let z: f64 = StandardNormal.sample(rng); w1_scale * z })
        .collect();
    let delta: Vec<f64> = (0..d_h)
        .map(|_| {
            let m = rng.random_range(0.5..1.5);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect();
    let w2: Vec<f64> = delta.iter().map(|d| -0.5 * d).chain(delta.iter().map(|d| 0.5 * d)).collect();
    let mut task = SyntheticTask {
        d_x,
        d_h,
        true_switch,
        w1: Tensor::new(vec![d_h, d_x], w1)?,
        b1: Tensor::zeros(&[d_h]),
        w2: Tensor::new(vec![2, d_h], w2)?,
        b2: Tensor::zeros(&[2]),
        n,
    };

    let logits = task.model()?.forward(&inputs)?;
    let diff: Vec<f64> = logits.data().chunks(2).map(|r| r[1] - r[0]).collect();
    let mean = diff.iter().sum::<f64>() / n as f64;
    let sd = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::numeric("synthetic logits do not vary across inputs"));
    }
    let c = LOGIT_SPREAD / sd;
    task.w2.data_mut().iter_mut().for_each(|w| *w *= c);
    task.b2 = Tensor::vector(vec![0.5 * c * mean, -0.5 * c * mean]);

    let labels = diff
        .iter()
        .map(|&d| {
            let z = c * (d - mean);
            let p1 = 1.0 / (1.0 + (-z).exp());
            usize::from(rng.random::<f64>() < p1)
        })
        .collect();
    let data = Dataset::new(inputs, labels)?;
    Ok((task, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_determinism() {
        let gen = |seed| gen_synthetic(100, 20, 4000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (task, data) = gen(5);
        assert_eq!(data.inputs.shape(), &[4000, 100]);
        assert_eq!(task.true_switch.dim(), 20);
        assert_eq!(task.true_switch.values().iter().filter(|&&s| s < 1e-4).count(), 5);
        let (task2, data2) = gen(5);
        assert_eq!((task, data.clone()), (task2, data2));
        let ones = data.labels.iter().filter(|&&l| l == 1).count();
        assert!(ones > 1000 && ones < 3000, "{ones} positives");
        assert!(gen_synthetic(3, 2, 5, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn centred_logits_match_generator() {
        let (task, data) = gen_synthetic(10, 6, 200, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let logits = task.model().unwrap().forward(&data.inputs).unwrap();
        let diff: Vec<f64> = logits.data().chunks(2).map(|r| r[1] - r[0]).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        let sd = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diff.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((sd - LOGIT_SPREAD).abs() < 1e-9);
    }
}
