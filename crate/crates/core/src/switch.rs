//! Importance switches: a Dirichlet posterior over each prunable layer's
//! channel weighting, injected between the pre-activation and the
//! nonlinearity, and trained by minimising the negative ELBO with the
//! model weights frozen.

use crate::data::Dataset;
use crate::dirichlet::{self, DirichletParams, SimplexVector};
use crate::error::{Error, Result};
use crate::models::{ForwardHooks, LayerVars, ModelGraph, Trainable};
use crate::special::{gamma_draw, gamma_implicit_grad};
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;
use std::time::Instant;

/// Added to `softplus(θ)` so concentrations stay strictly positive.
pub const PHI_FLOOR: f64 = 1e-6;
pub const DEFAULT_ALPHA0: f64 = 0.5;

/// How the expected log-likelihood under `q(s)` is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Average over `k` switch samples, differentiated through the Gamma
    /// draws by implicit reparameterisation.
    ImplicitMc { k: usize },
    /// A single evaluation at the Dirichlet mean.
    AnalyticMean,
}

/// Variational parameters of one layer's switch.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchState {
    pub theta: Vec<f64>,
    pub alpha0: f64,
    pub estimator: Estimator,
    /// Weight on the KL term; `None` means `1/N`.
    pub kl_weight: Option<f64>,
}

fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1), stable for large and small y
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl SwitchState {
    /// A switch of width `d` starting at `φ = 1` per channel.
    pub fn new(d: usize, alpha0: f64, estimator: Estimator) -> Result<Self> {
        Self::with_phi(&vec![1.0; d], alpha0, estimator)
    }

    /// A switch whose posterior equals the prior `Dir(α0·1)`.
    pub fn at_prior(d: usize, alpha0: f64, estimator: Estimator) -> Result<Self> {
        Self::with_phi(&vec![alpha0; d], alpha0, estimator)
    }

    /// A switch with the given concentrations (each must exceed the floor).
    pub fn with_phi(phi: &[f64], alpha0: f64, estimator: Estimator) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::dim("switch width must be positive"));
        }
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(Error::domain(format!("alpha0 must be positive, got {alpha0}")));
        }
        if let Estimator::ImplicitMc { k: 0 } = estimator {
            return Err(Error::contract("ImplicitMc requires k >= 1"));
        }
        if let Some(&bad) = phi.iter().find(|&&p| !(p > PHI_FLOOR && p.is_finite())) {
            return Err(Error::domain(format!("concentration {bad} must exceed {PHI_FLOOR}")));
        }
        Ok(SwitchState {
            theta: phi.iter().map(|&p| softplus_inv(p - PHI_FLOOR)).collect(),
            alpha0,
            estimator,
            kl_weight: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `φ = softplus(θ) + 1e-6`.
    pub fn phi(&self) -> Vec<f64> {
        self.theta
            .iter()
            .map(|&t| crate::tensor::softplus(t) + PHI_FLOOR)
            .collect()
    }

    /// Posterior mean `φ/Σφ`.
    pub fn mean(&self) -> Vec<f64> {
        let phi = self.phi();
        let total: f64 = phi.iter().sum();
        phi.iter().map(|p| p / total).collect()
    }

    fn prior(&self) -> Vec<f64> {
        vec![self.alpha0; self.dim()]
    }

    /// Posterior as Dirichlet parameters (needs width ≥ 2).
    pub fn params(&self) -> Result<DirichletParams> {
        DirichletParams::new(self.phi())
    }

    /// `KL(q ‖ Dir(α0·1))`. Zero for a width-1 switch.
    pub fn kl(&self) -> f64 {
        dirichlet::kl_unchecked(&self.phi(), &self.prior())
    }

    pub fn kl_weight_for(&self, dataset_size: usize) -> f64 {
        self.kl_weight.unwrap_or(1.0 / dataset_size.max(1) as f64)
    }
}

/// One switch state per switch layer of `model`, all at `φ = 1`.
pub fn init_states(model: &ModelGraph, alpha0: f64, estimator: Estimator) -> Result<Vec<SwitchState>> {
    model
        .switch_dims()
        .into_iter()
        .map(|d| SwitchState::new(d, alpha0, estimator))
        .collect()
}

/// `s ∘ h` with `s` the given sample or, if absent, the posterior mean.
pub fn switch_forward(state: &SwitchState, h: &Tensor, sample: Option<&SimplexVector>) -> Result<Tensor> {
    let s = match sample {
        Some(s) => s.values().to_vec(),
        None => state.mean(),
    };
    if s.len() != state.dim() {
        return Err(Error::dim(format!(
            "sample of length {} for a switch of width {}",
            s.len(),
            state.dim()
        )));
    }
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let sv = tape.constant(Tensor::vector(s));
    let out = tape.broadcast_mul_channels(hv, sv)?;
    Ok(tape.value(out).clone())
}

/// Records `φ = softplus(θ) + floor` and the mean `φ/Σφ` on a tape.
pub fn mean_switch_var(tape: &mut Tape, theta: Var) -> Result<(Var, Var)> {
    let phi = tape.softplus(theta, PHI_FLOOR);
    let mean = tape.normalize(phi)?;
    Ok((phi, mean))
}

/// What switches outside the trained set are held at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InactiveSwitch {
    /// Their current posterior mean.
    #[default]
    Mean,
    /// All ones, as if the switch were absent.
    Unit,
}

/// Which switch states an objective evaluation differentiates.
#[derive(Clone, Copy, Debug)]
pub struct Scope<'a> {
    pub active: &'a [bool],
    pub inactive: InactiveSwitch,
}

/// Terms of the minibatch negative ELBO.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchObjectiveValue {
    pub neg_elbo: f64,
    pub expected_nll: f64,
    pub kl_term: f64,
    pub kl_weight: f64,
}

/// Objective value plus `∂/∂θ` for every state (zeros for states held
/// fixed), and the number of Gamma draws whose implicit gradient
/// underflowed and was taken as zero.
#[derive(Clone, Debug)]
pub struct SwitchGradient {
    pub value: SwitchObjectiveValue,
    pub theta_grads: Vec<Vec<f64>>,
    pub degenerate_draws: usize,
}

/// Draws one switch from `Dir(φ)` with per-coordinate implicit gradients.
/// A draw deep in the tail whose density underflows contributes no
/// gradient; its share of the simplex is negligible.
fn draw_switch<R: Rng + ?Sized>(phi: &[f64], rng: &mut R, degenerate: &mut usize) -> (Vec<f64>, Vec<f64>) {
    let mut gamma = Vec::with_capacity(phi.len());
    let mut dgamma = Vec::with_capacity(phi.len());
    for &a in phi {
        let y = gamma_draw(a, rng);
        let g = match gamma_implicit_grad(a, y) {
            Ok(g) if g.is_finite() => g,
            _ => {
                *degenerate += 1;
                0.0
            }
        };
        gamma.push(y);
        dgamma.push(g);
    }
    (gamma, dgamma)
}

/// Negative ELBO on one minibatch with every state in scope.
pub fn neg_elbo_minibatch<R: Rng + ?Sized>(
    model: &ModelGraph,
    states: &[SwitchState],
    inputs: &Tensor,
    labels: &[usize],
    dataset_size: usize,
    rng: &mut R,
) -> Result<SwitchObjectiveValue> {
    let active = vec![true; states.len()];
    let scope = Scope {
        active: &active,
        inactive: InactiveSwitch::Mean,
    };
    Ok(objective(model, states, scope, inputs, labels, dataset_size, rng, false)?.value)
}

/// Negative ELBO and its gradient with respect to the `θ` of the states
/// flagged active in `scope`. The KL of inactive states is left out.
pub fn neg_elbo_with_grad<R: Rng + ?Sized>(
    model: &ModelGraph,
    states: &[SwitchState],
    scope: Scope<'_>,
    inputs: &Tensor,
    labels: &[usize],
    dataset_size: usize,
    rng: &mut R,
) -> Result<SwitchGradient> {
    objective(model, states, scope, inputs, labels, dataset_size, rng, true)
}

#[allow(clippy::too_many_arguments)]
fn objective<R: Rng + ?Sized>(
    model: &ModelGraph,
    states: &[SwitchState],
    scope: Scope<'_>,
    inputs: &Tensor,
    labels: &[usize],
    dataset_size: usize,
    rng: &mut R,
    with_grad: bool,
) -> Result<SwitchGradient> {
    let active = scope.active;
    if labels.is_empty() {
        return Err(Error::contract("switch objective on an empty batch"));
    }
    if inputs.shape()[0] != labels.len() {
        return Err(Error::dim(format!(
            "{} inputs but {} labels",
            inputs.shape()[0],
            labels.len()
        )));
    }
    let dims = model.switch_dims();
    if dims.len() != states.len() || active.len() != states.len() {
        return Err(Error::dim(format!(
            "model has {} switches; got {} states and {} activity flags",
            dims.len(),
            states.len(),
            active.len()
        )));
    }
    for (i, (&d, s)) in dims.iter().zip(states).enumerate() {
        if d != s.dim() {
            return Err(Error::dim(format!("switch {i} has width {d}, state has {}", s.dim())));
        }
    }
    let weights: Vec<f64> = states
        .iter()
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|(s, _)| s.kl_weight_for(dataset_size))
        .collect();
    let kl_weight = weights.first().copied().unwrap_or(1.0 / dataset_size.max(1) as f64);
    if weights.iter().any(|&w| w != kl_weight) {
        return Err(Error::contract("active switch states disagree on kl_weight"));
    }

    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, Trainable::Frozen);
    let mut overrides: Vec<Option<Var>> = Vec::with_capacity(states.len());
    let mut thetas: Vec<Option<Var>> = Vec::with_capacity(states.len());
    let mut phis: Vec<Option<Var>> = Vec::with_capacity(states.len());
    let mut samplers: Vec<(usize, usize)> = Vec::new();
    for (i, s) in states.iter().enumerate() {
        if active[i] {
            let theta = tape.leaf(Tensor::vector(s.theta.clone()), with_grad);
            let (phi, mean) = mean_switch_var(&mut tape, theta)?;
            thetas.push(Some(theta));
            phis.push(Some(phi));
            match s.estimator {
                Estimator::ImplicitMc { k } if s.dim() > 1 => {
                    samplers.push((i, k));
                    overrides.push(None);
                }
                _ => overrides.push(Some(mean)),
            }
        } else {
            thetas.push(None);
            phis.push(None);
            let fixed = match scope.inactive {
                InactiveSwitch::Mean => s.mean(),
                InactiveSwitch::Unit => vec![1.0; s.dim()],
            };
            overrides.push(Some(tape.constant(Tensor::vector(fixed))));
        }
    }

    let mut kl_term = 0.0;
    let mut kl_nodes = Vec::new();
    for (i, s) in states.iter().enumerate() {
        if let Some(phi) = phis[i] {
            let node = tape.kl_dirichlet(phi, &s.prior())?;
            kl_term += tape.value(node).item()?;
            kl_nodes.push(node);
        }
    }
    if with_grad {
        for node in kl_nodes {
            tape.backward_scaled(node, kl_weight)?;
        }
    }

    // Layers before the first sampled switch are evaluated once.
    let switch_layers = model.switch_layers();
    let split = samplers
        .iter()
        .map(|&(i, _)| switch_layers[i])
        .min()
        .unwrap_or(model.layers().len());
    let x = tape.constant(inputs.clone());
    let prefix = model.run_layers(
        &mut tape,
        &bound,
        x,
        0..split,
        &mut ForwardHooks {
            switches: Some(&overrides),
            taps: None,
        },
    )?;
    let k = samplers.iter().map(|&(_, k)| k).max().unwrap_or(1);
    let mark = tape.len();
    let mut nll_total = 0.0;
    let mut degenerate = 0;
    for _ in 0..k {
        let mut sample_overrides = overrides.clone();
        for &(i, _) in &samplers {
            let phi_var = phis[i].expect("active");
            let phi_vals = tape.value(phi_var).data().to_vec();
            let (gamma, dgamma) = draw_switch(&phi_vals, rng, &mut degenerate);
            sample_overrides[i] = Some(tape.dirichlet_reparam(phi_var, &gamma, &dgamma)?);
        }
        let logits = model.run_layers(
            &mut tape,
            &bound,
            prefix,
            split..model.layers().len(),
            &mut ForwardHooks {
                switches: Some(&sample_overrides),
                taps: None,
            },
        )?;
        let loss = tape.softmax_cross_entropy(logits, labels)?;
        nll_total += tape.value(loss).item()?;
        if with_grad {
            tape.backward_scaled(loss, 1.0 / k as f64)?;
        }
        tape.truncate(mark);
    }
    let expected_nll = nll_total / k as f64;

    for l in &bound.layers {
        let frozen = match *l {
            LayerVars::Linear { weight, bias } => [Some(weight), Some(bias)],
            LayerVars::Affine { scale, shift } => [Some(scale), Some(shift)],
            _ => [None, None],
        };
        if frozen.iter().flatten().any(|&v| tape.grad(v).is_some()) {
            return Err(Error::contract("model weights received a gradient during switch training"));
        }
    }

    let theta_grads = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            thetas[i]
                .and_then(|t| tape.grad(t).map(|g| g.to_vec()))
                .unwrap_or_else(|| vec![0.0; s.dim()])
        })
        .collect();
    Ok(SwitchGradient {
        value: SwitchObjectiveValue {
            neg_elbo: expected_nll + kl_weight * kl_term,
            expected_nll,
            kl_term,
            kl_weight,
        },
        theta_grads,
        degenerate_draws: degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainingMode {
    /// Train one layer's switch at a time, input to output, holding the
    /// others at their current posterior mean.
    PerLayerSequential,
    /// Train every switch together.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchSchedule {
    pub mode: TrainingMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub inactive: InactiveSwitch,
}

impl Default for SwitchSchedule {
    fn default() -> Self {
        SwitchSchedule {
            mode: TrainingMode::PerLayerSequential,
            epochs: 1,
            batch_size: 100,
            lr: 0.1,
            inactive: InactiveSwitch::Mean,
        }
    }
}

/// Wall-clock time of one epoch over the optimiser loop.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// Switch ordinal trained, or `None` for joint training.
    pub switch: Option<usize>,
    pub epoch: usize,
    pub seconds: f64,
    /// Mean negative ELBO over the epoch's minibatches.
    pub mean_neg_elbo: f64,
}

#[derive(Clone, Debug)]
pub struct SwitchTraining {
    pub states: Vec<SwitchState>,
    pub epochs: Vec<EpochRecord>,
    pub degenerate_draws: usize,
}

/// Plain SGD on the switch parameters with the model frozen.
pub fn train_switches<R: Rng + ?Sized>(
    model: &ModelGraph,
    mut states: Vec<SwitchState>,
    data: &Dataset,
    schedule: &SwitchSchedule,
    rng: &mut R,
) -> Result<SwitchTraining> {
    if schedule.epochs == 0 {
        return Err(Error::contract("switch training needs at least one epoch"));
    }
    if data.is_empty() {
        return Err(Error::contract("switch training on an empty dataset"));
    }
    let groups: Vec<(Option<usize>, Vec<bool>)> = match schedule.mode {
        TrainingMode::Joint => vec![(None, vec![true; states.len()])],
        TrainingMode::PerLayerSequential => (0..states.len())
            .map(|i| {
                let mut a = vec![false; states.len()];
                a[i] = true;
                (Some(i), a)
            })
            .collect(),
    };
    let mut records = Vec::new();
    let mut degenerate = 0;
    for (switch, active) in groups {
        for epoch in 0..schedule.epochs {
            let batches = data.batch_indices(schedule.batch_size, Some(&mut *rng));
            let batches: Vec<Dataset> = batches.iter().map(|b| data.subset(b)).collect::<Result<_>>()?;
            let start = Instant::now();
            let mut total = 0.0;
            for batch in &batches {
                let scope = Scope {
                    active: &active,
                    inactive: schedule.inactive,
                };
                let g = neg_elbo_with_grad(model, &states, scope, &batch.inputs, &batch.labels, data.len(), rng)?;
                total += g.value.neg_elbo;
                degenerate += g.degenerate_draws;
                for (i, s) in states.iter_mut().enumerate() {
                    if active[i] {
                        for (t, gi) in s.theta.iter_mut().zip(&g.theta_grads[i]) {
                            *t -= schedule.lr * gi;
                        }
                    }
                }
            }
            records.push(EpochRecord {
                switch,
                epoch,
                seconds: start.elapsed().as_secs_f64(),
                mean_neg_elbo: total / batches.len() as f64,
            });
        }
    }
    Ok(SwitchTraining {
        states,
        epochs: records,
        degenerate_draws: degenerate,
    })
}

/// Per-channel posterior `(mean, std)` from the Dirichlet marginals.
pub fn posterior_report(state: &SwitchState) -> Vec<(f64, f64)> {
    let phi = state.phi();
    let total: f64 = phi.iter().sum();
    phi.iter()
        .map(|&p| {
            let var = p * (total - p) / (total * total * (total + 1.0));
            (p / total, var.max(0.0).sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_mlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn initial_phi_is_one_and_prior_kl_vanishes() {
        let s = SwitchState::new(5, 0.5, Estimator::AnalyticMean).unwrap();
        assert!(s.phi().iter().all(|&p| (p - 1.0).abs() < 1e-12));
        let p = SwitchState::at_prior(5, 0.5, Estimator::AnalyticMean).unwrap();
        assert!(p.kl().abs() < 1e-9, "kl {}", p.kl());
        assert!(s.kl() > 0.0);
        assert!(SwitchState::new(3, 0.5, Estimator::ImplicitMc { k: 0 }).is_err());
    }

    #[test]
    fn forward_with_mean_and_one_hot() {
        let s = SwitchState::new(4, 0.5, Estimator::AnalyticMean).unwrap();
        let h = Tensor::new(vec![2, 4], (1..=8).map(f64::from).collect()).unwrap();
        let out = switch_forward(&s, &h, None).unwrap();
        for (o, x) in out.data().iter().zip(h.data()) {
            assert!((o - x / 4.0).abs() < 1e-12);
        }
        let one_hot = SimplexVector::one_hot(4, 2);
        let out = switch_forward(&s, &h, Some(&one_hot)).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 7.0, 0.0]);
        assert!(switch_forward(&s, &Tensor::zeros(&[1, 3]), None).is_err());
    }

    #[test]
    fn zero_weight_model_gives_ln_k() {
        let mut m = build_mlp(3, 4, 5, 0).unwrap();
        m.zero_weights();
        let states = init_states(&m, 0.5, Estimator::AnalyticMean).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = neg_elbo_minibatch(&m, &states, &Tensor::ones(&[2, 3]), &[0, 4], 100, &mut rng).unwrap();
        assert!((v.expected_nll - 5f64.ln()).abs() < 1e-12);
        assert_eq!(v.neg_elbo, v.expected_nll + v.kl_weight * v.kl_term);
        assert_eq!(v.kl_weight, 0.01);
        let empty = neg_elbo_minibatch(&m, &states, &Tensor::ones(&[1, 3]), &[], 100, &mut rng);
        assert!(matches!(empty, Err(Error::Contract(_))));
    }

    #[test]
    fn posterior_report_at_prior() {
        let s = SwitchState::at_prior(4, 0.5, Estimator::AnalyticMean).unwrap();
        let r = posterior_report(&s);
        for (m, sd) in r {
            assert!((m - 0.25).abs() < 1e-12);
            assert!(sd > 0.0);
        }
    }

    #[test]
    fn ignored_switch_drifts_toward_prior() {
        let mut m = build_mlp(3, 4, 2, 0).unwrap();
        m.zero_weights();
        let states = vec![SwitchState::with_phi(&[3.0, 1.0, 2.0, 0.7], 0.5, Estimator::AnalyticMean).unwrap()];
        let before = states[0].kl();
        let data = Dataset::new(Tensor::ones(&[10, 3]), vec![0; 10]).unwrap();
        let sched = SwitchSchedule { epochs: 3, batch_size: 5, lr: 0.1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = train_switches(&m, states, &data, &sched, &mut rng).unwrap();
        assert!(out.states[0].kl() < before);
        let zero = SwitchSchedule { epochs: 0, ..sched };
        assert!(matches!(
            train_switches(&m, out.states, &data, &zero, &mut rng),
            Err(Error::Contract(_))
        ));
    }
}
