//! Scalar special functions and unit-scale Gamma machinery.
//!
//! Everything here is pure; samplers take the caller's RNG so each thread
//! can own its own stream.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;
/// Shift arguments up to this point before using asymptotic expansions.
const ASYMPTOTIC_FROM: f64 = 10.0;
const TINY: f64 = 1e-300;
const MAX_SERIES_TERMS: usize = 100_000;
/// Quantile inversion clamps its probability into `[U_CLAMP, 1 - U_CLAMP]`.
pub const U_CLAMP: f64 = 1e-12;
const QUANTILE_MAX_ITER: usize = 200;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} requires a finite x > 0, got {x}")))
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn lgamma(x: f64) -> Result<f64> {
    check_positive("lgamma", x)?;
    Ok(ln_gamma(x))
}

/// Unchecked `ln Γ(x)`; callers guarantee `x > 0`.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    let mut z = x;
    let mut prod = 1.0;
    while z < ASYMPTOTIC_FROM {
        prod *= z;
        z += 1.0;
    }
    stirling(z) - prod.ln()
}

fn stirling(z: f64) -> f64 {
    // Bernoulli-number tail B_2k / (2k(2k-1) z^(2k-1)).
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for c in C.iter().rev() {
        series = series * inv2 + c;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_TWO_PI + series * inv
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(psi(x))
}

pub(crate) fn psi(x: f64) -> f64 {
    let mut z = x;
    let mut acc = 0.0;
    while z < ASYMPTOTIC_FROM {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    // B_2k / (2k z^2k)
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32_760.0,
        1.0 / 12.0,
    ];
    let mut series = 0.0;
    for c in C.iter().rev() {
        series = series * inv2 + c;
    }
    acc + z.ln() - 0.5 / z - series * inv2
}

/// Trigamma `ψ'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    Ok(psi1(x))
}

pub(crate) fn psi1(x: f64) -> f64 {
    let mut z = x;
    let mut acc = 0.0;
    while z < ASYMPTOTIC_FROM {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // B_2k / z^(2k+1)
    const C: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let mut series = 0.0;
    for c in C.iter().rev() {
        series = series * inv2 + c;
    }
    acc + inv + 0.5 * inv2 + series * inv2 * inv
}

/// `ln` of the unit-scale Gamma density prefactor `x^a e^{-x} / Γ(a)`.
fn ln_prefactor(shape: f64, x: f64) -> f64 {
    shape * x.ln() - x - ln_gamma(shape)
}

/// Density of `Gam(shape, 1)` at `x > 0`.
pub fn gamma_density(shape: f64, x: f64) -> f64 {
    ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp()
}

/// Lower regularized incomplete gamma `P(shape, x)`, i.e. the CDF of
/// `Gam(shape, 1)`.
pub fn gamma_regularized_p(shape: f64, x: f64) -> Result<f64> {
    check_positive("gamma_regularized_p shape", shape)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!(
            "gamma_regularized_p requires x >= 0, got {x}"
        )));
    }
    regularized_p(shape, x)
}

fn regularized_p(a: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        p_series(a, x)
    } else {
        q_continued_fraction(a, x).map(|q| 1.0 - q)
    }
}

fn p_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_SERIES_TERMS {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * f64::EPSILON {
            return Ok((sum * ln_prefactor(a, x).exp()).min(1.0));
        }
    }
    Err(Error::numeric(format!(
        "incomplete gamma series did not converge (shape {a}, x {x})"
    )))
}

/// Upper regularized gamma `Q(a, x)` by modified Lentz.
fn q_continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_SERIES_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            return Ok((ln_prefactor(a, x).exp() * h).clamp(0.0, 1.0));
        }
    }
    Err(Error::numeric(format!(
        "incomplete gamma continued fraction did not converge (shape {a}, x {x})"
    )))
}

/// Inverse of [`gamma_regularized_p`] in `x`.
///
/// Halley steps on `P(shape, x) - u`, kept inside a shrinking bracket and
/// falling back to bisection whenever a step escapes it.
pub fn gamma_quantile(shape: f64, u: f64) -> Result<f64> {
    check_positive("gamma_quantile shape", shape)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!(
            "gamma_quantile requires 0 < u < 1, got {u}"
        )));
    }
    let u = u.clamp(U_CLAMP, 1.0 - U_CLAMP);
    let a = shape;
    let mut x = initial_quantile_guess(a, u);
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    for _ in 0..QUANTILE_MAX_ITER {
        let err = regularized_p(a, x)? - u;
        if err == 0.0 {
            return Ok(x);
        }
        if err < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let pdf = gamma_density(a, x);
        let mut next = if pdf > 0.0 && pdf.is_finite() {
            let t = err / pdf;
            let halley = (t * ((a - 1.0) / x - 1.0)).min(1.0);
            x - t / (1.0 - 0.5 * halley)
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) };
        }
        let converged = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs();
        x = next;
        if converged {
            let residual = (regularized_p(a, x)? - u).abs();
            if residual <= 1e-10 {
                return Ok(x);
            }
        }
    }
    let residual = (regularized_p(a, x)? - u).abs();
    if residual <= 1e-10 {
        Ok(x)
    } else {
        Err(Error::numeric(format!(
            "gamma_quantile did not converge after {QUANTILE_MAX_ITER} iterations \
             (shape {a}, u {u}, residual {residual:e})"
        )))
    }
}

fn initial_quantile_guess(a: f64, u: f64) -> f64 {
    if a > 1.0 {
        // Wilson-Hilferty with a rational normal-quantile approximation.
        let pp = if u < 0.5 { u } else { 1.0 - u };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if u < 0.5 {
            z = -z;
        }
        (a * (1.0 - 1.0 / (9.0 * a) - z / (3.0 * a.sqrt())).powi(3)).max(1e-3)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if u < t {
            (u / t).powf(1.0 / a).max(f64::MIN_POSITIVE)
        } else {
            1.0 - (1.0 - (u - t) / (1.0 - t)).ln()
        }
    }
}

/// One `Gam(shape, 1)` draw together with its implicit shape-gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaSample {
    pub value: f64,
    pub shape: f64,
    /// Effective uniform `P(shape, value)` that reproduces the draw.
    pub u: f64,
    /// `∂value/∂shape` holding `u` fixed.
    pub dvalue_dshape: f64,
}

/// Draws a `Gam(shape, 1)` variate (value only).
///
/// Marsaglia-Tsang squeeze for `shape >= 1`; smaller shapes draw at
/// `shape + 1` and multiply by `U^{1/shape}`. Results that would underflow
/// are floored at `f64::MIN_POSITIVE`.
pub fn gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let base = marsaglia_tsang(shape + 1.0, rng);
        let u: f64 = rng.random::<f64>();
        let ln_v = base.ln() + u.max(f64::MIN_POSITIVE).ln() / shape;
        return ln_v.exp().max(f64::MIN_POSITIVE);
    }
    marsaglia_tsang(shape, rng)
}

fn marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random::<f64>();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draws a Gamma variate and attaches the quantities needed to
/// differentiate it with respect to `shape`.
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<GammaSample> {
    check_positive("gamma_sample shape", shape)?;
    let value = gamma_draw(shape, rng);
    let u = regularized_p(shape, value)?;
    let dvalue_dshape = gamma_implicit_grad(shape, value)?;
    Ok(GammaSample {
        value,
        shape,
        u,
        dvalue_dshape,
    })
}

/// `∂y/∂shape` at fixed `u = P(shape, y)` by implicit differentiation:
/// `-(∂P/∂shape) / (∂P/∂y)`.
///
/// `∂P/∂y` is the density; `∂P/∂shape` is a central difference with step
/// `1e-5·max(1, shape)`, halved towards zero for shapes below that step.
pub fn gamma_implicit_grad(shape: f64, value: f64) -> Result<f64> {
    check_positive("gamma_implicit_grad shape", shape)?;
    check_positive("gamma_implicit_grad value", value)?;
    let pdf = gamma_density(shape, value);
    if !(pdf > 0.0 && pdf.is_finite()) {
        return Err(Error::numeric(format!(
            "gamma density underflow at shape {shape}, value {value}"
        )));
    }
    let h = (1e-5 * shape.max(1.0)).min(0.5 * shape);
    let dp_dshape =
        (regularized_p(shape + h, value)? - regularized_p(shape - h, value)?) / (2.0 * h);
    Ok(-dp_dshape / pdf)
}
