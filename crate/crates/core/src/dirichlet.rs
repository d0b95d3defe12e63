//! Dirichlet distributions over importance switches.

use crate::error::{Error, Result};
use crate::special::{gamma_sample, ln_gamma, psi, GammaSample};
use rand::Rng;

/// Smallest simplex coordinate accepted by [`log_pdf`] after clamping.
pub const INTERIOR_CLAMP: f64 = 1e-12;

/// Concentration vector of a Dirichlet distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletParams {
    concentration: Vec<f64>,
}

impl DirichletParams {
    pub fn new(concentration: Vec<f64>) -> Result<Self> {
        if concentration.len() < 2 {
            return Err(Error::dim(format!(
                "a Dirichlet needs at least 2 coordinates, got {}",
                concentration.len()
            )));
        }
        if let Some(bad) = concentration.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::domain(format!("concentration {bad} is not positive")));
        }
        Ok(DirichletParams { concentration })
    }

    /// `Dir(alpha0 · 1_dim)`.
    pub fn symmetric(alpha0: f64, dim: usize) -> Result<Self> {
        Self::new(vec![alpha0; dim])
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn dim(&self) -> usize {
        self.concentration.len()
    }

    pub fn total(&self) -> f64 {
        self.concentration.iter().sum()
    }

    /// Marginal variance of each coordinate,
    /// `φ_j(Φ - φ_j) / (Φ²(Φ + 1))` with `Φ = Σφ`.
    pub fn marginal_variance(&self) -> Vec<f64> {
        let t = self.total();
        self.concentration
            .iter()
            .map(|&c| c * (t - c) / (t * t * (t + 1.0)))
            .collect()
    }
}

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexVector {
    values: Vec<f64>,
}

impl SimplexVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::domain("simplex entries must be non-negative"));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::domain(format!("simplex entries sum to {total}, not 1")));
        }
        Ok(SimplexVector { values })
    }

    /// Uniform point `1/D` in every coordinate.
    pub fn uniform(dim: usize) -> Self {
        SimplexVector {
            values: vec![1.0 / dim as f64; dim],
        }
    }

    /// Vertex `e_index` of the simplex.
    pub fn one_hot(dim: usize, index: usize) -> Self {
        let mut values = vec![0.0; dim];
        values[index] = 1.0;
        SimplexVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Draws `s = y / Σy` with `y_j ~ Gam(φ_j, 1)`, returning the Gamma draws
/// so callers can differentiate through the normalization.
pub fn sample<R: Rng + ?Sized>(
    params: &DirichletParams,
    rng: &mut R,
) -> Result<(SimplexVector, Vec<GammaSample>)> {
    let draws = params
        .concentration
        .iter()
        .map(|&c| gamma_sample(c, rng))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = draws.iter().map(|d| d.value).sum();
    if !(total > f64::MIN_POSITIVE * draws.len() as f64) {
        return Err(Error::numeric(format!(
            "every Gamma draw underflowed for concentrations {:?}",
            params.concentration
        )));
    }
    let values = draws.iter().map(|d| d.value / total).collect();
    Ok((SimplexVector { values }, draws))
}

/// Draws a simplex point without computing shape-gradients.
pub fn sample_values<R: Rng + ?Sized>(params: &DirichletParams, rng: &mut R) -> Result<SimplexVector> {
    let draws: Vec<f64> = params
        .concentration
        .iter()
        .map(|&c| crate::special::gamma_draw(c, rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if !(total > f64::MIN_POSITIVE * draws.len() as f64) {
        return Err(Error::numeric("every Gamma draw underflowed"));
    }
    Ok(SimplexVector {
        values: draws.iter().map(|d| d / total).collect(),
    })
}

/// Analytic mean `φ / Σφ`.
pub fn mean(params: &DirichletParams) -> SimplexVector {
    let total = params.total();
    SimplexVector {
        values: params.concentration.iter().map(|c| c / total).collect(),
    }
}

/// Closed-form `KL(Dir(q) ‖ Dir(p))`.
pub fn kl_divergence(q: &DirichletParams, p: &DirichletParams) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::dim(format!(
            "kl_divergence between dimensions {} and {}",
            q.dim(),
            p.dim()
        )));
    }
    Ok(kl_unchecked(&q.concentration, &p.concentration))
}

pub(crate) fn kl_unchecked(q: &[f64], p: &[f64]) -> f64 {
    let q_total: f64 = q.iter().sum();
    let p_total: f64 = p.iter().sum();
    let psi_total = psi(q_total);
    let mut kl = ln_gamma(q_total) - ln_gamma(p_total);
    for (&qj, &pj) in q.iter().zip(p) {
        kl += ln_gamma(pj) - ln_gamma(qj) + (qj - pj) * (psi(qj) - psi_total);
    }
    kl
}

/// Log density at an interior simplex point.
///
/// Coordinates below [`INTERIOR_CLAMP`] are clamped up; a coordinate that
/// needed clamping where `φ_j < 1` sits on a density singularity and is
/// reported as a numeric error.
pub fn log_pdf(params: &DirichletParams, s: &SimplexVector) -> Result<f64> {
    if s.dim() != params.dim() {
        return Err(Error::dim(format!(
            "log_pdf: point of dimension {} for a {}-dimensional Dirichlet",
            s.dim(),
            params.dim()
        )));
    }
    let mut lp = ln_gamma(params.total());
    for (&c, &v) in params.concentration.iter().zip(&s.values) {
        if v < INTERIOR_CLAMP && c < 1.0 {
            return Err(Error::numeric(format!(
                "log_pdf at boundary coordinate {v} with concentration {c} < 1"
            )));
        }
        lp += (c - 1.0) * v.max(INTERIOR_CLAMP).ln() - ln_gamma(c);
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(v: &[f64]) -> DirichletParams {
        DirichletParams::new(v.to_vec()).unwrap()
    }

    /// Adaptive Simpson on [a, b].
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn construction_validates() {
        assert!(DirichletParams::new(vec![1.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, -2.0]).is_err());
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&params(&[1.0, 3.0])).values(), &[0.25, 0.75]);
        let m = mean(&params(&[2.5; 8]));
        assert!(m.values().iter().all(|&v| v == 1.0 / 8.0));
        let p = params(&[0.5, 2.0, 4.0]);
        let scaled = params(&[1.0, 4.0, 8.0]);
        assert_eq!(mean(&p), mean(&scaled));
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = rng.random_range(2..10);
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..20.0)).collect();
            let q = params(&v);
            assert!(kl_divergence(&q, &q).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_two_two_vs_uniform() {
        // Dir(2,2) density 6 s(1-s) on the unit interval.
        let f = |s: f64| {
            let q = 6.0 * s * (1.0 - s);
            if q > 0.0 {
                q * q.ln()
            } else {
                0.0
            }
        };
        let oracle = simpson(&f, 0.0, 1.0, 1e-12);
        let kl = kl_divergence(&params(&[2.0, 2.0]), &params(&[1.0, 1.0])).unwrap();
        assert!((kl - oracle).abs() < 1e-9);
        assert!((kl - 0.1251).abs() < 1e-4);
    }

    #[test]
    fn kl_matches_symmetric_closed_form() {
        let phi = [0.3, 1.7, 4.2, 0.9];
        let a0: f64 = 0.5;
        let d = phi.len() as f64;
        let t: f64 = phi.iter().sum();
        let mut want = ln_gamma(t) - ln_gamma(d * a0) + d * ln_gamma(a0);
        for &p in &phi {
            want += -ln_gamma(p) + (p - a0) * (psi(p) - psi(t));
        }
        let got = kl_divergence(&params(&phi), &DirichletParams::symmetric(a0, 4).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-13);
    }

    #[test]
    fn kl_dimension_mismatch() {
        assert!(matches!(
            kl_divergence(&params(&[1.0, 1.0]), &params(&[1.0, 1.0, 1.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn log_pdf_examples() {
        let u = params(&[1.0, 1.0]);
        for s in [0.1, 0.5, 0.93] {
            let v = SimplexVector::new(vec![s, 1.0 - s]).unwrap();
            assert!(log_pdf(&u, &v).unwrap().abs() < 1e-14);
        }
        let sym = params(&[0.7, 0.7, 0.7]);
        let a = log_pdf(&sym, &SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        let b = log_pdf(&sym, &SimplexVector::new(vec![0.5, 0.2, 0.3]).unwrap()).unwrap();
        assert_eq!(a, b);
        let edge = SimplexVector::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(log_pdf(&params(&[0.5, 2.0]), &edge), Err(Error::Numeric(_))));
    }

    #[test]
    fn log_pdf_integrates_to_one_on_two_simplex() {
        // Dir(2,3,1.5) over {s1,s2 >= 0, s1+s2 <= 1}; nested 1-D quadrature.
        let p = params(&[2.0, 3.0, 1.5]);
        let inner = |s1: f64| {
            let g = |s2: f64| {
                let s3 = 1.0 - s1 - s2;
                if s1 <= 0.0 || s2 <= 0.0 || s3 <= 0.0 {
                    return 0.0;
                }
                log_pdf(&p, &SimplexVector { values: vec![s1, s2, s3] }).unwrap().exp()
            };
            simpson(&g, 0.0, 1.0 - s1, 1e-10)
        };
        let total = simpson(&inner, 0.0, 1.0, 1e-9);
        assert!((total - 1.0).abs() < 1e-6, "total = {total}");
    }

    #[test]
    fn samples_lie_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = params(&[0.05, 0.3, 2.0, 7.0]);
        for _ in 0..2000 {
            let (s, draws) = sample(&p, &mut rng).unwrap();
            assert_eq!(draws.len(), 4);
            assert!(SimplexVector::new(s.values().to_vec()).is_ok());
        }
    }

    #[test]
    fn sample_means_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        for conc in [vec![0.8, 0.8], vec![2.0, 3.0, 5.0]] {
            let p = params(&conc);
            let var = p.marginal_variance();
            let want = mean(&p);
            let mut acc = vec![0.0; conc.len()];
            for _ in 0..n {
                let s = sample_values(&p, &mut rng).unwrap();
                acc.iter_mut().zip(s.values()).for_each(|(a, v)| *a += v);
            }
            for j in 0..conc.len() {
                let m = acc[j] / n as f64;
                let se = (var[j] / n as f64).sqrt();
                assert!((m - want.values()[j]).abs() <= 4.0 * se);
            }
        }
    }
}
