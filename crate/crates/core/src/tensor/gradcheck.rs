//! Central finite differences for checking tape gradients.

use super::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`. The step for coordinate `i`
/// is `h · max(1, |x_i|)`.
pub fn finite_difference<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::domain(format!("finite difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let x0 = x.data()[i];
        let step = h * x0.abs().max(1.0);
        probe.data_mut()[i] = x0 + step;
        let up = f(&probe)?;
        probe.data_mut()[i] = x0 - step;
        let down = f(&probe)?;
        probe.data_mut()[i] = x0;
        grad.push((up - down) / (2.0 * step));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// `max_i |a_i − b_i| / max(|b_i|, floor)`, with `b` the reference.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "compared gradients differ in length");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_derivative() {
        let x = Tensor::vector(vec![-2.0, 0.5, 3.0]);
        let g = finite_difference(|t| Ok(t.data().iter().map(|v| v * v * v).sum()), &x, 1e-6).unwrap();
        let exact: Vec<f64> = x.data().iter().map(|v| 3.0 * v * v).collect();
        assert!(max_relative_error(g.data(), &exact, 1e-3) < 1e-8);
        assert!(finite_difference(|_| Ok(0.0), &x, 0.0).is_err());
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(max_relative_error(&[1.1, 0.0], &[1.0, 1e-9], 1.0), 0.10000000000000009);
        assert!((max_relative_error(&[0.0], &[1e-9], 1e-3) - 1e-6).abs() < 1e-18);
    }
}
