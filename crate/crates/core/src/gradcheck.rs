//! Central finite differences, the oracle every analytic gradient is checked
//! against.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for every coordinate of `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("finite_diff_grad objective"));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Gradients whose infinity norm is below this are treated as zero when
/// normalising; a parameter the loss is invariant to (a bias added before a
/// softmax) otherwise compares roundoff against roundoff.
pub const SCALE_FLOOR: f64 = 1e-10;

/// Largest elementwise gap between two gradient tensors, relative to the
/// larger of their infinity norms (floored at [`SCALE_FLOOR`]).
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> Result<f64> {
    let diff = analytic.max_abs_diff(numeric)?;
    let scale = analytic.max_abs().max(numeric.max_abs()).max(SCALE_FLOOR);
    Ok(diff / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::softplus;

    #[test]
    fn relative_error_scaling() {
        let a = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let n = Tensor::vector(vec![1.0, -2.002]).unwrap();
        assert!((max_relative_error(&a, &n).unwrap() - 0.002 / 2.002).abs() < 1e-15);
        let tiny = Tensor::vector(vec![1e-18, 0.0]).unwrap();
        assert!(max_relative_error(&tiny, &Tensor::zeros(&[2])).unwrap() < 1e-7);
        assert_eq!(max_relative_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn quadratic() {
        let g = finite_diff_grad(
            |t| Ok(t.data()[0] * t.data()[0]),
            &Tensor::scalar(3.0),
            1e-6,
        )
        .unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn softplus_sum_at_zero() {
        let x = Tensor::zeros(&[4]);
        let g = finite_diff_grad(
            |t| Ok(t.data().iter().map(|&v| softplus(v)).sum()),
            &x,
            1e-6,
        )
        .unwrap();
        assert!(g.data().iter().all(|v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let r = finite_diff_grad(|_| Ok(f64::NAN), &Tensor::scalar(1.0), 1e-6);
        assert!(r.is_err());
        assert!(finite_diff_grad(|_| Ok(0.0), &Tensor::scalar(1.0), 0.0).is_err());
    }
}
