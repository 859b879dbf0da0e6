use super::Tensor;
use crate::error::{Error, Result};

/// Compare the tape gradient of a scalar function against central differences.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(f, x, eps, &all)
}

/// [`grad_check`] restricted to the coordinates in `indices`.
pub fn grad_check_at<F>(f: F, x: &Tensor, eps: f64, indices: &[usize]) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    assert!(eps > 0.0, "eps must be positive");
    let base = x.to_vec();
    let var = Tensor::variable(x.shape(), base.clone())?;
    let out = f(&var)?;
    if out.numel() != 1 {
        return Err(Error::NonScalarLoss(out.shape().to_vec()));
    }
    out.backward()?;
    let analytic = var.grad().unwrap_or_else(|| vec![0.0; base.len()]);

    let eval = |i: usize, delta: f64| -> Result<f64> {
        let mut d = base.clone();
        d[i] += delta;
        Ok(f(&Tensor::new(x.shape(), d)?)?.item())
    };
    let mut worst = 0.0f64;
    for &i in indices {
        let a = analytic[i];
        let numeric = (eval(i, eps)? - eval(i, -eps)?) / (2.0 * eps);
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
