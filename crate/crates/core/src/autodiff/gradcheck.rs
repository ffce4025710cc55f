//! Central finite-difference gradient verification.
//!
//! This is the independent oracle against which every operator's analytic
//! backward rule is checked; it only ever evaluates forward passes.

use crate::error::Result;

use super::tensor::Tensor;

/// Default perturbation for `f64` checks.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Numeric gradient of `f` (a scalar-valued graph builder over the current
/// values of `inputs`) with respect to every element of every input.
pub fn numeric_gradients(
    inputs: &[&Tensor<f64>],
    mut f: impl FnMut() -> Result<Tensor<f64>>,
    eps: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut grads = Vec::with_capacity(inputs.len());
    for input in inputs {
        let base = input.to_vec();
        let mut g = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            input.set_data(&plus);
            let fp = f()?.item();

            let mut minus = base.clone();
            minus[i] -= eps;
            input.set_data(&minus);
            let fm = f()?.item();

            g[i] = (fp - fm) / (2.0 * eps);
        }
        input.set_data(&base);
        grads.push(g);
    }
    Ok(grads)
}

/// Relative error between two gradient vectors:
/// `||a - b||_2 / max(||a||_2, ||b||_2, 1e-12)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Run `f` forward and backward, compare analytic gradients of `inputs`
/// against central finite differences, and return the worst relative error.
pub fn max_rel_error(
    inputs: &[&Tensor<f64>],
    mut f: impl FnMut() -> Result<Tensor<f64>>,
) -> Result<f64> {
    for input in inputs {
        input.zero_grad();
    }
    let y = f()?;
    y.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    let numeric = numeric_gradients(inputs, f, DEFAULT_EPS)?;
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        worst = worst.max(rel_error(a, n));
    }
    Ok(worst)
}
