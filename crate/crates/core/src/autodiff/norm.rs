//! Batch normalization over (N, H, W) per channel.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

fn check_affine<T: Scalar>(name: &str, t: &Tensor<T>, channels: usize) -> Result<()> {
    if t.shape() != [1, channels, 1, 1] {
        return Err(Error::Shape(format!(
            "batch_norm: {name} shape {:?} does not match [1, {channels}, 1, 1]",
            t.shape()
        )));
    }
    Ok(())
}

/// Normalize per channel. Training mode uses batch statistics (biased
/// variance) and updates the running buffers in place with
/// `running = (1 - momentum) * running + momentum * batch`; eval mode
/// normalizes with the running buffers. No gradient flows into the running
/// buffers.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    training: bool,
    momentum: T,
    eps: T,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    check_affine("gamma", gamma, c)?;
    check_affine("beta", beta, c)?;
    check_affine("running_mean", running_mean, c)?;
    check_affine("running_var", running_var, c)?;
    let m = n * h * w;
    if m == 0 {
        return Err(Error::Numeric("batch_norm: empty reduction set".into()));
    }
    let inv_m = T::from_f64_lossy(1.0 / m as f64);
    let plane = h * w;

    let (mean, var) = if training {
        // Channel statistics accumulate in f64 so f32 batches stay stable.
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        x.with_data(|xd| {
            for ci in 0..c {
                let mut acc = 0.0f64;
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for &v in &xd[base..base + plane] {
                        acc += v.to_f64().unwrap_or(0.0);
                    }
                }
                let mu = T::from_f64_lossy(acc / m as f64);
                mean[ci] = mu;
                let mut acc2 = 0.0f64;
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for &v in &xd[base..base + plane] {
                        let d = (v - mu).to_f64().unwrap_or(0.0);
                        acc2 += d * d;
                    }
                }
                var[ci] = T::from_f64_lossy(acc2 / m as f64);
            }
        });
        // Exponential moving average of the batch statistics.
        let one = T::one();
        let rm: Vec<T> = running_mean
            .to_vec()
            .iter()
            .zip(&mean)
            .map(|(&r, &b)| (one - momentum) * r + momentum * b)
            .collect();
        let rv: Vec<T> = running_var
            .to_vec()
            .iter()
            .zip(&var)
            .map(|(&r, &b)| (one - momentum) * r + momentum * b)
            .collect();
        running_mean.set_data(&rm);
        running_var.set_data(&rv);
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let gvals = gamma.to_vec();
    let bvals = beta.to_vec();

    let mut out = vec![T::zero(); n * c * plane];
    let mut xhat = vec![T::zero(); n * c * plane];
    x.with_data(|xd| {
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    let xh = (xd[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = xh;
                    out[i] = gvals[ci] * xh + bvals[ci];
                }
            }
        }
    });

    let (px, pg, pbeta) = (x.clone(), gamma.clone(), beta.clone());
    let parents = vec![x.clone(), gamma.clone(), beta.clone()];
    Tensor::from_op("batch_norm", [n, c, h, w], out, parents, move |g| {
        let mut gbeta = vec![T::zero(); c];
        let mut ggamma = vec![T::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    gbeta[ci] = gbeta[ci] + g[i];
                    ggamma[ci] = ggamma[ci] + g[i] * xhat[i];
                }
            }
        }
        let mut gx = vec![T::zero(); n * c * plane];
        if training {
            // dx = gamma/std * (g - mean(g) - xhat * mean(g*xhat)) per channel.
            for ci in 0..c {
                let mean_g = gbeta[ci] * inv_m;
                let mean_gx = ggamma[ci] * inv_m;
                let scale = gvals[ci] * inv_std[ci];
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for i in base..base + plane {
                        gx[i] = scale * (g[i] - mean_g - xhat[i] * mean_gx);
                    }
                }
            }
        } else {
            for ci in 0..c {
                let scale = gvals[ci] * inv_std[ci];
                for ni in 0..n {
                    let base = (ni * c + ci) * plane;
                    for i in base..base + plane {
                        gx[i] = scale * g[i];
                    }
                }
            }
        }
        px.accumulate_grad(&gx);
        pg.accumulate_grad(&ggamma);
        pbeta.accumulate_grad(&gbeta);
    })
}
