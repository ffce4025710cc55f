//! Windowed pooling and bilinear resampling.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Pooling reduction kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    /// Maximum; backward routes the gradient to the first argmax in
    /// row-major window order.
    Max,
    /// Uniform average.
    Avg,
}

/// Square-window pooling with the given stride and no padding. Output
/// spatial size is `(H - window)/stride + 1`.
pub fn pool<T: Scalar>(
    x: &Tensor<T>,
    kind: PoolKind,
    window: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    if window == 0 || stride == 0 {
        return Err(Error::Shape("pool: window and stride must be positive".into()));
    }
    if window > h || window > w {
        return Err(Error::Shape(format!("pool: window {window} exceeds input {h}x{w}")));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;

    let mut out = vec![T::zero(); n * c * oh * ow];
    let mut argmax = match kind {
        PoolKind::Max => vec![0usize; n * c * oh * ow],
        PoolKind::Avg => Vec::new(),
    };
    let inv_area = T::from_f64_lossy(1.0 / (window * window) as f64);
    x.with_data(|xd| {
        for ni in 0..n {
            for ci in 0..c {
                let plane = (ni * c + ci) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let oi = ((ni * c + ci) * oh + oy) * ow + ox;
                        match kind {
                            PoolKind::Max => {
                                let mut best = T::neg_infinity();
                                let mut best_i = 0usize;
                                for ky in 0..window {
                                    let row = plane + (oy * stride + ky) * w + ox * stride;
                                    for kx in 0..window {
                                        let v = xd[row + kx];
                                        if v > best {
                                            best = v;
                                            best_i = row + kx;
                                        }
                                    }
                                }
                                out[oi] = best;
                                argmax[oi] = best_i;
                            }
                            PoolKind::Avg => {
                                let mut acc = T::zero();
                                for ky in 0..window {
                                    let row = plane + (oy * stride + ky) * w + ox * stride;
                                    for kx in 0..window {
                                        acc = acc + xd[row + kx];
                                    }
                                }
                                out[oi] = acc * inv_area;
                            }
                        }
                    }
                }
            }
        }
    });

    let p = x.clone();
    Tensor::from_op("pool", [n, c, oh, ow], out, vec![x.clone()], move |g| {
        let mut gx = vec![T::zero(); n * c * h * w];
        match kind {
            PoolKind::Max => {
                for (oi, &src) in argmax.iter().enumerate() {
                    gx[src] = gx[src] + g[oi];
                }
            }
            PoolKind::Avg => {
                for ni in 0..n {
                    for ci in 0..c {
                        let plane = (ni * c + ci) * h * w;
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let ge = g[((ni * c + ci) * oh + oy) * ow + ox] * inv_area;
                                for ky in 0..window {
                                    let row = plane + (oy * stride + ky) * w + ox * stride;
                                    for kx in 0..window {
                                        gx[row + kx] = gx[row + kx] + ge;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        p.accumulate_grad(&gx);
    })
}

/// Corner-aligned bilinear resampling to `(out_h, out_w)`: the first and
/// last samples map onto the first and last input positions, so constants
/// and axis-aligned ramps reproduce exactly.
pub fn upsample_bilinear<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("upsample_bilinear: output dims must be positive".into()));
    }

    // Source coordinate and lerp weight per output row/column.
    let axis_map = |out_len: usize, in_len: usize| -> Vec<(usize, usize, T)> {
        (0..out_len)
            .map(|o| {
                if out_len == 1 || in_len == 1 {
                    return (0, 0, T::zero());
                }
                let src = o as f64 * (in_len - 1) as f64 / (out_len - 1) as f64;
                let lo = src.floor() as usize;
                let lo = lo.min(in_len - 2);
                (lo, lo + 1, T::from_f64_lossy(src - lo as f64))
            })
            .collect()
    };
    let ymap = axis_map(out_h, h);
    let xmap = axis_map(out_w, w);

    let mut out = vec![T::zero(); n * c * out_h * out_w];
    x.with_data(|xd| {
        for ni in 0..n {
            for ci in 0..c {
                let plane = (ni * c + ci) * h * w;
                for (oy, &(y0, y1, wy)) in ymap.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xmap.iter().enumerate() {
                        let v00 = xd[plane + y0 * w + x0];
                        let v01 = xd[plane + y0 * w + x1];
                        let v10 = xd[plane + y1 * w + x0];
                        let v11 = xd[plane + y1 * w + x1];
                        // Lerp form keeps constants exact.
                        let top = v00 + wx * (v01 - v00);
                        let bot = v10 + wx * (v11 - v10);
                        out[((ni * c + ci) * out_h + oy) * out_w + ox] = top + wy * (bot - top);
                    }
                }
            }
        }
    });

    let p = x.clone();
    let (ymap_b, xmap_b) = (ymap, xmap);
    Tensor::from_op("upsample_bilinear", [n, c, out_h, out_w], out, vec![x.clone()], move |g| {
        let one = T::one();
        let mut gx = vec![T::zero(); n * c * h * w];
        for ni in 0..n {
            for ci in 0..c {
                let plane = (ni * c + ci) * h * w;
                for (oy, &(y0, y1, wy)) in ymap_b.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xmap_b.iter().enumerate() {
                        let ge = g[((ni * c + ci) * out_h + oy) * out_w + ox];
                        gx[plane + y0 * w + x0] = gx[plane + y0 * w + x0] + ge * (one - wy) * (one - wx);
                        gx[plane + y0 * w + x1] = gx[plane + y0 * w + x1] + ge * (one - wy) * wx;
                        gx[plane + y1 * w + x0] = gx[plane + y1 * w + x0] + ge * wy * (one - wx);
                        gx[plane + y1 * w + x1] = gx[plane + y1 * w + x1] + ge * wy * wx;
                    }
                }
            }
        }
        p.accumulate_grad(&gx);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn constant_input_pools_to_constant() {
        let x = Tensor::full([1, 2, 4, 4], 3.5f64).unwrap();
        for kind in [PoolKind::Max, PoolKind::Avg] {
            let y = pool(&x, kind, 2, 2).unwrap();
            assert_eq!(y.shape(), [1, 2, 2, 2]);
            assert!(y.to_vec().iter().all(|&v| v == 3.5));
        }
    }

    #[test]
    fn hand_window() {
        let x = Tensor::from_data([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool(&x, PoolKind::Max, 2, 2).unwrap().item(), 4.0);
        assert_eq!(pool(&x, PoolKind::Avg, 2, 2).unwrap().item(), 2.5);
    }

    #[test]
    fn coarse_grid_shape() {
        // Window 64 stride 64 over 256x64 leaves a 4x1 grid.
        let x = Tensor::<f64>::zeros([1, 1, 256, 64]).unwrap();
        let y = pool(&x, PoolKind::Max, 64, 64).unwrap();
        assert_eq!(y.shape(), [1, 1, 4, 1]);
    }

    #[test]
    fn window_larger_than_input_is_error() {
        let x = Tensor::<f64>::zeros([1, 1, 4, 4]).unwrap();
        assert!(matches!(pool(&x, PoolKind::Max, 5, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn max_pool_tie_routes_to_first() {
        let x = Tensor::parameter([1, 1, 2, 2], vec![2.0, 2.0, 1.0, 1.0]).unwrap();
        let y = pool(&x, PoolKind::Max, 2, 2).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_gradcheck() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for kind in [PoolKind::Max, PoolKind::Avg] {
            // Values spaced apart so finite differences never cross an argmax tie.
            let mut vals: Vec<f64> = (0..2 * 2 * 4 * 4).map(|i| i as f64 * 0.13).collect();
            use rand::seq::SliceRandom;
            vals.shuffle(&mut rng);
            let x = Tensor::parameter([2, 2, 4, 4], vals).unwrap();
            let err =
                gradcheck::max_rel_error(&[&x], || pool(&x, kind, 2, 2)?.sigmoid()?.sum_all()).unwrap();
            assert!(err < 1e-6, "pool {kind:?} gradcheck rel error {err}");
        }
    }

    #[test]
    fn upsample_preserves_constants() {
        let x = Tensor::full([1, 1, 3, 5], 2.25f64).unwrap();
        let y = upsample_bilinear(&x, 7, 11).unwrap();
        assert!(y.to_vec().iter().all(|&v| v == 2.25));
    }

    #[test]
    fn upsample_two_by_three_midpoint() {
        let x = Tensor::from_data([1, 1, 2, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let y = upsample_bilinear(&x, 2, 3).unwrap();
        assert_eq!(y.to_vec(), vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn upsample_reproduces_ramp() {
        // Axis-aligned linear ramp upsamples exactly (corner-aligned).
        let x = Tensor::from_data([1, 1, 1, 3], vec![0.0, 1.0, 2.0]).unwrap();
        let y = upsample_bilinear(&x, 1, 5).unwrap();
        let expect = [0.0f64, 0.5, 1.0, 1.5, 2.0];
        for (a, b) in y.to_vec().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_gradcheck() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let x = Tensor::parameter([1, 2, 3, 4], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let err = gradcheck::max_rel_error(&[&x], || {
            upsample_bilinear(&x, 5, 9)?.sigmoid()?.sum_all()
        })
        .unwrap();
        assert!(err < 1e-6, "upsample gradcheck rel error {err}");
    }

    #[test]
    fn downsample_to_single_cell() {
        let x = Tensor::from_data([1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let y = upsample_bilinear(&x, 1, 1).unwrap();
        assert_eq!(y.item(), 1.0, "single output samples the first corner");
    }
}
