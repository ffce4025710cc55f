//! Cross-correlation and its adjoint.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, out_ch: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [1, out_ch, 1, 1] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match [1, {out_ch}, 1, 1]",
                b.shape()
            )));
        }
    }
    Ok(())
}

/// 2-D cross-correlation with zero padding.
///
/// `x` is `(N, Cin, H, W)`, `weight` is `(Cout, Cin, KH, KW)`, optional bias
/// is `(1, Cout, 1, 1)`. Output spatial size is
/// `floor((H + 2*pad - KH)/stride) + 1`.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [n, cin, h, w] = x.shape();
    let [cout, wcin, kh, kw] = weight.shape();
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv2d: input has {cin} channels but weight expects {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::Shape("conv2d: stride must be positive".into()));
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::Shape(format!(
            "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * padding,
            w + 2 * padding
        )));
    }
    check_bias(bias, cout)?;
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;

    let mut out = vec![T::zero(); n * cout * oh * ow];
    x.with_data(|xd| {
        weight.with_data(|wd| {
            let bvals: Vec<T> = match bias {
                Some(b) => b.to_vec(),
                None => vec![T::zero(); cout],
            };
            for ni in 0..n {
                for co in 0..cout {
                    let b0 = bvals[co];
                    for oy in 0..oh {
                        let iy0 = (oy * stride) as isize - padding as isize;
                        let ky_lo = (-iy0).max(0) as usize;
                        let ky_hi = kh.min((h as isize - iy0).max(0) as usize);
                        for ox in 0..ow {
                            let ix0 = (ox * stride) as isize - padding as isize;
                            let kx_lo = (-ix0).max(0) as usize;
                            let kx_hi = kw.min((w as isize - ix0).max(0) as usize);
                            let mut acc = b0;
                            for ci in 0..cin {
                                let xplane = ((ni * cin + ci) * h) as isize;
                                let wbase = ((co * cin + ci) * kh) * kw;
                                for ky in ky_lo..ky_hi {
                                    let xrow = ((xplane + iy0 + ky as isize) as usize) * w;
                                    let wrow = wbase + ky * kw;
                                    for kx in kx_lo..kx_hi {
                                        let ix = (ix0 + kx as isize) as usize;
                                        acc = acc + wd[wrow + kx] * xd[xrow + ix];
                                    }
                                }
                            }
                            out[((ni * cout + co) * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
            }
        })
    });

    let (px, pw) = (x.clone(), weight.clone());
    let pb = bias.cloned();
    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Tensor::from_op("conv2d", [n, cout, oh, ow], out, parents, move |g| {
        let mut gx = vec![T::zero(); n * cin * h * w];
        let mut gw = vec![T::zero(); cout * cin * kh * kw];
        px.with_data(|xd| {
            pw.with_data(|wd| {
                for ni in 0..n {
                    for co in 0..cout {
                        for oy in 0..oh {
                            let iy0 = (oy * stride) as isize - padding as isize;
                            let ky_lo = (-iy0).max(0) as usize;
                            let ky_hi = kh.min((h as isize - iy0).max(0) as usize);
                            for ox in 0..ow {
                                let ix0 = (ox * stride) as isize - padding as isize;
                                let kx_lo = (-ix0).max(0) as usize;
                                let kx_hi = kw.min((w as isize - ix0).max(0) as usize);
                                let ge = g[((ni * cout + co) * oh + oy) * ow + ox];
                                for ci in 0..cin {
                                    let xplane = ((ni * cin + ci) * h) as isize;
                                    let wbase = ((co * cin + ci) * kh) * kw;
                                    for ky in ky_lo..ky_hi {
                                        let row = ((xplane + iy0 + ky as isize) as usize) * w;
                                        let wrow = wbase + ky * kw;
                                        for kx in kx_lo..kx_hi {
                                            let ix = (ix0 + kx as isize) as usize;
                                            gx[row + ix] = gx[row + ix] + wd[wrow + kx] * ge;
                                            gw[wrow + kx] = gw[wrow + kx] + xd[row + ix] * ge;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            })
        });
        px.accumulate_grad(&gx);
        pw.accumulate_grad(&gw);
        if let Some(ref b) = pb {
            let mut gb = vec![T::zero(); cout];
            for ni in 0..n {
                for co in 0..cout {
                    let base = ((ni * cout + co) * oh) * ow;
                    for v in &g[base..base + oh * ow] {
                        gb[co] = gb[co] + *v;
                    }
                }
            }
            b.accumulate_grad(&gb);
        }
    })
}

/// Adjoint of [`conv2d`] as a forward operator (transposed convolution).
///
/// `x` is `(N, Cin, H, W)`, `weight` is `(Cin, Cout, KH, KW)`. Output
/// spatial size is `(H - 1)*stride - 2*pad + KH`.
pub fn conv_transpose2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [n, cin, h, w] = x.shape();
    let [wcin, cout, kh, kw] = weight.shape();
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv_transpose2d: input has {cin} channels but weight expects {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::Shape("conv_transpose2d: stride must be positive".into()));
    }
    let oh = ((h - 1) * stride + kh).checked_sub(2 * padding);
    let ow = ((w - 1) * stride + kw).checked_sub(2 * padding);
    let (oh, ow) = match (oh, ow) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => {
            return Err(Error::Shape(format!(
                "conv_transpose2d: padding {padding} swallows the {h}x{w} output"
            )))
        }
    };
    check_bias(bias, cout)?;

    let mut out = vec![T::zero(); n * cout * oh * ow];
    x.with_data(|xd| {
        weight.with_data(|wd| {
            for ni in 0..n {
                for ci in 0..cin {
                    for iy in 0..h {
                        for ix in 0..w {
                            let v = xd[((ni * cin + ci) * h + iy) * w + ix];
                            for co in 0..cout {
                                let wbase = ((ci * cout + co) * kh) * kw;
                                let obase = (ni * cout + co) * oh;
                                for ky in 0..kh {
                                    let oy = (iy * stride + ky) as isize - padding as isize;
                                    if oy < 0 || oy >= oh as isize {
                                        continue;
                                    }
                                    let orow = (obase + oy as usize) * ow;
                                    for kx in 0..kw {
                                        let ox = (ix * stride + kx) as isize - padding as isize;
                                        if ox < 0 || ox >= ow as isize {
                                            continue;
                                        }
                                        let oi = orow + ox as usize;
                                        out[oi] = out[oi] + wd[wbase + ky * kw + kx] * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        })
    });
    if let Some(b) = bias {
        b.with_data(|bd| {
            for ni in 0..n {
                for co in 0..cout {
                    let base = ((ni * cout + co) * oh) * ow;
                    for v in &mut out[base..base + oh * ow] {
                        *v = *v + bd[co];
                    }
                }
            }
        });
    }

    let (px, pw) = (x.clone(), weight.clone());
    let pb = bias.cloned();
    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Tensor::from_op("conv_transpose2d", [n, cout, oh, ow], out, parents, move |g| {
        let mut gx = vec![T::zero(); n * cin * h * w];
        let mut gw = vec![T::zero(); cin * cout * kh * kw];
        px.with_data(|xd| {
            pw.with_data(|wd| {
                for ni in 0..n {
                    for ci in 0..cin {
                        for iy in 0..h {
                            for ix in 0..w {
                                let xi = ((ni * cin + ci) * h + iy) * w + ix;
                                let xv = xd[xi];
                                let mut acc = T::zero();
                                for co in 0..cout {
                                    let wbase = ((ci * cout + co) * kh) * kw;
                                    let obase = (ni * cout + co) * oh;
                                    for ky in 0..kh {
                                        let oy = (iy * stride + ky) as isize - padding as isize;
                                        if oy < 0 || oy >= oh as isize {
                                            continue;
                                        }
                                        let orow = (obase + oy as usize) * ow;
                                        for kx in 0..kw {
                                            let ox = (ix * stride + kx) as isize - padding as isize;
                                            if ox < 0 || ox >= ow as isize {
                                                continue;
                                            }
                                            let ge = g[orow + ox as usize];
                                            acc = acc + wd[wbase + ky * kw + kx] * ge;
                                            let wi = wbase + ky * kw + kx;
                                            gw[wi] = gw[wi] + xv * ge;
                                        }
                                    }
                                }
                                gx[xi] = acc;
                            }
                        }
                    }
                }
            })
        });
        px.accumulate_grad(&gx);
        pw.accumulate_grad(&gw);
        if let Some(ref b) = pb {
            let mut gb = vec![T::zero(); cout];
            for ni in 0..n {
                for co in 0..cout {
                    let base = ((ni * cout + co) * oh) * ow;
                    for v in &g[base..base + oh * ow] {
                        gb[co] = gb[co] + *v;
                    }
                }
            }
            b.accumulate_grad(&gb);
        }
    })
}
