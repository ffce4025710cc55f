//! Training signals: masked regression against sparse ground truth, an
//! auxiliary term against the stereo estimate, a second-order smoothness
//! prior, and their weighted combination.

use crate::autodiff::{conv2d, Scalar, Tensor};
use crate::error::{Error, Result};

/// Weights of the combined training loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.01, gamma: 0.001 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Norm used by the primary term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryNorm {
    L1,
    #[default]
    L2,
}

/// Regression loss at pixels where ground truth exists, averaged over those
/// pixels. `gt_mask` is a flat row-major mask over the batch.
pub fn primary_loss<T: Scalar>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    gt_mask: &[bool],
    norm: PrimaryNorm,
) -> Result<Tensor<T>> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "primary_loss: pred {:?} vs gt {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if !gt_mask.iter().any(|&m| m) {
        return Err(Error::Numeric("primary_loss: no valid ground-truth pixels".into()));
    }
    let diff = pred.sub(gt)?;
    let per_pixel = match norm {
        PrimaryNorm::L2 => diff.mul(&diff)?,
        PrimaryNorm::L1 => diff.abs()?,
    };
    per_pixel.masked_mean(gt_mask)
}

/// Mean squared difference against the stereo estimate over its validity
/// mask. An empty mask contributes zero; the returned count lets callers
/// log how many pixels participated.
pub fn stereo_loss<T: Scalar>(
    pred: &Tensor<T>,
    stereo: &Tensor<T>,
    stereo_mask: &[bool],
) -> Result<(Tensor<T>, usize)> {
    if pred.shape() != stereo.shape() {
        return Err(Error::Shape(format!(
            "stereo_loss: pred {:?} vs stereo {:?}",
            pred.shape(),
            stereo.shape()
        )));
    }
    let count = stereo_mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok((Tensor::scalar(T::zero())?, 0));
    }
    let diff = pred.sub(stereo)?;
    Ok((diff.mul(&diff)?.masked_mean(stereo_mask)?, count))
}

/// L1 norm of the second-order finite differences, one mean per axis. Axes
/// shorter than three pixels contribute nothing; an image too small in both
/// axes is an error.
pub fn smooth_loss<T: Scalar>(pred: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, c, h, w] = pred.shape();
    if c != 1 {
        return Err(Error::Shape(format!("smooth_loss expects one channel, got {c}")));
    }
    if h < 3 && w < 3 {
        return Err(Error::Shape(format!("smooth_loss needs at least 3 pixels in one axis, got {h}x{w}")));
    }
    let stencil = [T::one(), T::from_f64_lossy(-2.0), T::one()];
    let mut total: Option<Tensor<T>> = None;
    if w >= 3 {
        let kx = Tensor::from_data([1, 1, 1, 3], stencil.to_vec())?;
        let dxx = conv2d(pred, &kx, None, 1, 0)?.abs()?.mean_all()?;
        total = Some(dxx);
    }
    if h >= 3 {
        let ky = Tensor::from_data([1, 1, 3, 1], stencil.to_vec())?;
        let dyy = conv2d(pred, &ky, None, 1, 0)?.abs()?.mean_all()?;
        total = Some(match total {
            Some(t) => t.add(&dyy)?,
            None => dyy,
        });
    }
    Ok(total.expect("at least one axis contributed"))
}

/// Per-component values of one combined loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub primary: f64,
    pub stereo: f64,
    pub smooth: f64,
    pub total: f64,
    /// Pixels that participated in the stereo term.
    pub stereo_pixels: usize,
}

/// Weighted combination `alpha*primary + beta*stereo + gamma*smooth`.
/// `stereo` is optional; when absent (or masked empty) the term is zero.
pub fn total_loss<T: Scalar>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    gt_mask: &[bool],
    stereo: Option<(&Tensor<T>, &[bool])>,
    weights: &LossWeights,
    norm: PrimaryNorm,
) -> Result<(Tensor<T>, LossBreakdown)> {
    weights.validate()?;
    let primary = primary_loss(pred, gt, gt_mask, norm)?;
    let (stereo_term, stereo_pixels) = match stereo {
        Some((s, mask)) => stereo_loss(pred, s, mask)?,
        None => (Tensor::scalar(T::zero())?, 0),
    };
    let smooth = smooth_loss(pred)?;

    let total = primary
        .scale(T::from_f64_lossy(weights.alpha))?
        .add(&stereo_term.scale(T::from_f64_lossy(weights.beta))?)?
        .add(&smooth.scale(T::from_f64_lossy(weights.gamma))?)?;

    let breakdown = LossBreakdown {
        primary: primary.item().to_f64().unwrap_or(f64::NAN),
        stereo: stereo_term.item().to_f64().unwrap_or(f64::NAN),
        smooth: smooth.item().to_f64().unwrap_or(f64::NAN),
        total: total.item().to_f64().unwrap_or(f64::NAN),
        stereo_pixels,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tensor(shape: [usize; 4], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_data(shape, data).unwrap()
    }

    #[test]
    fn primary_zero_when_pred_equals_gt() {
        let gt = tensor([1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mask = vec![true; 6];
        let loss = primary_loss(&gt, &gt, &mask, PrimaryNorm::L2).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn primary_constant_offset() {
        let gt = tensor([1, 1, 1, 4], vec![1.0, 2.0, 0.0, 4.0]);
        let pred = tensor([1, 1, 1, 4], vec![1.5, 2.5, 9.0, 4.5]);
        let mask = vec![true, true, false, true];
        let l2 = primary_loss(&pred, &gt, &mask, PrimaryNorm::L2).unwrap();
        assert!((l2.item() - 0.25).abs() < 1e-12);
        let l1 = primary_loss(&pred, &gt, &mask, PrimaryNorm::L1).unwrap();
        assert!((l1.item() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn primary_ignores_invalid_pixels() {
        let gt = tensor([1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        let pred = tensor([1, 1, 1, 4], vec![1.0, 2.0, 300.0, -50.0]);
        let mask = vec![true, true, false, false];
        let loss = primary_loss(&pred, &gt, &mask, PrimaryNorm::L2).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn primary_empty_mask_is_error() {
        let gt = tensor([1, 1, 1, 2], vec![1.0, 2.0]);
        assert!(matches!(
            primary_loss(&gt, &gt, &[false, false], PrimaryNorm::L2),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn stereo_hand_mean() {
        let pred = tensor([1, 1, 1, 3], vec![5.0, 7.0, 100.0]);
        let stereo = tensor([1, 1, 1, 3], vec![4.0, 4.0, 1.0]);
        let (loss, count) = stereo_loss(&pred, &stereo, &[true, true, false]).unwrap();
        assert_eq!(count, 2);
        assert!((loss.item() - 5.0).abs() < 1e-12, "(1 + 9) / 2");
    }

    #[test]
    fn stereo_empty_mask_is_zero() {
        let pred = tensor([1, 1, 1, 2], vec![5.0, 7.0]);
        let stereo = tensor([1, 1, 1, 2], vec![1.0, 1.0]);
        let (loss, count) = stereo_loss(&pred, &stereo, &[false, false]).unwrap();
        assert_eq!(count, 0);
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn stereo_zero_when_equal_on_mask() {
        let pred = tensor([1, 1, 1, 3], vec![5.0, 7.0, 2.0]);
        let (loss, _) = stereo_loss(&pred, &pred, &[true, true, true]).unwrap();
        assert_eq!(loss.item(), 0.0);
    }

    #[test]
    fn smooth_zero_on_constant_and_ramp() {
        let c = tensor([1, 1, 4, 5], vec![3.0; 20]);
        assert_eq!(smooth_loss(&c).unwrap().item(), 0.0);

        let ramp: Vec<f64> = (0..20).map(|i| 2.0 * (i % 5) as f64 + 1.0).collect();
        let r = tensor([1, 1, 4, 5], ramp);
        assert!(smooth_loss(&r).unwrap().item().abs() < 1e-12);
    }

    #[test]
    fn smooth_stencil_row_case() {
        // [0,0,1,0,0] -> second differences [1,-2,1] -> mean 4/3.
        let row = tensor([1, 1, 1, 5], vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let loss = smooth_loss(&row).unwrap();
        assert!((loss.item() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_affine_plane_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let (h, w) = (rng.gen_range(3..8), rng.gen_range(3..8));
            let base: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (a, b, c) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let planed: Vec<f64> = (0..h * w)
                .map(|i| base[i] + a * (i % w) as f64 + b * (i / w) as f64 + c)
                .collect();
            let l0 = smooth_loss(&tensor([1, 1, h, w], base)).unwrap().item();
            let l1 = smooth_loss(&tensor([1, 1, h, w], planed)).unwrap().item();
            assert!((l0 - l1).abs() < 1e-9, "plane changed smoothness: {l0} vs {l1}");
        }
    }

    #[test]
    fn smooth_too_small_is_error() {
        let t = tensor([1, 1, 2, 2], vec![0.0; 4]);
        assert!(matches!(smooth_loss(&t), Err(Error::Shape(_))));
    }

    #[test]
    fn total_is_exact_weighted_sum() {
        // Inputs crafted so (primary, stereo, smooth) = (4, 2, 1):
        //  - pred = gt + 2 at every valid pixel     -> primary = 4
        //  - stereo errors 1 and sqrt(3) on 2 px    -> stereo  = 2
        //  - pred row [10,10,10.75,10,10]           -> smooth  = 1
        let pred = tensor([1, 1, 1, 5], vec![10.0, 10.0, 10.75, 10.0, 10.0]);
        let gt = tensor([1, 1, 1, 5], vec![8.0, 8.0, 8.75, 8.0, 8.0]);
        let sqrt3 = 3.0f64.sqrt();
        let stereo = tensor([1, 1, 1, 5], vec![9.0, 10.0 - sqrt3, 0.0, 0.0, 0.0]);
        let mask = vec![true; 5];
        let smask = vec![true, true, false, false, false];

        let weights = LossWeights::default();
        let (total, parts) =
            total_loss(&pred, &gt, &mask, Some((&stereo, &smask[..])), &weights, PrimaryNorm::L2)
                .unwrap();
        assert!((parts.primary - 4.0).abs() < 1e-9);
        assert!((parts.stereo - 2.0).abs() < 1e-9);
        assert!((parts.smooth - 1.0).abs() < 1e-9);
        assert!((total.item() - 4.021).abs() < 1e-6);

        // Degenerate weights reduce to the primary term.
        let w0 = LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 };
        let (t0, _) =
            total_loss(&pred, &gt, &mask, Some((&stereo, &smask[..])), &w0, PrimaryNorm::L2).unwrap();
        assert_eq!(t0.item(), parts.primary);
    }

    #[test]
    fn total_zero_for_zero_components() {
        let pred = tensor([1, 1, 1, 5], vec![2.0; 5]);
        let (total, _) =
            total_loss(&pred, &pred, &[true; 5], None, &LossWeights::default(), PrimaryNorm::L2)
                .unwrap();
        assert_eq!(total.item(), 0.0);
    }

    #[test]
    fn total_is_linear_in_each_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let data: Vec<f64> = (0..24).map(|_| rng.gen_range(1.0..5.0)).collect();
        let pred = Tensor::parameter([1, 1, 4, 6], data).unwrap();
        let gt = tensor([1, 1, 4, 6], (0..24).map(|_| rng.gen_range(1.0..5.0)).collect());
        let stereo = tensor([1, 1, 4, 6], (0..24).map(|_| rng.gen_range(1.0..5.0)).collect());
        let mask = vec![true; 24];

        let base = LossWeights { alpha: 1.0, beta: 0.02, gamma: 0.004 };
        let scaled = LossWeights { alpha: 1.0, beta: 0.06, gamma: 0.004 };
        let (tb, pb) =
            total_loss(&pred, &gt, &mask, Some((&stereo, &mask[..])), &base, PrimaryNorm::L2).unwrap();
        let (ts, _) =
            total_loss(&pred, &gt, &mask, Some((&stereo, &mask[..])), &scaled, PrimaryNorm::L2).unwrap();
        // Tripling beta triples exactly the stereo contribution.
        let expect = tb.item() + 2.0 * 0.02 * pb.stereo;
        assert!((ts.item() - expect).abs() < 1e-9);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let n = 24;
        let pred =
            Tensor::parameter([1, 1, 4, 6], (0..n).map(|_| rng.gen_range(1.0..5.0)).collect()).unwrap();
        let gt = tensor([1, 1, 4, 6], (0..n).map(|_| rng.gen_range(1.0..5.0)).collect());
        let stereo = tensor([1, 1, 4, 6], (0..n).map(|_| rng.gen_range(1.0..5.0)).collect());
        let mask: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();

        let err = gradcheck::max_rel_error(&[&pred], || {
            primary_loss(&pred, &gt, &mask, PrimaryNorm::L2)
        })
        .unwrap();
        assert!(err < 1e-7, "primary L2 gradcheck {err}");

        let err =
            gradcheck::max_rel_error(&[&pred], || stereo_loss(&pred, &stereo, &mask).map(|(l, _)| l))
                .unwrap();
        assert!(err < 1e-7, "stereo gradcheck {err}");

        let err = gradcheck::max_rel_error(&[&pred], || smooth_loss(&pred)).unwrap();
        assert!(err < 1e-6, "smooth gradcheck {err}");

        let err = gradcheck::max_rel_error(&[&pred], || {
            total_loss(&pred, &gt, &mask, Some((&stereo, &mask[..])), &LossWeights::default(), PrimaryNorm::L2)
                .map(|(l, _)| l)
        })
        .unwrap();
        assert!(err < 1e-6, "total gradcheck {err}");
    }
}
