//! Depth error metrics: RMSE/MAE (mm), inverse-depth iRMSE/iMAE (1/km),
//! relative error and the delta accuracy thresholds, evaluated only at
//! ground-truth-valid pixels.

use crate::error::{Error, Result};
use crate::raster::DepthMap;

/// Full metric set for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// Root mean squared error in millimeters.
    pub rmse_mm: f64,
    /// Mean absolute error in millimeters.
    pub mae_mm: f64,
    /// RMSE of inverse depth in 1/km (pixels with nonpositive depth on
    /// either side are excluded from the inverse metrics only).
    pub irmse_1_km: f64,
    /// MAE of inverse depth in 1/km.
    pub imae_1_km: f64,
    /// Mean relative absolute error.
    pub rel: f64,
    /// Fraction of pixels with max(p/g, g/p) < 1.25.
    pub delta1: f64,
    /// Fraction with ratio < 1.25^2.
    pub delta2: f64,
    /// Fraction with ratio < 1.25^3.
    pub delta3: f64,
    /// Ground-truth pixels evaluated.
    pub n_valid: usize,
    /// Pixels that entered the inverse metrics.
    pub n_inverse: usize,
}

impl MetricsReport {
    /// Machine-readable `key=value` lines.
    pub fn to_kv_lines(&self) -> String {
        format!(
            "rmse_mm={:.6}\nmae_mm={:.6}\nirmse_1_km={:.6}\nimae_1_km={:.6}\nrel={:.8}\ndelta1={:.8}\ndelta2={:.8}\ndelta3={:.8}\nn_valid={}\nn_inverse={}",
            self.rmse_mm,
            self.mae_mm,
            self.irmse_1_km,
            self.imae_1_km,
            self.rel,
            self.delta1,
            self.delta2,
            self.delta3,
            self.n_valid,
            self.n_inverse
        )
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        format!(
            "metric        value\n------        -----\nRMSE [mm]     {:>12.3}\nMAE  [mm]     {:>12.3}\niRMSE [1/km]  {:>12.3}\niMAE  [1/km]  {:>12.3}\nREL           {:>12.5}\ndelta1        {:>12.5}\ndelta2        {:>12.5}\ndelta3        {:>12.5}\npixels        {:>12}",
            self.rmse_mm,
            self.mae_mm,
            self.irmse_1_km,
            self.imae_1_km,
            self.rel,
            self.delta1,
            self.delta2,
            self.delta3,
            self.n_valid
        )
    }
}

/// Errors of one prediction against ground truth over the gt-valid pixel
/// set. Delta thresholds use strict inequality, so a ratio exactly at the
/// threshold counts as a failure.
pub fn compute_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<MetricsReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Shape(format!(
            "prediction {}x{} does not match ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut n_valid = 0usize;
    let mut sum_sq = 0.0f64;
    let mut sum_abs = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    let mut n_inv = 0usize;
    let mut sum_inv_sq = 0.0f64;
    let mut sum_inv_abs = 0.0f64;

    let (t1, t2, t3) = (1.25f64, 1.25f64 * 1.25, 1.25f64 * 1.25 * 1.25);
    for (i, &g) in gt.values().iter().enumerate() {
        if !gt.mask_value(g) {
            continue;
        }
        let g = g as f64;
        let p = pred.values()[i] as f64;
        n_valid += 1;
        let err = p - g;
        sum_sq += err * err;
        sum_abs += err.abs();
        sum_rel += err.abs() / g;
        if p > 0.0 {
            let ratio = (p / g).max(g / p);
            if ratio < t1 {
                d1 += 1;
            }
            if ratio < t2 {
                d2 += 1;
            }
            if ratio < t3 {
                d3 += 1;
            }
            // Inverse metrics in 1/km: 1000/depth_m.
            n_inv += 1;
            let ierr = 1000.0 / p - 1000.0 / g;
            sum_inv_sq += ierr * ierr;
            sum_inv_abs += ierr.abs();
        }
    }
    if n_valid == 0 {
        return Err(Error::Numeric("compute_metrics: no valid ground-truth pixels".into()));
    }
    let n = n_valid as f64;
    let ni = n_inv.max(1) as f64;
    Ok(MetricsReport {
        rmse_mm: (sum_sq / n).sqrt() * 1000.0,
        mae_mm: sum_abs / n * 1000.0,
        irmse_1_km: (sum_inv_sq / ni).sqrt(),
        imae_1_km: sum_inv_abs / ni,
        rel: sum_rel / n,
        delta1: d1 as f64 / n,
        delta2: d2 as f64 / n,
        delta3: d3 as f64 / n,
        n_valid,
        n_inverse: n_inv,
    })
}

/// Aggregate per-image reports by valid-pixel-weighted averaging; inverse
/// metrics are weighted by their own pixel counts.
pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Numeric("aggregate_reports: no reports".into()));
    }
    let total: usize = reports.iter().map(|r| r.n_valid).sum();
    let total_inv: usize = reports.iter().map(|r| r.n_inverse).sum();
    if total == 0 {
        return Err(Error::Numeric("aggregate_reports: no valid pixels".into()));
    }
    let wsum = |f: &dyn Fn(&MetricsReport) -> f64| -> f64 {
        reports.iter().map(|r| f(r) * r.n_valid as f64).sum::<f64>() / total as f64
    };
    let wsum_inv = |f: &dyn Fn(&MetricsReport) -> f64| -> f64 {
        if total_inv == 0 {
            0.0
        } else {
            reports.iter().map(|r| f(r) * r.n_inverse as f64).sum::<f64>() / total_inv as f64
        }
    };
    Ok(MetricsReport {
        rmse_mm: wsum(&|r| r.rmse_mm),
        mae_mm: wsum(&|r| r.mae_mm),
        irmse_1_km: wsum_inv(&|r| r.irmse_1_km),
        imae_1_km: wsum_inv(&|r| r.imae_1_km),
        rel: wsum(&|r| r.rel),
        delta1: wsum(&|r| r.delta1),
        delta2: wsum(&|r| r.delta2),
        delta3: wsum(&|r| r.delta3),
        n_valid: total,
        n_inverse: total_inv,
    })
}

impl DepthMap {
    #[inline]
    fn mask_value(&self, v: f32) -> bool {
        v != crate::raster::MISSING_DEPTH
    }
}
