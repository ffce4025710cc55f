//! Semi-global matching over census costs: the dense-but-noisy depth source
//! used as auxiliary supervision. Integer costs throughout so aggregation is
//! exactly reproducible.

use rayon::prelude::*;

use crate::camera::{disparity_to_depth, StereoRig};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, Grid, IntensityImage, ValidMask, MISSING_DEPTH};

/// Cost assigned to disparities that index off the image.
pub const MAX_COST: u32 = u32::MAX;

/// Per-pixel, per-disparity matching cost block, indexed `(y, x, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    dmax: usize,
    costs: Vec<u32>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, dmax: usize) -> Result<Self> {
        if dmax < 1 {
            return Err(Error::Config(format!("dmax must be >= 1, got {dmax}")));
        }
        Ok(Self { width, height, dmax, costs: vec![0; width * height * dmax] })
    }

    pub fn from_costs(width: usize, height: usize, dmax: usize, costs: Vec<u32>) -> Result<Self> {
        if costs.len() != width * height * dmax {
            return Err(Error::Shape(format!(
                "cost buffer length {} does not match {width}x{height}x{dmax}",
                costs.len()
            )));
        }
        let mut v = Self::new(width, height, dmax)?;
        v.costs = costs;
        Ok(v)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dmax(&self) -> usize {
        self.dmax
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, d: usize) -> u32 {
        self.costs[(y * self.width + x) * self.dmax + d]
    }

    #[inline]
    fn set(&mut self, x: usize, y: usize, d: usize, c: u32) {
        self.costs[(y * self.width + x) * self.dmax + d] = c;
    }

    #[inline]
    fn slot(&self, x: usize, y: usize) -> &[u32] {
        let base = (y * self.width + x) * self.dmax;
        &self.costs[base..base + self.dmax]
    }
}

/// Semi-global matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SgmParams {
    /// Census window size (odd, 3..=7).
    pub census_window: usize,
    /// Number of candidate disparities.
    pub dmax: usize,
    /// Penalty for a one-pixel disparity change.
    pub p1: u32,
    /// Penalty for larger disparity jumps.
    pub p2: u32,
    /// Left-right consistency tolerance in pixels.
    pub lr_tolerance: f32,
}

impl Default for SgmParams {
    fn default() -> Self {
        Self { census_window: 5, dmax: 64, p1: 10, p2: 120, lr_tolerance: 1.0 }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        if self.census_window < 3 || self.census_window % 2 == 0 || self.census_window > 7 {
            return Err(Error::Config(format!(
                "census window must be odd and in 3..=7, got {}",
                self.census_window
            )));
        }
        if self.dmax < 1 {
            return Err(Error::Config(format!("dmax must be >= 1, got {}", self.dmax)));
        }
        if self.p1 == 0 && self.p2 == 0 {
            // Allowed: disables smoothing entirely.
        } else if self.p1 > self.p2 {
            return Err(Error::Config(format!("need p1 <= p2, got p1={} p2={}", self.p1, self.p2)));
        }
        if self.lr_tolerance < 0.0 {
            return Err(Error::Config(format!("lr_tolerance must be >= 0, got {}", self.lr_tolerance)));
        }
        Ok(())
    }
}

/// Census transform: bit `k` of a pixel's word is set when the pixel is
/// strictly darker than its `k`-th window neighbor (row-major order, center
/// skipped). Out-of-bounds neighbors compare as equal, leaving the bit clear.
pub fn census_transform(img: &Grid<u8>, window: usize) -> Result<Grid<u64>> {
    if window < 3 || window % 2 == 0 || window > 7 {
        return Err(Error::Config(format!("census window must be odd and in 3..=7, got {window}")));
    }
    let (w, h) = (img.width(), img.height());
    let r = (window / 2) as isize;
    let mut out = Grid::new(w, h, 0u64);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = *img.get(x as usize, y as usize);
            let mut word = 0u64;
            let mut bit = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x + dx;
                    let ny = y + dy;
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        let neighbor = *img.get(nx as usize, ny as usize);
                        if center < neighbor {
                            word |= 1u64 << bit;
                        }
                    }
                    bit += 1;
                }
            }
            out.set(x as usize, y as usize, word);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum MatchBase {
    /// Base = left image; candidate in the right image sits at `x - d`.
    Left,
    /// Base = right image; candidate in the left image sits at `x + d`.
    Right,
}

fn build_costs(base: &Grid<u64>, other: &Grid<u64>, dmax: usize, dir: MatchBase) -> Result<CostVolume> {
    if !base.same_dims(other) {
        return Err(Error::Shape(format!(
            "stereo pair dimensions differ: {}x{} vs {}x{}",
            base.width(),
            base.height(),
            other.width(),
            other.height()
        )));
    }
    let (w, h) = (base.width(), base.height());
    let mut volume = CostVolume::new(w, h, dmax)?;
    for y in 0..h {
        for x in 0..w {
            let word = *base.get(x, y);
            for d in 0..dmax {
                let cx = match dir {
                    MatchBase::Left => x as isize - d as isize,
                    MatchBase::Right => x as isize + d as isize,
                };
                let c = if cx < 0 || cx >= w as isize {
                    MAX_COST
                } else {
                    (word ^ other.get(cx as usize, y)).count_ones()
                };
                volume.set(x, y, d, c);
            }
        }
    }
    Ok(volume)
}

/// Hamming cost volume with the left image as base:
/// `cost(p, d) = hamming(census_left(p), census_right(p - d))`.
pub fn build_cost_volume(left: &Grid<u64>, right: &Grid<u64>, params: &SgmParams) -> Result<CostVolume> {
    params.validate()?;
    build_costs(left, right, params.dmax, MatchBase::Left)
}

/// The eight canonical scanline directions, in the fixed summation order.
const PATHS: [(isize, isize); 8] =
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];

/// One scanline pass of the SGM recurrence along direction `(dx, dy)`.
fn aggregate_path(volume: &CostVolume, p1: u32, p2: u32, dx: isize, dy: isize) -> Vec<u32> {
    let (w, h, dmax) = (volume.width(), volume.height(), volume.dmax());
    let mut out = vec![0u32; w * h * dmax];

    // Iterate pixels so that the predecessor along (dx, dy) is visited first.
    let xs: Vec<usize> = if dx > 0 { (0..w).collect() } else { (0..w).rev().collect() };
    let ys: Vec<usize> = if dy > 0 { (0..h).collect() } else { (0..h).rev().collect() };

    let mut prev_row: Vec<u32> = vec![0; dmax];
    for &y in &ys {
        for &x in &xs {
            let px = x as isize - dx;
            let py = y as isize - dy;
            let base = (y * w + x) * dmax;
            if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                out[base..base + dmax].copy_from_slice(volume.slot(x, y));
                continue;
            }
            let pbase = (py as usize * w + px as usize) * dmax;
            prev_row.copy_from_slice(&out[pbase..pbase + dmax]);
            let min_prev = *prev_row.iter().min().expect("dmax >= 1");
            for d in 0..dmax {
                let mut best = prev_row[d];
                if d > 0 {
                    best = best.min(prev_row[d - 1].saturating_add(p1));
                }
                if d + 1 < dmax {
                    best = best.min(prev_row[d + 1].saturating_add(p1));
                }
                best = best.min(min_prev.saturating_add(p2));
                out[base + d] = volume.cost(x, y, d).saturating_add(best - min_prev);
            }
        }
    }
    out
}

/// Aggregate a raw cost volume along the eight scanline directions with the
/// standard SGM recurrence, then sum the per-path results in a fixed order.
pub fn aggregate(volume: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    params.validate()?;
    let per_path: Vec<Vec<u32>> = PATHS
        .par_iter()
        .map(|&(dx, dy)| aggregate_path(volume, params.p1, params.p2, dx, dy))
        .collect();
    let mut sum = vec![0u32; volume.costs.len()];
    for path in &per_path {
        for (acc, &v) in sum.iter_mut().zip(path.iter()) {
            *acc = acc.saturating_add(v);
        }
    }
    CostVolume::from_costs(volume.width(), volume.height(), volume.dmax(), sum)
}

/// Aggregate along a single direction; exposed for oracle comparisons.
pub fn aggregate_single_path(volume: &CostVolume, params: &SgmParams, dx: isize, dy: isize) -> Result<CostVolume> {
    params.validate()?;
    let costs = aggregate_path(volume, params.p1, params.p2, dx, dy);
    CostVolume::from_costs(volume.width(), volume.height(), volume.dmax(), costs)
}

/// Winner-take-all disparity: per-pixel argmin with ties broken toward the
/// smallest disparity.
pub fn wta_disparity(volume: &CostVolume) -> Grid<u16> {
    let (w, h) = (volume.width(), volume.height());
    let mut out = Grid::new(w, h, 0u16);
    for y in 0..h {
        for x in 0..w {
            let slot = volume.slot(x, y);
            let mut best_d = 0usize;
            let mut best_c = slot[0];
            for (d, &c) in slot.iter().enumerate().skip(1) {
                if c < best_c {
                    best_c = c;
                    best_d = d;
                }
            }
            out.set(x, y, best_d as u16);
        }
    }
    out
}

/// Left-right consistency: a pixel survives when its disparity agrees with
/// the right image's disparity at the reprojected location within
/// `tolerance`, and the reprojection lands inside the image.
pub fn lr_consistency(disp_left: &Grid<u16>, disp_right: &Grid<u16>, tolerance: f32) -> Result<ValidMask> {
    if !disp_left.same_dims(disp_right) {
        return Err(Error::Shape("disparity map dimensions differ".into()));
    }
    let (w, h) = (disp_left.width(), disp_left.height());
    let mut mask = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let dl = *disp_left.get(x, y);
            let rx = x as isize - dl as isize;
            if rx < 0 || rx >= w as isize {
                continue;
            }
            let dr = *disp_right.get(rx as usize, y);
            if (dl as f32 - dr as f32).abs() <= tolerance {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Full stereo pipeline: grayscale, census, cost volumes both ways,
/// aggregation, winner-take-all, left-right check, disparity-to-depth.
/// Pixels that fail the check, have zero disparity, or land beyond
/// `max_depth` carry the missing sentinel.
pub fn sgm_stereo_depth(
    left: &IntensityImage,
    right: &IntensityImage,
    rig: &StereoRig,
    params: &SgmParams,
    max_depth: f32,
) -> Result<(DepthMap, ValidMask)> {
    params.validate()?;
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::Shape(format!(
            "stereo pair dimensions differ: {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    let census_l = census_transform(&left.to_gray_u8(), params.census_window)?;
    let census_r = census_transform(&right.to_gray_u8(), params.census_window)?;

    let vol_l = build_costs(&census_l, &census_r, params.dmax, MatchBase::Left)?;
    let vol_r = build_costs(&census_r, &census_l, params.dmax, MatchBase::Right)?;
    let disp_l = wta_disparity(&aggregate(&vol_l, params)?);
    let disp_r = wta_disparity(&aggregate(&vol_r, params)?);
    let lr_mask = lr_consistency(&disp_l, &disp_r, params.lr_tolerance)?;

    let (w, h) = (left.width(), left.height());
    let mut values = vec![MISSING_DEPTH; w * h];
    let mut mask = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !*lr_mask.get(x, y) {
                continue;
            }
            let z = disparity_to_depth(*disp_l.get(x, y) as f32, rig)?;
            if z != MISSING_DEPTH && z <= max_depth {
                values[y * w + x] = z;
                mask.set(x, y, true);
            }
        }
    }
    Ok((DepthMap::new(w, h, values, max_depth)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Grid<u8> {
        let mut g = Grid::new(w, h, 0u8);
        for y in 0..h {
            for x in 0..w {
                g.set(x, y, f(x, y));
            }
        }
        g
    }

    /// Deterministic texture with enough variation for census matching.
    fn texture(x: usize, y: usize) -> u8 {
        let v = (x * 37 + y * 101) ^ (x * y * 13 + 7);
        (v % 251) as u8
    }

    fn shifted_pair(w: usize, h: usize, k: usize) -> (IntensityImage, IntensityImage) {
        // right(x) = left(x + k): a scene at constant disparity k.
        let to_img = |f: &dyn Fn(usize, usize) -> u8| {
            let mut data = vec![0.0f32; 3 * w * h];
            for y in 0..h {
                for x in 0..w {
                    let v = f(x, y) as f32 / 255.0;
                    for c in 0..3 {
                        data[c * w * h + y * w + x] = v;
                    }
                }
            }
            IntensityImage::new(w, h, data).unwrap()
        };
        let left = to_img(&|x, y| texture(x + k, y));
        let right = to_img(&|x, y| texture(x + 2 * k, y));
        (left, right)
    }

    #[test]
    fn census_constant_image_is_zero() {
        let g = gray(6, 6, |_, _| 42);
        let c = census_transform(&g, 3).unwrap();
        assert!(c.data().iter().all(|&w| w == 0));
    }

    #[test]
    fn census_bright_center_sets_single_neighbor_bit() {
        // Every neighbor of the bright pixel sets exactly the one bit that
        // references it (the neighbor is darker than the bright pixel).
        let g = gray(5, 5, |x, y| if x == 2 && y == 2 { 255 } else { 100 });
        let c = census_transform(&g, 3).unwrap();
        assert_eq!(*c.get(2, 2), 0, "brightest pixel is darker than nothing");
        for (nx, ny) in [(1, 1), (2, 1), (3, 1), (1, 2), (3, 2), (1, 3), (2, 3), (3, 3)] {
            let word = *c.get(nx, ny);
            assert_eq!(word.count_ones(), 1, "neighbor ({nx},{ny})");
            // The set bit must be the one whose offset points at (2,2).
            let mut bit = 0u32;
            let mut expected = 0u64;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if nx as isize + dx == 2 && ny as isize + dy == 2 {
                        expected = 1u64 << bit;
                    }
                    bit += 1;
                }
            }
            assert_eq!(word, expected, "neighbor ({nx},{ny})");
        }
    }

    #[test]
    fn census_identical_patches_have_zero_hamming() {
        let g = gray(8, 8, texture);
        let c = census_transform(&g, 5).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!((c.get(x, y) ^ c.get(x, y)).count_ones(), 0);
            }
        }
    }

    #[test]
    fn cost_volume_identical_pair_zero_at_d0() {
        let g = gray(10, 8, texture);
        let c = census_transform(&g, 3).unwrap();
        let params = SgmParams { dmax: 4, ..Default::default() };
        let vol = build_cost_volume(&c, &c, &params).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                assert_eq!(vol.cost(x, y, 0), 0);
            }
        }
    }

    #[test]
    fn cost_volume_shifted_pair_zero_at_shift() {
        let (left, right) = shifted_pair(24, 10, 2);
        let cl = census_transform(&left.to_gray_u8(), 3).unwrap();
        let cr = census_transform(&right.to_gray_u8(), 3).unwrap();
        let params = SgmParams { dmax: 6, census_window: 3, ..Default::default() };
        let vol = build_cost_volume(&cl, &cr, &params).unwrap();
        // Interior: census windows entirely inside both images.
        for y in 2..8 {
            for x in 4..22 {
                assert_eq!(vol.cost(x, y, 2), 0, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn cost_volume_off_image_is_max() {
        let g = gray(6, 4, texture);
        let c = census_transform(&g, 3).unwrap();
        let params = SgmParams { dmax: 4, ..Default::default() };
        let vol = build_cost_volume(&c, &c, &params).unwrap();
        assert_eq!(vol.cost(0, 0, 1), MAX_COST);
        assert_eq!(vol.cost(2, 1, 3), MAX_COST);
        assert!(vol.cost(3, 1, 3) < MAX_COST);
    }

    #[test]
    fn cost_volume_dimension_mismatch() {
        let a = census_transform(&gray(4, 4, |_, _| 0), 3).unwrap();
        let b = census_transform(&gray(5, 4, |_, _| 0), 3).unwrap();
        assert!(matches!(
            build_cost_volume(&a, &b, &SgmParams::default()),
            Err(Error::Shape(_))
        ));
    }

    /// Brute-force single-row reference: pairwise-penalty dynamic program
    /// over all disparity sequences, then the same per-pixel normalization
    /// the streaming recurrence applies.
    fn brute_force_row(costs: &[Vec<u32>], p1: u32, p2: u32) -> Vec<Vec<u32>> {
        let dmax = costs[0].len();
        let penalty = |a: usize, b: usize| -> u32 {
            if a == b {
                0
            } else if a.abs_diff(b) == 1 {
                p1
            } else {
                p2
            }
        };
        let mut unnorm: Vec<Vec<u64>> = vec![costs[0].iter().map(|&c| c as u64).collect()];
        for x in 1..costs.len() {
            let mut row = vec![u64::MAX; dmax];
            for d in 0..dmax {
                for k in 0..dmax {
                    let cand = unnorm[x - 1][k] + penalty(d, k) as u64;
                    row[d] = row[d].min(cand);
                }
                row[d] += costs[x][d] as u64;
            }
            unnorm.push(row);
        }
        (0..costs.len())
            .map(|x| {
                let offset = if x == 0 { 0 } else { *unnorm[x - 1].iter().min().unwrap() };
                unnorm[x].iter().map(|&v| (v - offset) as u32).collect()
            })
            .collect()
    }

    #[test]
    fn single_path_matches_hand_row() {
        // Hand-chosen 3-pixel x 2-disparity row, P1=1 P2=3; expected values
        // frozen from the brute-force dynamic program.
        let costs = vec![vec![2u32, 5], vec![1, 0], vec![4, 1]];
        let expected = vec![vec![2u32, 5], vec![1, 1], vec![4, 1]];
        assert_eq!(brute_force_row(&costs, 1, 3), expected);

        let flat: Vec<u32> = costs.iter().flatten().copied().collect();
        let vol = CostVolume::from_costs(3, 1, 2, flat).unwrap();
        let params = SgmParams { p1: 1, p2: 3, dmax: 2, ..Default::default() };
        let agg = aggregate_single_path(&vol, &params, 1, 0).unwrap();
        for x in 0..3 {
            for d in 0..2 {
                assert_eq!(agg.cost(x, 0, d), expected[x][d], "x={x} d={d}");
            }
        }
    }

    #[test]
    fn single_path_matches_brute_force_on_random_rows() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for case in 0..50 {
            let w = rng.gen_range(2..=16);
            let dmax = rng.gen_range(1..=6);
            let costs: Vec<Vec<u32>> =
                (0..w).map(|_| (0..dmax).map(|_| rng.gen_range(0..100)).collect()).collect();
            let flat: Vec<u32> = costs.iter().flatten().copied().collect();
            let vol = CostVolume::from_costs(w, 1, dmax, flat).unwrap();
            let params = SgmParams { p1: 7, p2: 30, dmax, ..Default::default() };
            let agg = aggregate_single_path(&vol, &params, 1, 0).unwrap();
            let oracle = brute_force_row(&costs, 7, 30);
            for x in 0..w {
                for d in 0..dmax {
                    assert_eq!(agg.cost(x, 0, d), oracle[x][d], "case {case} x={x} d={d}");
                }
            }
        }
    }

    #[test]
    fn zero_penalties_preserve_wta() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (w, h, dmax) = (9, 7, 5);
        let costs: Vec<u32> = (0..w * h * dmax).map(|_| rng.gen_range(0..50)).collect();
        let vol = CostVolume::from_costs(w, h, dmax, costs).unwrap();
        let params = SgmParams { p1: 0, p2: 0, dmax, ..Default::default() };
        let agg = aggregate(&vol, &params).unwrap();
        assert_eq!(wta_disparity(&agg).data(), wta_disparity(&vol).data());
    }

    #[test]
    fn uniform_volume_selects_zero_disparity() {
        let vol = CostVolume::from_costs(5, 4, 3, vec![7; 5 * 4 * 3]).unwrap();
        let params = SgmParams { p1: 2, p2: 8, dmax: 3, ..Default::default() };
        let agg = aggregate(&vol, &params).unwrap();
        assert!(wta_disparity(&agg).data().iter().all(|&d| d == 0));
    }

    #[test]
    fn wta_examples() {
        // Unique minimum.
        let vol = CostVolume::from_costs(1, 1, 6, vec![9, 8, 7, 1, 7, 8]).unwrap();
        assert_eq!(*wta_disparity(&vol).get(0, 0), 3);
        // Tie between d=2 and d=5 resolves to 2.
        let vol = CostVolume::from_costs(1, 1, 6, vec![9, 8, 3, 5, 7, 3]).unwrap();
        assert_eq!(*wta_disparity(&vol).get(0, 0), 2);
        // Monotone decreasing picks the last disparity.
        let vol = CostVolume::from_costs(1, 1, 4, vec![9, 7, 5, 3]).unwrap();
        assert_eq!(*wta_disparity(&vol).get(0, 0), 3);
    }

    #[test]
    fn lr_consistency_examples() {
        let mut dl = Grid::new(8, 1, 0u16);
        let dr = Grid::new(8, 1, 0u16);
        // Perfectly consistent: zero disparity both sides.
        let mask = lr_consistency(&dl, &dr, 0.0).unwrap();
        assert!(mask.data().iter().all(|&v| v));

        // Left says 4, right at the reprojection says 7, tolerance 1.
        let mut dr2 = Grid::new(8, 1, 0u16);
        dl.set(5, 0, 4);
        dr2.set(1, 0, 7);
        let mask = lr_consistency(&dl, &dr2, 1.0).unwrap();
        assert!(!*mask.get(5, 0));

        // Reprojection off the image.
        let mut dl3 = Grid::new(8, 1, 0u16);
        dl3.set(2, 0, 5);
        let mask = lr_consistency(&dl3, &dr, 10.0).unwrap();
        assert!(!*mask.get(2, 0));
    }

    #[test]
    fn lr_consistency_infinite_tolerance_validates_in_bounds() {
        let mut dl = Grid::new(6, 2, 0u16);
        let mut dr = Grid::new(6, 2, 0u16);
        for x in 0..6 {
            dl.set(x, 0, (x % 3) as u16);
            dr.set(x, 1, ((x + 1) % 4) as u16);
        }
        let mask = lr_consistency(&dl, &dr, f32::INFINITY).unwrap();
        for y in 0..2 {
            for x in 0..6 {
                let in_bounds = x as isize - *dl.get(x, y) as isize >= 0;
                assert_eq!(*mask.get(x, y), in_bounds);
            }
        }
    }

    fn test_rig() -> StereoRig {
        StereoRig::new(CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn sgm_recovers_synthetic_shift() {
        let k = 3usize;
        let (left, right) = shifted_pair(64, 32, k);
        let params = SgmParams { dmax: 16, ..Default::default() };
        let rig = test_rig();
        let (depth, mask) = sgm_stereo_depth(&left, &right, &rig, &params, 100.0).unwrap();
        let expected = disparity_to_depth(k as f32, &rig).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for y in 4..28 {
            for x in 20..60 {
                total += 1;
                if *mask.get(x, y) && (depth.get(x, y) - expected).abs() < 1e-4 {
                    correct += 1;
                }
            }
        }
        assert!(
            correct as f64 >= 0.95 * total as f64,
            "recovered {correct}/{total} interior pixels"
        );
    }

    #[test]
    fn sgm_identical_pair_yields_missing_depth() {
        let (left, _) = shifted_pair(40, 20, 0);
        let params = SgmParams { dmax: 8, ..Default::default() };
        let (depth, mask) = sgm_stereo_depth(&left, &left, &test_rig(), &params, 100.0).unwrap();
        // Zero disparity maps to missing, so the interior is empty.
        for y in 4..16 {
            for x in 12..36 {
                assert!(!*mask.get(x, y));
                assert_eq!(depth.get(x, y), MISSING_DEPTH);
            }
        }
    }

    #[test]
    fn sgm_mask_never_fully_dense() {
        let (left, right) = shifted_pair(64, 32, 4);
        let params = SgmParams { dmax: 16, ..Default::default() };
        let (_, mask) = sgm_stereo_depth(&left, &right, &test_rig(), &params, 100.0).unwrap();
        assert!(mask.density() < 1.0);
    }
}
