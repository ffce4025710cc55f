//! Classical densification of sparse depth: morphological dilation, closing,
//! iterative hole filling and masked Gaussian smoothing. Conflicts always
//! resolve toward the smaller depth so foreground objects win at boundaries.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Grid, MISSING_DEPTH};

/// Structuring-element footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// Every cell of the size x size square.
    Full,
    /// L1 ball: |dx| + |dy| <= size/2.
    Diamond,
}

/// Odd-sized structuring element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Kernel {
    pub shape: KernelShape,
    pub size: usize,
}

impl Kernel {
    pub fn new(shape: KernelShape, size: usize) -> Result<Self> {
        if size < 3 || size % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd and >= 3, got {size}")));
        }
        Ok(Self { shape, size })
    }

    fn offsets(&self) -> Vec<(isize, isize)> {
        let r = (self.size / 2) as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let inside = match self.shape {
                    KernelShape::Full => true,
                    KernelShape::Diamond => dx.abs() + dy.abs() <= r,
                };
                if inside {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

/// Parameters of the densification pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FillParams {
    /// Kernel of the initial dilation pass.
    pub dilate_kernel: Kernel,
    /// Size of the full-kernel morphological closing.
    pub closing_size: usize,
    /// Size of the repeated large-hole dilation kernel.
    pub large_size: usize,
    /// Cap on large-hole dilation iterations.
    pub max_iterations: usize,
    /// Gaussian blur kernel size.
    pub blur_size: usize,
    /// Gaussian blur standard deviation in pixels.
    pub blur_sigma: f32,
}

impl Default for FillParams {
    fn default() -> Self {
        Self {
            dilate_kernel: Kernel { shape: KernelShape::Diamond, size: 5 },
            closing_size: 5,
            large_size: 9,
            max_iterations: 10,
            blur_size: 5,
            blur_sigma: 1.0,
        }
    }
}

impl FillParams {
    pub fn validate(&self) -> Result<()> {
        Kernel::new(self.dilate_kernel.shape, self.dilate_kernel.size)?;
        for (name, size) in [
            ("closing_size", self.closing_size),
            ("large_size", self.large_size),
            ("blur_size", self.blur_size),
        ] {
            if size < 3 || size % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and >= 3, got {size}")));
            }
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.blur_sigma <= 0.0 {
            return Err(Error::Config(format!("blur_sigma must be positive, got {}", self.blur_sigma)));
        }
        Ok(())
    }
}

/// Fill each missing pixel whose kernel neighborhood contains a measurement
/// with the minimum valid depth in that neighborhood. Valid pixels pass
/// through unchanged.
pub fn dilate_nearest(map: &DepthMap, kernel: &Kernel) -> DepthMap {
    let (w, h) = (map.width(), map.height());
    let offsets = kernel.offsets();
    let mut out = map.values().to_vec();
    for y in 0..h {
        for x in 0..w {
            if map.is_valid(x, y) {
                continue;
            }
            let mut best = f32::INFINITY;
            for &(dx, dy) in &offsets {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let v = map.get(nx as usize, ny as usize);
                if v != MISSING_DEPTH && v < best {
                    best = v;
                }
            }
            if best.is_finite() {
                out[y * w + x] = best;
            }
        }
    }
    DepthMap::new(w, h, out, map.max_depth()).expect("dilation preserves invariants")
}

/// Morphological closing with closer-wins semantics: a max-filter then
/// min-filter on inverted depth. Small interior holes fill; pixels whose
/// window still touches a hole after dilation fall back to missing.
fn closing_min(map: &DepthMap, size: usize) -> DepthMap {
    let (w, h) = (map.width(), map.height());
    let big = map.max_depth() + 1.0;
    let inv: Vec<f32> = map
        .values()
        .iter()
        .map(|&v| if v == MISSING_DEPTH { 0.0 } else { big - v })
        .collect();
    let r = (size / 2) as isize;
    let window_reduce = |src: &[f32], max: bool| -> Vec<f32> {
        let mut dst = vec![0.0f32; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = if max { f32::NEG_INFINITY } else { f32::INFINITY };
                for dy in -r..=r {
                    for dx in -r..=r {
                        let nx = x + dx;
                        let ny = y + dy;
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let v = src[ny as usize * w + nx as usize];
                        acc = if max { acc.max(v) } else { acc.min(v) };
                    }
                }
                dst[y as usize * w + x as usize] = acc;
            }
        }
        dst
    };
    let dilated = window_reduce(&inv, true);
    let eroded = window_reduce(&dilated, false);
    let values: Vec<f32> = eroded
        .iter()
        .map(|&v| if v > 0.0 { big - v } else { MISSING_DEPTH })
        .collect();
    DepthMap::new(w, h, values, map.max_depth()).expect("closing preserves invariants")
}

/// Extend along rows then columns: each missing pixel copies its nearest
/// valid neighbor in the row (ties toward the left); any row without a
/// measurement is then filled from the nearest valid column neighbor (ties
/// toward the top). One row pass plus one column pass always densifies a map
/// holding at least one measurement.
fn extend_nearest_axis(map: &DepthMap) -> DepthMap {
    let (w, h) = (map.width(), map.height());
    let mut out = map.values().to_vec();
    for y in 0..h {
        for x in 0..w {
            if out[y * w + x] != MISSING_DEPTH {
                continue;
            }
            for d in 1..w as isize {
                let left = x as isize - d;
                let right = x as isize + d;
                if left >= 0 && map.is_valid(left as usize, y) {
                    out[y * w + x] = map.get(left as usize, y);
                    break;
                }
                if right < w as isize && map.is_valid(right as usize, y) {
                    out[y * w + x] = map.get(right as usize, y);
                    break;
                }
            }
        }
    }
    let row_filled = out.clone();
    for y in 0..h {
        for x in 0..w {
            if out[y * w + x] != MISSING_DEPTH {
                continue;
            }
            for d in 1..h as isize {
                let up = y as isize - d;
                let down = y as isize + d;
                if up >= 0 && row_filled[up as usize * w + x] != MISSING_DEPTH {
                    out[y * w + x] = row_filled[up as usize * w + x];
                    break;
                }
                if down < h as isize && row_filled[down as usize * w + x] != MISSING_DEPTH {
                    out[y * w + x] = row_filled[down as usize * w + x];
                    break;
                }
            }
        }
    }
    DepthMap::new(w, h, out, map.max_depth()).expect("extension preserves invariants")
}

/// Separable Gaussian blur with border renormalization. Output values stay
/// within the input's min/max (convex combinations).
fn gaussian_blur(values: &[f32], w: usize, h: usize, size: usize, sigma: f32) -> Vec<f32> {
    let r = (size / 2) as isize;
    let weights: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma as f64 * sigma as f64)).exp())
        .collect();
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut dst = vec![0.0f32; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0f64;
                let mut wsum = 0.0f64;
                for (k, &wk) in weights.iter().enumerate() {
                    let d = k as isize - r;
                    let (nx, ny) = if horizontal { (x + d, y) } else { (x, y + d) };
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    acc += wk * src[ny as usize * w + nx as usize] as f64;
                    wsum += wk;
                }
                dst[y as usize * w + x as usize] = (acc / wsum) as f32;
            }
        }
        dst
    };
    pass(&pass(values, true), false)
}

/// Densify a sparse depth map: no missing pixels remain and every pixel that
/// carried a measurement keeps it bit-exact.
pub fn morph_fill(map: &DepthMap, params: &FillParams) -> Result<DepthMap> {
    params.validate()?;
    if map.valid_count() == 0 {
        return Err(Error::Unfillable("depth map has no valid measurement".into()));
    }
    let (w, h) = (map.width(), map.height());

    let mut current = dilate_nearest(map, &params.dilate_kernel);
    current = closing_min(&current, params.closing_size);
    // Closing can erode isolated measurements away near large holes; the
    // original pixels are restored before growing so no source is lost.
    current = restore_original(&current, map);

    let large = Kernel::new(KernelShape::Full, params.large_size)?;
    for _ in 0..params.max_iterations {
        if current.valid_count() == w * h {
            break;
        }
        current = dilate_nearest(&current, &large);
    }
    if current.valid_count() != w * h {
        current = extend_nearest_axis(&current);
    }
    debug_assert_eq!(current.valid_count(), w * h);

    let blurred = gaussian_blur(current.values(), w, h, params.blur_size, params.blur_sigma);
    let mut out = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let original = map.values()[i];
        out.push(if original != MISSING_DEPTH { original } else { blurred[i] });
    }
    DepthMap::new(w, h, out, map.max_depth())
}

fn restore_original(current: &DepthMap, original: &DepthMap) -> DepthMap {
    let mut values = current.values().to_vec();
    for (i, &v) in original.values().iter().enumerate() {
        if v != MISSING_DEPTH {
            values[i] = v;
        }
    }
    DepthMap::new(current.width(), current.height(), values, current.max_depth())
        .expect("restore preserves invariants")
}

/// Scale a dense depth map by the dataset bound into `(0, 1]`.
pub fn normalize_depth(map: &DepthMap) -> Result<Grid<f32>> {
    if map.max_depth() <= 0.0 {
        return Err(Error::Config("max_depth must be positive".into()));
    }
    if map.valid_count() != map.width() * map.height() {
        return Err(Error::InvalidInput(format!(
            "normalize_depth requires a dense map; {} of {} pixels missing",
            map.width() * map.height() - map.valid_count(),
            map.width() * map.height()
        )));
    }
    let data = map.values().iter().map(|&v| v / map.max_depth()).collect();
    Grid::from_vec(map.width(), map.height(), data)
}

/// Inverse of [`normalize_depth`].
pub fn denormalize_depth(grid: &Grid<f32>, max_depth: f32) -> Result<DepthMap> {
    let values = grid.data().iter().map(|&v| v * max_depth).collect();
    DepthMap::new(grid.width(), grid.height(), values, max_depth)
}
