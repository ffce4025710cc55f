//! Raster primitives: generic grids, metric depth maps, validity masks and
//! normalized color images.
//!
//! Depth maps use `0.0` as the missing-measurement sentinel (the KITTI
//! depth-PNG convention) and carry the dataset's maximum-depth bound so that
//! every consumer can validate and normalize against the same limit.

use crate::error::{Error, Result};

/// Missing-depth sentinel. A pixel holding exactly this value carries no
/// measurement.
pub const MISSING_DEPTH: f32 = 0.0;

/// Row-major 2-D grid of arbitrary cell type.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }
}

impl<T> Grid<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel boolean raster marking which depth pixels carry a measurement.
pub type ValidMask = Grid<bool>;

impl ValidMask {
    /// Number of `true` pixels.
    pub fn count(&self) -> usize {
        self.data().iter().filter(|&&v| v).count()
    }

    /// Fraction of `true` pixels.
    pub fn density(&self) -> f64 {
        if self.data().is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data().len() as f64
        }
    }
}

/// Single-channel metric depth raster. Values are meters; `0.0` means no
/// measurement; valid values lie in `(0, max_depth]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: Grid<f32>,
    max_depth: f32,
}

impl DepthMap {
    /// Build a depth map, validating the value invariants.
    pub fn new(width: usize, height: usize, values: Vec<f32>, max_depth: f32) -> Result<Self> {
        if max_depth <= 0.0 || !max_depth.is_finite() {
            return Err(Error::Config(format!("max_depth must be positive and finite, got {max_depth}")));
        }
        let grid = Grid::from_vec(width, height, values)?;
        for (i, &v) in grid.data().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("depth value at index {i} is not finite: {v}")));
            }
            if v != MISSING_DEPTH && (v <= 0.0 || v > max_depth) {
                return Err(Error::InvalidInput(format!(
                    "depth value {v} at index {i} outside (0, {max_depth}]"
                )));
            }
        }
        Ok(Self { grid, max_depth })
    }

    /// All-missing map.
    pub fn empty(width: usize, height: usize, max_depth: f32) -> Result<Self> {
        Self::new(width, height, vec![MISSING_DEPTH; width * height], max_depth)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn max_depth(&self) -> f32 {
        self.max_depth
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        *self.grid.get(x, y)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != MISSING_DEPTH
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        self.grid.data()
    }

    /// Derive the validity mask (true where a measurement is present).
    pub fn mask(&self) -> ValidMask {
        let data = self.grid.data().iter().map(|&v| v != MISSING_DEPTH).collect();
        Grid::from_vec(self.width(), self.height(), data).expect("mask dims match")
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v != MISSING_DEPTH).count()
    }

    /// Fraction of valid pixels.
    pub fn density(&self) -> f64 {
        if self.values().is_empty() {
            0.0
        } else {
            self.valid_count() as f64 / self.values().len() as f64
        }
    }

    /// Re-scope the map to a tighter dataset bound: measurements beyond
    /// `max_depth` become missing.
    pub fn clamp_to_max_depth(&self, max_depth: f32) -> Result<DepthMap> {
        if max_depth <= 0.0 || !max_depth.is_finite() {
            return Err(Error::Config(format!("max_depth must be positive and finite, got {max_depth}")));
        }
        let values = self
            .values()
            .iter()
            .map(|&v| if v > max_depth { MISSING_DEPTH } else { v })
            .collect();
        DepthMap::new(self.width(), self.height(), values, max_depth)
    }

    /// Crop a `w`x`h` window anchored at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<DepthMap> {
        if x0 + w > self.width() || y0 + h > self.height() {
            return Err(Error::Shape(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width(),
                self.height()
            )));
        }
        let mut values = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                values.push(self.get(x, y));
            }
        }
        DepthMap::new(w, h, values, self.max_depth)
    }
}

/// 3-channel color raster with values normalized to `[0, 1]`, stored planar
/// (channel, row, column).
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl IntensityImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "intensity data length {} does not match 3x{}x{}",
                data.len(),
                width,
                height
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "intensity value {v} at index {i} outside [0, 1]"
                )));
            }
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Channel-plane slice (`c` in 0..3).
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Luma conversion with fixed Rec.601 weights, quantized to 8 bits for
    /// bit-reproducible stereo matching.
    pub fn to_gray_u8(&self) -> Grid<u8> {
        let mut out = Grid::new(self.width, self.height, 0u8);
        for y in 0..self.height {
            for x in 0..self.width {
                let g = 0.299 * self.get(0, x, y) + 0.587 * self.get(1, x, y) + 0.114 * self.get(2, x, y);
                out.set(x, y, (g * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<IntensityImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Shape(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for c in 0..3 {
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    data.push(self.get(c, x, y));
                }
            }
        }
        IntensityImage::new(w, h, data)
    }
}
