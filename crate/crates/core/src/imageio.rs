//! Bit-exact raster I/O and dataset manifests.
//!
//! Depth is stored as single-channel 16-bit PNG with `stored = depth_m * 256`
//! and `0` marking a missing measurement (the KITTI devkit convention).
//! Color is 8-bit 3-channel PNG or JPEG. Manifests are tab-separated text,
//! one sample per line.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, IntensityImage, MISSING_DEPTH};

/// Largest depth encodable as a 16-bit stored value (65535 / 256 meters).
pub const PNG16_MAX_METERS: f32 = 65535.0 / 256.0;

/// Read a 16-bit single-channel depth PNG. Stored values decode as
/// `stored / 256` meters; stored zero becomes the missing sentinel. The
/// returned map carries the encodable bound; use
/// [`DepthMap::clamp_to_max_depth`] to apply a dataset bound.
pub fn read_depth_png16(path: &Path) -> Result<DepthMap> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let gray = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected 16-bit single-channel PNG, got {:?} with {} channel(s)",
                path.display(),
                other.color(),
                other.color().channel_count()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let values = gray.pixels().map(|p| p.0[0] as f32 / 256.0).collect();
    DepthMap::new(w, h, values, PNG16_MAX_METERS)
}

/// Write a depth map as a 16-bit PNG with `stored = round(depth * 256)`
/// (half away from zero) and missing pixels stored as zero.
pub fn write_depth_png16(map: &DepthMap, path: &Path) -> Result<()> {
    let mut stored = Vec::with_capacity(map.values().len());
    for &v in map.values() {
        if v == MISSING_DEPTH {
            stored.push(0u16);
            continue;
        }
        let q = (v as f64 * 256.0).round();
        if q > u16::MAX as f64 {
            return Err(Error::Range(format!(
                "depth {v} m exceeds the encodable bound of {PNG16_MAX_METERS} m"
            )));
        }
        stored.push(q as u16);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_vec(map.width() as u32, map.height() as u32, stored)
            .expect("buffer size matches dims");
    let file = fs::File::create(path)?;
    let encoder = image::codecs::png::PngEncoder::new(BufWriter::new(file));
    buf.write_with_encoder(encoder)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Read an 8-bit 3-channel color image into `[0, 1]` planes.
pub fn read_rgb8(path: &Path) -> Result<IntensityImage> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected 8-bit 3-channel image, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0.0f32; 3 * w * h];
    for (x, y, p) in rgb.enumerate_pixels() {
        let idx = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * w * h + idx] = p.0[c] as f32 / 255.0;
        }
    }
    IntensityImage::new(w, h, data)
}

/// Write `[0, 1]` planes as an 8-bit RGB PNG (values quantized by rounding).
pub fn write_rgb8(img: &IntensityImage, path: &Path) -> Result<()> {
    let (w, h) = (img.width(), img.height());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img.get(0, x, y) * 255.0).round() as u8,
                (img.get(1, x, y) * 255.0).round() as u8,
                (img.get(2, x, y) * 255.0).round() as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Write a validity mask as an 8-bit grayscale PNG (255 = valid).
pub fn write_mask_png8(mask: &crate::raster::ValidMask, path: &Path) -> Result<()> {
    let (w, h) = (mask.width(), mask.height());
    let data: Vec<u8> = mask.data().iter().map(|&v| if v { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_vec(w as u32, h as u32, data).expect("buffer size matches dims");
    buf.save(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Read an 8-bit grayscale PNG as a validity mask (nonzero = valid).
pub fn read_mask_png8(path: &Path) -> Result<crate::raster::ValidMask> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let gray = match img {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected 8-bit grayscale mask, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.pixels().map(|p| p.0[0] != 0).collect();
    crate::raster::Grid::from_vec(w, h, data)
}

/// One dataset sample: color image, sparse depth, optional ground truth and
/// optional right-camera image for stereo supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub rgb_path: PathBuf,
    pub sparse_depth_path: PathBuf,
    pub gt_depth_path: Option<PathBuf>,
    pub right_rgb_path: Option<PathBuf>,
}

/// Ordered sample list plus the dataset's maximum-depth bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub max_depth: f32,
}

/// Parse a manifest file.
///
/// Format: `#` starts a comment; a `max_depth=<meters>` header line sets the
/// dataset bound; every other non-empty line is one record of tab-separated
/// fields in fixed order `rgb<TAB>sparse[<TAB>gt[<TAB>right]]`, where `-`
/// marks an absent optional field. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut max_depth: Option<f32> = None;
    let mut records = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("max_depth=") {
            let parsed: f32 = v
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("line {}: bad max_depth '{v}'", lineno + 1)))?;
            max_depth = Some(parsed);
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::Validation(format!(
                "line {}: record needs at least rgb and sparse-depth paths",
                lineno + 1
            )));
        }
        let resolve = |s: &str| -> Option<PathBuf> {
            if s == "-" || s.is_empty() {
                None
            } else {
                Some(base.join(s))
            }
        };
        let rgb = resolve(fields[0]).ok_or_else(|| {
            Error::Validation(format!("line {}: rgb path is mandatory", lineno + 1))
        })?;
        let sparse = resolve(fields[1]).ok_or_else(|| {
            Error::Validation(format!("line {}: sparse depth path is mandatory", lineno + 1))
        })?;
        for (p, what) in [(&rgb, "rgb"), (&sparse, "sparse depth")] {
            if !p.exists() {
                return Err(Error::Validation(format!(
                    "line {}: {what} path does not exist: {}",
                    lineno + 1,
                    p.display()
                )));
            }
        }
        records.push(SampleRecord {
            rgb_path: rgb,
            sparse_depth_path: sparse,
            gt_depth_path: fields.get(2).and_then(|s| resolve(s)),
            right_rgb_path: fields.get(3).and_then(|s| resolve(s)),
        });
    }

    let max_depth = max_depth
        .ok_or_else(|| Error::Validation("manifest is missing a max_depth=<meters> header".into()))?;
    if max_depth <= 0.0 || !max_depth.is_finite() {
        return Err(Error::Validation(format!("max_depth must be positive, got {max_depth}")));
    }
    if records.is_empty() {
        return Err(Error::Validation("manifest lists no records".into()));
    }
    Ok(DatasetManifest { records, max_depth })
}

/// A record's rasters loaded and re-scoped to the dataset bound.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub rgb: IntensityImage,
    pub sparse: DepthMap,
    pub gt: Option<DepthMap>,
    pub right_rgb: Option<IntensityImage>,
}

/// Load a record's rasters, enforcing that they all share dimensions.
pub fn load_sample(record: &SampleRecord, max_depth: f32) -> Result<LoadedSample> {
    let rgb = read_rgb8(&record.rgb_path)?;
    let sparse = read_depth_png16(&record.sparse_depth_path)?.clamp_to_max_depth(max_depth)?;
    let gt = record
        .gt_depth_path
        .as_ref()
        .map(|p| read_depth_png16(p).and_then(|m| m.clamp_to_max_depth(max_depth)))
        .transpose()?;
    let right_rgb = record.right_rgb_path.as_ref().map(|p| read_rgb8(p)).transpose()?;

    let (w, h) = (rgb.width(), rgb.height());
    let mut dims = vec![("sparse depth", sparse.width(), sparse.height())];
    if let Some(g) = &gt {
        dims.push(("ground truth", g.width(), g.height()));
    }
    if let Some(r) = &right_rgb {
        dims.push(("right rgb", r.width(), r.height()));
    }
    for (what, dw, dh) in dims {
        if dw != w || dh != h {
            return Err(Error::Validation(format!(
                "{what} is {dw}x{dh} but rgb is {w}x{h} for {}",
                record.rgb_path.display()
            )));
        }
    }
    Ok(LoadedSample { rgb, sparse, gt, right_rgb })
}
