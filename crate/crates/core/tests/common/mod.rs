//! Shared helpers for integration tests: deterministic synthetic scenes
//! with strongly correlated color and depth, written out as dataset files.

use std::fs;
use std::path::{Path, PathBuf};

use dfuse_core::imageio::{write_depth_png16, write_rgb8};
use dfuse_core::raster::{DepthMap, IntensityImage};
use dfuse_core::sample::{sparsify, SampleSpec};

/// A deterministic scene: a depth ramp (far at the top) with rectangular
/// objects at distinct depths, and a color image whose channels encode the
/// same structure so the color branch carries real signal.
pub fn synth_scene(idx: usize, w: usize, h: usize, max_depth: f32) -> (IntensityImage, DepthMap) {
    let mut depth = vec![0.0f32; w * h];
    for y in 0..h {
        let t = y as f32 / (h - 1).max(1) as f32;
        let base = max_depth * (0.85 - 0.55 * t);
        for x in 0..w {
            depth[y * w + x] = base;
        }
    }
    // Three boxes per scene, positions shifted by the scene index.
    let boxes = [
        (0.12f32, 0.25f32, 0.30f32),
        (0.45, 0.60, 0.18),
        (0.70, 0.40, 0.42),
    ];
    for (b, &(fx, fy, level)) in boxes.iter().enumerate() {
        let bw = w / 6;
        let bh = h / 4;
        let x0 = ((fx * w as f32) as usize + idx * (7 + b * 3)) % (w - bw);
        let y0 = ((fy * h as f32) as usize + idx * (5 + b * 2)) % (h - bh);
        let d = max_depth * level;
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                depth[y * w + x] = d;
            }
        }
    }
    let gt = DepthMap::new(w, h, depth.clone(), max_depth).unwrap();

    let mut rgb = vec![0.0f32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d_norm = depth[i] / max_depth;
            // Channel 0 tracks depth, 1 marks object interiors, 2 adds
            // horizontal texture.
            rgb[i] = d_norm.clamp(0.0, 1.0);
            rgb[w * h + i] = if d_norm < 0.6 { 0.9 } else { 0.1 };
            rgb[2 * w * h + i] = 0.5 + 0.45 * ((x as f32 * 0.37 + idx as f32).sin());
        }
    }
    let img = IntensityImage::new(w, h, rgb).unwrap();
    (img, gt)
}

/// Write `n` scenes as a dataset (rgb, sparse, gt) and return the manifest
/// path. Sparse inputs keep `sparse_fraction` of the ground truth.
pub fn write_dataset(
    dir: &Path,
    n: usize,
    w: usize,
    h: usize,
    max_depth: f32,
    sparse_fraction: f64,
    seed: u64,
) -> PathBuf {
    let mut lines = vec![format!("max_depth={max_depth}")];
    for i in 0..n {
        let (rgb, gt) = synth_scene(i, w, h, max_depth);
        let sparse = sparsify(&gt, SampleSpec::Fraction(sparse_fraction), seed + i as u64).unwrap();
        let rgb_path = dir.join(format!("s{i}_rgb.png"));
        let sparse_path = dir.join(format!("s{i}_sparse.png"));
        let gt_path = dir.join(format!("s{i}_gt.png"));
        write_rgb8(&rgb, &rgb_path).unwrap();
        write_depth_png16(&sparse, &sparse_path).unwrap();
        write_depth_png16(&gt, &gt_path).unwrap();
        lines.push(format!("s{i}_rgb.png\ts{i}_sparse.png\ts{i}_gt.png"));
    }
    let manifest = dir.join("manifest.txt");
    fs::write(&manifest, lines.join("\n")).unwrap();
    manifest
}

/// Horizontally shifted stereo pair with synthetic texture: the right image
/// equals the left shifted by `k` pixels (constant disparity `k`).
pub fn shifted_stereo_pair(w: usize, h: usize, k: usize) -> (IntensityImage, IntensityImage) {
    let texture = |x: usize, y: usize| -> f32 {
        let v = (x * 37 + y * 101) ^ (x * y * 13 + 7);
        (v % 251) as f32 / 255.0
    };
    let build = |shift: usize| {
        let mut data = vec![0.0f32; 3 * w * h];
        for y in 0..h {
            for x in 0..w {
                let v = texture(x + shift, y);
                data[y * w + x] = v;
                data[w * h + y * w + x] = 1.0 - v;
                data[2 * w * h + y * w + x] = texture(x + shift + 31, y);
            }
        }
        IntensityImage::new(w, h, data).unwrap()
    };
    (build(k), build(2 * k))
}
