//! Deterministic input generators shared by the benchmarks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dfuse_core::autodiff::Tensor;
use dfuse_core::raster::{DepthMap, IntensityImage, MISSING_DEPTH};

/// Sparse depth map with roughly `density` of pixels carrying values.
pub fn sparse_depth(w: usize, h: usize, density: f64, seed: u64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..w * h)
        .map(|_| if rng.gen_bool(density) { rng.gen_range(1.0..80.0) } else { MISSING_DEPTH })
        .collect();
    DepthMap::new(w, h, values, 85.0).unwrap()
}

/// Textured rectified stereo pair at constant disparity `k`.
pub fn stereo_pair(w: usize, h: usize, k: usize) -> (IntensityImage, IntensityImage) {
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

/// Random tensor for convolution benchmarks.
pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_data(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random trainable tensor.
pub fn random_param(shape: [usize; 4], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::parameter(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}
