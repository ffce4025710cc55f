//! Property tests: raster invariants over pipeline outputs, shape formulas
//! under randomized fuzzing, and encoding round trips.

use proptest::prelude::*;

use dfuse_core::autodiff::{conv2d, conv_transpose2d, pool, upsample_bilinear, PoolKind, Tensor};
use dfuse_core::camera::{project_pointcloud, CameraIntrinsics, PointCloud};
use dfuse_core::fill::{morph_fill, FillParams};
use dfuse_core::imageio::{read_depth_png16, write_depth_png16};
use dfuse_core::raster::{DepthMap, MISSING_DEPTH};
use dfuse_core::sample::{sparsify, SampleSpec};

fn depth_map_invariants_hold(map: &DepthMap) {
    for &v in map.values() {
        assert!(v.is_finite());
        assert!(v == MISSING_DEPTH || (v > 0.0 && v <= map.max_depth()));
    }
    let mask = map.mask();
    for (m, &v) in mask.data().iter().zip(map.values()) {
        assert_eq!(*m, v != MISSING_DEPTH);
    }
}

fn arb_sparse_map() -> impl Strategy<Value = DepthMap> {
    (4usize..24, 4usize..20, 0u64..1000).prop_map(|(w, h, seed)| {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let mut values = vec![MISSING_DEPTH; w * h];
        for v in values.iter_mut() {
            if next() % 100 < 15 {
                *v = 0.5 + (next() % 900) as f32 / 100.0;
            }
        }
        values[(next() % (w * h) as u64) as usize] = 4.2;
        DepthMap::new(w, h, values, 10.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fill_outputs_satisfy_depth_invariants(map in arb_sparse_map()) {
        let filled = morph_fill(&map, &FillParams::default()).unwrap();
        depth_map_invariants_hold(&filled);
        prop_assert_eq!(filled.valid_count(), map.width() * map.height());
    }

    #[test]
    fn sparsify_outputs_satisfy_depth_invariants(map in arb_sparse_map(), seed in 0u64..100, pct in 0u32..=100) {
        let f = pct as f64 / 100.0;
        let out = sparsify(&map, SampleSpec::Fraction(f), seed).unwrap();
        depth_map_invariants_hold(&out);
        // Selection is a subset with values unchanged.
        for (o, i) in out.values().iter().zip(map.values()) {
            prop_assert!(*o == MISSING_DEPTH || o.to_bits() == i.to_bits());
        }
        let expect = (f * map.valid_count() as f64 + 0.5).floor() as usize;
        prop_assert_eq!(out.valid_count(), expect);
    }

    #[test]
    fn projection_outputs_satisfy_depth_invariants(
        n in 0usize..64,
        seed in 0u64..500,
    ) {
        let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(7);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let points: Vec<[f32; 3]> = (0..n)
            .map(|_| {
                [
                    (next() % 200) as f32 / 20.0 - 5.0,
                    (next() % 200) as f32 / 20.0 - 5.0,
                    (next() % 300) as f32 / 10.0 - 5.0,
                ]
            })
            .collect();
        let cloud = PointCloud::new(points).unwrap();
        let intr = CameraIntrinsics::new(40.0, 40.0, 16.0, 12.0).unwrap();
        let map = project_pointcloud(&cloud, &intr, 32, 24, 20.0).unwrap();
        depth_map_invariants_hold(&map);
        prop_assert!(map.valid_count() <= n);
    }

    #[test]
    fn conv_shapes_follow_closed_form(
        h in 1usize..10, w in 1usize..10,
        k in 1usize..4, stride in 1usize..3, pad in 0usize..2,
        cin in 1usize..3, cout in 1usize..3,
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let x = Tensor::<f32>::zeros([1, cin, h, w]).unwrap();
        let wt = Tensor::<f32>::zeros([cout, cin, k, k]).unwrap();
        let y = conv2d(&x, &wt, None, stride, pad).unwrap();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        prop_assert_eq!(y.shape(), [1, cout, oh, ow]);

        // Transposed convolution inverts the shape arithmetic.
        let wt2 = Tensor::<f32>::zeros([cin, cout, k, k]).unwrap();
        if (h - 1) * stride + k > 2 * pad && (w - 1) * stride + k > 2 * pad {
            let yt = conv_transpose2d(&x, &wt2, None, stride, pad).unwrap();
            prop_assert_eq!(
                yt.shape(),
                [1, cout, (h - 1) * stride + k - 2 * pad, (w - 1) * stride + k - 2 * pad]
            );
        }
    }

    #[test]
    fn pool_and_upsample_shapes_follow_closed_form(
        h in 1usize..12, w in 1usize..12,
        win in 1usize..4, stride in 1usize..3,
        oh in 1usize..12, ow in 1usize..12,
    ) {
        prop_assume!(win <= h && win <= w);
        let x = Tensor::<f32>::zeros([2, 2, h, w]).unwrap();
        let y = pool(&x, PoolKind::Max, win, stride).unwrap();
        prop_assert_eq!(y.shape(), [2, 2, (h - win) / stride + 1, (w - win) / stride + 1]);
        let u = upsample_bilinear(&x, oh, ow).unwrap();
        prop_assert_eq!(u.shape(), [2, 2, oh, ow]);
    }

    #[test]
    fn depth_png_round_trip_is_identity_on_stored_domain(
        stored in proptest::collection::vec(0u16..=u16::MAX, 12)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f32> = stored.iter().map(|&s| s as f32 / 256.0).collect();
        let map = DepthMap::new(4, 3, values, 65535.0 / 256.0).unwrap();
        let path = dir.path().join("d.png");
        write_depth_png16(&map, &path).unwrap();
        let back = read_depth_png16(&path).unwrap();
        for (orig, round) in stored.iter().zip(back.values()) {
            prop_assert_eq!(*orig as f32 / 256.0, *round);
        }
    }
}

#[test]
fn grayscale_conversion_is_bit_reproducible() {
    let mut data = vec![0.0f32; 3 * 16 * 8];
    for (i, v) in data.iter_mut().enumerate() {
        *v = ((i * 37) % 256) as f32 / 255.0;
    }
    let img = dfuse_core::raster::IntensityImage::new(16, 8, data).unwrap();
    let a = img.to_gray_u8();
    let b = img.to_gray_u8();
    assert_eq!(a.data(), b.data());
}

#[test]
fn conv2d_forward_is_bit_deterministic() {
    let mut vals = vec![0.0f32; 2 * 3 * 8 * 8];
    for (i, v) in vals.iter_mut().enumerate() {
        *v = ((i * 31 % 97) as f32 - 48.0) / 7.0;
    }
    let x = Tensor::from_data([2, 3, 8, 8], vals).unwrap();
    let mut wv = vec![0.0f32; 4 * 3 * 3 * 3];
    for (i, v) in wv.iter_mut().enumerate() {
        *v = ((i * 17 % 53) as f32 - 26.0) / 11.0;
    }
    let w = Tensor::from_data([4, 3, 3, 3], wv).unwrap();
    let a = conv2d(&x, &w, None, 1, 1).unwrap().to_vec();
    let b = conv2d(&x, &w, None, 1, 1).unwrap().to_vec();
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}
