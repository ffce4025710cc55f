//! The dual-branch depth completion network: a color branch and a depth
//! branch, each with spatial pyramid pooling, fused into a shared volume and
//! decoded back to full resolution through incremental deconvolution. The
//! head concatenates multi-scale decoder taps, applies a 1x1 convolution and
//! a sigmoid, and rescales by the dataset's maximum depth.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{
    batch_norm, concat_channels, conv2d, conv_transpose2d, pool, upsample_bilinear, PoolKind,
    Scalar, Tensor,
};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, Grid, IntensityImage};

/// Channel schedule and pooling layout.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DFuseNetConfig {
    /// Width of the color branch (also the residual-block width).
    pub rgb_channels: usize,
    /// Width of the depth branch.
    pub depth_channels: usize,
    /// Channels produced by each pyramid scale's 1x1 convolution.
    pub spp_channels: usize,
    /// Pyramid pooling windows, strictly decreasing, applied at branch
    /// resolution (1/4 of the input).
    pub spp_windows: Vec<usize>,
    /// Output channels of the three fusion convolutions.
    pub fusion_channels: [usize; 3],
    /// Output channels of the three decoder stages.
    pub decoder_channels: [usize; 3],
    /// Which residual block's output feeds the fusion volume (1-based).
    pub fusion_tap_block: usize,
    /// Dataset maximum depth in meters; the sigmoid output rescales to this.
    pub max_depth: f32,
}

impl DFuseNetConfig {
    /// Full-size schedule.
    pub fn standard(max_depth: f32) -> Self {
        Self {
            rgb_channels: 32,
            depth_channels: 32,
            spp_channels: 16,
            spp_windows: vec![64, 32, 16, 8],
            fusion_channels: [128, 96, 64],
            decoder_channels: [64, 32, 32],
            fusion_tap_block: 2,
            max_depth,
        }
    }

    /// Desk-scale schedule for tests and smoke runs.
    pub fn tiny(max_depth: f32) -> Self {
        Self {
            rgb_channels: 8,
            depth_channels: 8,
            spp_channels: 8,
            spp_windows: vec![8, 4, 2],
            fusion_channels: [16, 16, 8],
            decoder_channels: [8, 8, 8],
            fusion_tap_block: 2,
            max_depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("rgb_channels", self.rgb_channels),
            ("depth_channels", self.depth_channels),
            ("spp_channels", self.spp_channels),
        ] {
            if c < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.fusion_channels.iter().chain(&self.decoder_channels).any(|&c| c < 1) {
            return Err(Error::Config("fusion/decoder channels must be >= 1".into()));
        }
        if self.spp_windows.is_empty() {
            return Err(Error::Config("spp_windows must be non-empty".into()));
        }
        if !self.spp_windows.windows(2).all(|p| p[0] > p[1]) {
            return Err(Error::Config(format!(
                "spp_windows must be strictly decreasing, got {:?}",
                self.spp_windows
            )));
        }
        if !(1..=4).contains(&self.fusion_tap_block) {
            return Err(Error::Config(format!(
                "fusion_tap_block must be in 1..=4, got {}",
                self.fusion_tap_block
            )));
        }
        if self.max_depth <= 0.0 || !self.max_depth.is_finite() {
            return Err(Error::Config(format!("max_depth must be positive, got {}", self.max_depth)));
        }
        Ok(())
    }

    /// Input spatial dims must be a multiple of this; forward pads and
    /// crops back automatically when they are not.
    pub fn input_divisor(&self) -> usize {
        4 * self.spp_windows[0]
    }
}

/// Deterministic Kaiming-style initializer.
struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn conv_weight<T: Scalar>(&mut self, shape: [usize; 4], fan_in: usize) -> Result<Tensor<T>> {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let n: usize = shape.iter().product();
        let data: Vec<T> =
            (0..n).map(|_| T::from_f64_lossy(normal.sample(&mut self.rng))).collect();
        Tensor::parameter(shape, data)
    }
}

struct Conv2dLayer<T: Scalar> {
    weight: Tensor<T>,
    bias: Option<Tensor<T>>,
    stride: usize,
    padding: usize,
}

impl<T: Scalar> Conv2dLayer<T> {
    fn new(
        init: &mut Init,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = init.conv_weight([out_ch, in_ch, k, k], in_ch * k * k)?;
        let bias = if bias { Some(Tensor::parameter([1, out_ch, 1, 1], vec![T::zero(); out_ch])?) } else { None };
        Ok(Self { weight, bias, stride, padding })
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b.clone()));
        }
    }
}

struct ConvT2dLayer<T: Scalar> {
    weight: Tensor<T>,
    stride: usize,
    padding: usize,
}

impl<T: Scalar> ConvT2dLayer<T> {
    fn new(init: &mut Init, in_ch: usize, out_ch: usize, k: usize, stride: usize, padding: usize) -> Result<Self> {
        let weight = init.conv_weight([in_ch, out_ch, k, k], in_ch * k * k)?;
        Ok(Self { weight, stride, padding })
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv_transpose2d(x, &self.weight, None, self.stride, self.padding)
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
    }
}

struct BatchNormLayer<T: Scalar> {
    gamma: Tensor<T>,
    beta: Tensor<T>,
    running_mean: Tensor<T>,
    running_var: Tensor<T>,
}

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

impl<T: Scalar> BatchNormLayer<T> {
    fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::parameter([1, channels, 1, 1], vec![T::one(); channels])?,
            beta: Tensor::parameter([1, channels, 1, 1], vec![T::zero(); channels])?,
            running_mean: Tensor::zeros([1, channels, 1, 1])?,
            running_var: Tensor::full([1, channels, 1, 1], T::one())?,
        })
    }

    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        batch_norm(
            x,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
            training,
            T::from_f64_lossy(BN_MOMENTUM),
            T::from_f64_lossy(BN_EPS),
        )
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }

    fn buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.running_mean"), self.running_mean.clone()));
        out.push((format!("{prefix}.running_var"), self.running_var.clone()));
    }
}

/// Convolution + batch norm + ReLU.
struct ConvBn<T: Scalar> {
    conv: Conv2dLayer<T>,
    bn: BatchNormLayer<T>,
}

impl<T: Scalar> ConvBn<T> {
    fn new(init: &mut Init, in_ch: usize, out_ch: usize, k: usize, stride: usize, padding: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2dLayer::new(init, in_ch, out_ch, k, stride, padding, false)?,
            bn: BatchNormLayer::new(out_ch)?,
        })
    }

    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        self.bn.forward(&self.conv.forward(x)?, training)?.relu()
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv.params(&format!("{prefix}.conv"), out);
        self.bn.params(&format!("{prefix}.bn"), out);
    }

    fn buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.bn.buffers(&format!("{prefix}.bn"), out);
    }
}

/// conv-BN-ReLU-conv-BN plus identity skip, ReLU after the sum.
struct ResidualBlock<T: Scalar> {
    conv1: Conv2dLayer<T>,
    bn1: BatchNormLayer<T>,
    conv2: Conv2dLayer<T>,
    bn2: BatchNormLayer<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    fn new(init: &mut Init, channels: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv2dLayer::new(init, channels, channels, 3, 1, 1, false)?,
            bn1: BatchNormLayer::new(channels)?,
            conv2: Conv2dLayer::new(init, channels, channels, 3, 1, 1, false)?,
            bn2: BatchNormLayer::new(channels)?,
        })
    }

    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let y = self.bn1.forward(&self.conv1.forward(x)?, training)?.relu()?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?, training)?;
        y.add(x)?.relu()
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.conv1.params(&format!("{prefix}.conv1"), out);
        self.bn1.params(&format!("{prefix}.bn1"), out);
        self.conv2.params(&format!("{prefix}.conv2"), out);
        self.bn2.params(&format!("{prefix}.bn2"), out);
    }

    fn buffers(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.bn1.buffers(&format!("{prefix}.bn1"), out);
        self.bn2.buffers(&format!("{prefix}.bn2"), out);
    }
}

/// Spatial pyramid pooling block: each window pools to a coarse grid, runs a
/// 1x1 convolution, and upsamples back; the scales are concatenated after
/// the input features, so output channels are `input + scales * per_scale`.
pub struct SppBlock<T: Scalar> {
    windows: Vec<usize>,
    kind: PoolKind,
    convs: Vec<Conv2dLayer<T>>,
}

impl<T: Scalar> SppBlock<T> {
    fn new(init: &mut Init, in_ch: usize, per_scale: usize, windows: &[usize], kind: PoolKind) -> Result<Self> {
        let convs = windows
            .iter()
            .map(|_| Conv2dLayer::new(init, in_ch, per_scale, 1, 1, 0, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { windows: windows.to_vec(), kind, convs })
    }

    /// Build a block with explicit weights; test hook for the identity case.
    pub fn with_weights(
        windows: Vec<usize>,
        kind: PoolKind,
        weights: Vec<(Tensor<T>, Tensor<T>)>,
    ) -> Result<Self> {
        if windows.len() != weights.len() {
            return Err(Error::Config("one weight pair per window required".into()));
        }
        let convs = weights
            .into_iter()
            .map(|(w, b)| Conv2dLayer { weight: w, bias: Some(b), stride: 1, padding: 0 })
            .collect();
        Ok(Self { windows, kind, convs })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [_, _, h, w] = x.shape();
        let largest = self.windows[0];
        if h % largest != 0 || w % largest != 0 {
            return Err(Error::Config(format!(
                "pyramid pooling needs feature dims divisible by {largest}, got {h}x{w}"
            )));
        }
        let mut parts = vec![x.clone()];
        for (win, conv) in self.windows.iter().zip(&self.convs) {
            let pooled = pool(x, self.kind, *win, *win)?;
            let mixed = conv.forward(&pooled)?;
            parts.push(upsample_bilinear(&mixed, h, w)?);
        }
        concat_channels(&parts)
    }

    fn params(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, c) in self.convs.iter().enumerate() {
            c.params(&format!("{prefix}.scale{i}"), out);
        }
    }
}

/// The assembled network.
pub struct DFuseNet<T: Scalar> {
    pub config: DFuseNetConfig,
    rgb_conv1: ConvBn<T>,
    rgb_conv2: ConvBn<T>,
    rgb_blocks: Vec<ResidualBlock<T>>,
    rgb_spp: SppBlock<T>,
    depth_conv1: ConvBn<T>,
    depth_conv2: ConvBn<T>,
    depth_conv3: ConvBn<T>,
    depth_spp: SppBlock<T>,
    fusion: Vec<ConvBn<T>>,
    dec1: ConvBn<T>,
    dec2_deconv: ConvT2dLayer<T>,
    dec2_bn: BatchNormLayer<T>,
    dec3: ConvBn<T>,
    head: Conv2dLayer<T>,
}

/// Sigmoid outputs are clamped to this margin so `f32` saturation can never
/// produce exactly 0 or `max_depth`.
const SIGMOID_MARGIN: f64 = 1e-6;

impl<T: Scalar> DFuseNet<T> {
    /// Construct the network with seeded Kaiming initialization; equal seeds
    /// give bit-identical parameters.
    pub fn build(config: DFuseNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(seed);
        let (cr, cd, s) = (config.rgb_channels, config.depth_channels, config.spp_channels);
        let k = config.spp_windows.len();

        let rgb_conv1 = ConvBn::new(&mut init, 3, cr, 3, 2, 1)?;
        let rgb_conv2 = ConvBn::new(&mut init, cr, cr, 3, 2, 1)?;
        let rgb_blocks =
            (0..4).map(|_| ResidualBlock::new(&mut init, cr)).collect::<Result<Vec<_>>>()?;
        let rgb_spp = SppBlock::new(&mut init, cr, s, &config.spp_windows, PoolKind::Avg)?;

        let depth_conv1 = ConvBn::new(&mut init, 1, cd, 7, 2, 3)?;
        let depth_conv2 = ConvBn::new(&mut init, cd, cd, 5, 2, 2)?;
        let depth_conv3 = ConvBn::new(&mut init, cd, cd, 5, 1, 2)?;
        let depth_spp = SppBlock::new(&mut init, cd, s, &config.spp_windows, PoolKind::Max)?;

        let fused_in = cr + (cr + k * s) + (cd + k * s);
        let [f0, f1, f2] = config.fusion_channels;
        let fusion = vec![
            ConvBn::new(&mut init, fused_in, f0, 3, 1, 1)?,
            ConvBn::new(&mut init, f0, f1, 3, 1, 1)?,
            ConvBn::new(&mut init, f1, f2, 3, 1, 1)?,
        ];

        let [d0, d1, d2] = config.decoder_channels;
        let dec1 = ConvBn::new(&mut init, f2, d0, 3, 1, 1)?;
        let dec2_deconv = ConvT2dLayer::new(&mut init, d0, d1, 4, 2, 1)?;
        let dec2_bn = BatchNormLayer::new(d1)?;
        let dec3 = ConvBn::new(&mut init, d1, d2, 3, 1, 1)?;
        let head = Conv2dLayer::new(&mut init, d0 + d1 + d2, 1, 1, 1, 0, true)?;

        Ok(Self {
            config,
            rgb_conv1,
            rgb_conv2,
            rgb_blocks,
            rgb_spp,
            depth_conv1,
            depth_conv2,
            depth_conv3,
            depth_spp,
            fusion,
            dec1,
            dec2_deconv,
            dec2_bn,
            dec3,
            head,
        })
    }

    /// Differentiable forward pass over an RGB batch `(N, 3, H, W)` and a
    /// filled, normalized depth batch `(N, 1, H, W)`. Inputs whose spatial
    /// dims are not a multiple of [`DFuseNetConfig::input_divisor`] are
    /// zero-padded on the bottom/right and the output is cropped back.
    pub fn forward_t(&self, rgb: &Tensor<T>, depth: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let [n, c_rgb, h, w] = rgb.shape();
        let [nd, c_d, hd, wd] = depth.shape();
        if c_rgb != 3 || c_d != 1 {
            return Err(Error::Shape(format!(
                "expected rgb (N,3,H,W) and depth (N,1,H,W), got {:?} and {:?}",
                rgb.shape(),
                depth.shape()
            )));
        }
        if n != nd || h != hd || w != wd {
            return Err(Error::Shape(format!(
                "rgb {:?} and depth {:?} batches do not align",
                rgb.shape(),
                depth.shape()
            )));
        }

        let div = self.config.input_divisor();
        let ph = h.div_ceil(div) * div;
        let pw = w.div_ceil(div) * div;
        let (rgb, depth) = if ph != h || pw != w {
            log::debug!("padding {h}x{w} input to {ph}x{pw} (divisor {div})");
            (rgb.pad_spatial(ph, pw)?, depth.pad_spatial(ph, pw)?)
        } else {
            (rgb.clone(), depth.clone())
        };

        // Color branch at 1/4 resolution.
        let r = self.rgb_conv1.forward(&rgb, training)?;
        let mut r = self.rgb_conv2.forward(&r, training)?;
        let mut tap = None;
        for (i, block) in self.rgb_blocks.iter().enumerate() {
            r = block.forward(&r, training)?;
            if i + 1 == self.config.fusion_tap_block {
                tap = Some(r.clone());
            }
        }
        let rgb_tap = tap.expect("fusion_tap_block validated in 1..=4");
        let rgb_feat = self.rgb_spp.forward(&r)?;

        // Depth branch at 1/4 resolution.
        let d = self.depth_conv1.forward(&depth, training)?;
        let d = self.depth_conv2.forward(&d, training)?;
        let d = self.depth_conv3.forward(&d, training)?;
        let depth_feat = self.depth_spp.forward(&d)?;

        // Fusion: joint volume, three channel-reducing convolutions, then a
        // 2x upsample to half resolution.
        let mut fused = concat_channels(&[rgb_tap, rgb_feat, depth_feat])?;
        for conv in &self.fusion {
            fused = conv.forward(&fused, training)?;
        }
        let [_, _, fh, fw] = fused.shape();
        let fused = upsample_bilinear(&fused, fh * 2, fw * 2)?;

        // Decoder back to full resolution with one deconvolution step.
        let t1 = self.dec1.forward(&fused, training)?;
        let t2 = self.dec2_bn.forward(&self.dec2_deconv.forward(&t1)?, training)?.relu()?;
        let t3 = self.dec3.forward(&t2, training)?;

        // Multi-scale head.
        let t1_up = upsample_bilinear(&t1, ph, pw)?;
        let stack = concat_channels(&[t1_up, t2, t3])?;
        let logits = self.head.forward(&stack)?;
        let lo = T::from_f64_lossy(SIGMOID_MARGIN);
        let hi = T::from_f64_lossy(1.0 - SIGMOID_MARGIN);
        let out = logits.sigmoid()?.clamp(lo, hi)?.scale(T::from_f64_lossy(self.config.max_depth as f64))?;
        out.crop_spatial(h, w)
    }

    /// Named trainable parameters in a stable order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.rgb_conv1.params("rgb.conv1", &mut out);
        self.rgb_conv2.params("rgb.conv2", &mut out);
        for (i, b) in self.rgb_blocks.iter().enumerate() {
            b.params(&format!("rgb.res{}", i + 1), &mut out);
        }
        self.rgb_spp.params("rgb.spp", &mut out);
        self.depth_conv1.params("depth.conv1", &mut out);
        self.depth_conv2.params("depth.conv2", &mut out);
        self.depth_conv3.params("depth.conv3", &mut out);
        self.depth_spp.params("depth.spp", &mut out);
        for (i, f) in self.fusion.iter().enumerate() {
            f.params(&format!("fusion.conv{}", i + 1), &mut out);
        }
        self.dec1.params("decoder.stage1", &mut out);
        self.dec2_deconv.params("decoder.stage2.deconv", &mut out);
        self.dec2_bn.params("decoder.stage2.bn", &mut out);
        self.dec3.params("decoder.stage3", &mut out);
        self.head.params("head", &mut out);
        out
    }

    /// Named non-trainable buffers (batch-norm running statistics).
    pub fn named_buffers(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.rgb_conv1.buffers("rgb.conv1", &mut out);
        self.rgb_conv2.buffers("rgb.conv2", &mut out);
        for (i, b) in self.rgb_blocks.iter().enumerate() {
            b.buffers(&format!("rgb.res{}", i + 1), &mut out);
        }
        self.depth_conv1.buffers("depth.conv1", &mut out);
        self.depth_conv2.buffers("depth.conv2", &mut out);
        self.depth_conv3.buffers("depth.conv3", &mut out);
        for (i, f) in self.fusion.iter().enumerate() {
            f.buffers(&format!("fusion.conv{}", i + 1), &mut out);
        }
        self.dec1.buffers("decoder.stage1", &mut out);
        self.dec2_bn.buffers("decoder.stage2.bn", &mut out);
        self.dec3.buffers("decoder.stage3", &mut out);
        out
    }

    /// Total trainable parameter count.
    pub fn num_params(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Reset every parameter's gradient buffer to zeros.
    pub fn zero_grad(&self) {
        for (_, p) in self.named_parameters() {
            p.zero_grad();
        }
    }
}

impl DFuseNet<f32> {
    /// Eval-mode inference over image batches; outputs are dense depth maps
    /// with every value strictly inside `(0, max_depth)`.
    pub fn predict(&self, rgb: &[IntensityImage], filled_norm: &[Grid<f32>]) -> Result<Vec<DepthMap>> {
        if rgb.is_empty() || rgb.len() != filled_norm.len() {
            return Err(Error::Shape(format!(
                "predict: got {} rgb and {} depth inputs",
                rgb.len(),
                filled_norm.len()
            )));
        }
        let rgb_t = intensity_batch_to_tensor(rgb)?;
        let depth_t = grid_batch_to_tensor(filled_norm)?;
        let out = self.forward_t(&rgb_t, &depth_t, false)?;
        let [n, _, h, w] = out.shape();
        let data = out.to_vec();
        (0..n)
            .map(|i| {
                DepthMap::new(w, h, data[i * h * w..(i + 1) * h * w].to_vec(), self.config.max_depth)
            })
            .collect()
    }
}

/// Stack color images into an `(N, 3, H, W)` tensor.
pub fn intensity_batch_to_tensor<T: Scalar>(images: &[IntensityImage]) -> Result<Tensor<T>> {
    if images.is_empty() {
        return Err(Error::Shape("empty image batch".into()));
    }
    let (w, h) = (images[0].width(), images[0].height());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::Shape("image batch dimensions differ".into()));
        }
        data.extend(img.data().iter().map(|&v| T::from_f64_lossy(v as f64)));
    }
    Tensor::from_data([images.len(), 3, h, w], data)
}

/// Stack single-channel rasters into an `(N, 1, H, W)` tensor.
pub fn grid_batch_to_tensor<T: Scalar>(grids: &[Grid<f32>]) -> Result<Tensor<T>> {
    if grids.is_empty() {
        return Err(Error::Shape("empty raster batch".into()));
    }
    let (w, h) = (grids[0].width(), grids[0].height());
    let mut data = Vec::with_capacity(grids.len() * h * w);
    for g in grids {
        if g.width() != w || g.height() != h {
            return Err(Error::Shape("raster batch dimensions differ".into()));
        }
        data.extend(g.data().iter().map(|&v| T::from_f64_lossy(v as f64)));
    }
    Tensor::from_data([grids.len(), 1, h, w], data)
}

/// Analytic parameter count from the layer inventory; the independent route
/// the build is checked against.
pub fn expected_param_count(config: &DFuseNetConfig) -> usize {
    let (cr, cd, s) = (config.rgb_channels, config.depth_channels, config.spp_channels);
    let k = config.spp_windows.len();
    let conv = |cin: usize, cout: usize, ksz: usize| cout * cin * ksz * ksz;
    let bn = |c: usize| 2 * c;

    let mut total = 0;
    // Color branch.
    total += conv(3, cr, 3) + bn(cr);
    total += conv(cr, cr, 3) + bn(cr);
    total += 4 * (2 * (conv(cr, cr, 3) + bn(cr)));
    total += k * (conv(cr, s, 1) + s); // spp convs carry bias
    // Depth branch.
    total += conv(1, cd, 7) + bn(cd);
    total += conv(cd, cd, 5) + bn(cd);
    total += conv(cd, cd, 5) + bn(cd);
    total += k * (conv(cd, s, 1) + s);
    // Fusion.
    let fused_in = cr + (cr + k * s) + (cd + k * s);
    let [f0, f1, f2] = config.fusion_channels;
    total += conv(fused_in, f0, 3) + bn(f0);
    total += conv(f0, f1, 3) + bn(f1);
    total += conv(f1, f2, 3) + bn(f2);
    // Decoder.
    let [d0, d1, d2] = config.decoder_channels;
    total += conv(f2, d0, 3) + bn(d0);
    total += conv(d0, d1, 4) + bn(d1);
    total += conv(d1, d2, 3) + bn(d2);
    // Head.
    total += conv(d0 + d1 + d2, 1, 1) + 1;
    total
}
