//! Optimization: bias-corrected Adam with coupled weight decay, stepped
//! learning-rate decay, a deterministic training loop over manifest data,
//! and bit-exact checkpointing.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Scalar, Tensor};
use crate::camera::StereoRig;
use crate::error::{Error, Result};
use crate::eval::{aggregate_reports, compute_metrics, MetricsReport};
use crate::fill::{morph_fill, normalize_depth, FillParams};
use crate::imageio::{self, DatasetManifest, LoadedSample};
use crate::loss::{total_loss, LossWeights, PrimaryNorm};
use crate::network::{grid_batch_to_tensor, intensity_batch_to_tensor, DFuseNet, DFuseNetConfig};
use crate::raster::{DepthMap, Grid, IntensityImage, ValidMask, MISSING_DEPTH};
use crate::stereo::{sgm_stereo_depth, SgmParams};

pub use rand_chacha::ChaCha8Rng as TrainRng;

/// The seeded RNG stream that drives data order and crop draws.
pub fn training_rng(seed: u64) -> TrainRng {
    TrainRng::seed_from_u64(seed)
}

/// Adam constants (community defaults).
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Training hyperparameters and preprocessing configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning rate multiplies by this every `lr_decay_every_epochs`
    /// (a "10% drop" reads as x0.9).
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub primary_norm: PrimaryNorm,
    pub fill: FillParams,
    pub sgm: SgmParams,
    /// Needed only when the stereo term is active (beta > 0).
    pub stereo_rig: Option<StereoRig>,
    /// Random training crop (height, width); full frames when absent.
    pub crop: Option<(usize, usize)>,
    /// Fraction of manifest records (taken from the end) held out for
    /// per-epoch metric evaluation.
    pub val_fraction: f64,
    /// Directory for content-addressed SGM target caching.
    pub sgm_cache_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 2,
            epochs: 40,
            lr_decay_factor: 0.9,
            lr_decay_every_epochs: 5,
            seed: 0,
            weights: LossWeights::default(),
            primary_norm: PrimaryNorm::default(),
            fill: FillParams::default(),
            sgm: SgmParams::default(),
            stereo_rig: None,
            crop: None,
            val_fraction: 0.0,
            sgm_cache_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.lr_decay_factor <= 0.0 || self.lr_decay_every_epochs == 0 {
            return Err(Error::Config("lr decay factor/interval must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        self.weights.validate()?;
        self.fill.validate()?;
        self.sgm.validate()
    }
}

/// First/second moment buffers plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with weight decay folded into the
/// gradient (coupled L2 form). Parameters without an allocated gradient
/// buffer count as zero-gradient.
pub fn adam_step<T: Scalar>(
    params: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    betas: (f64, f64),
    epsilon: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam state tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::from_f64_lossy(betas.0), T::from_f64_lossy(betas.1));
    let one = T::one();
    let bias1 = one - b1.powi(t);
    let bias2 = one - b2.powi(t);
    let lr_t = T::from_f64_lossy(lr);
    let eps = T::from_f64_lossy(epsilon);
    let wd = T::from_f64_lossy(weight_decay);

    for (i, p) in params.iter().enumerate() {
        let grad = p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]);
        let mut values = p.to_vec();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..values.len() {
            let g = grad[j] + wd * values[j];
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            values[j] = values[j] - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        p.set_data(&values);
    }
    Ok(())
}

/// Stepped decay: `lr = initial * factor^(epoch / every)`.
pub fn schedule_lr(epoch: usize, config: &TrainConfig) -> f64 {
    config.learning_rate * config.lr_decay_factor.powi((epoch / config.lr_decay_every_epochs) as i32)
}

/// One logged optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub primary: f64,
    pub stereo: f64,
    pub smooth: f64,
    pub total: f64,
    pub stereo_pixels: usize,
}

impl StepRecord {
    pub fn to_log_line(&self) -> String {
        format!(
            "step={} epoch={} lr={:.6e} loss_primary={:.6e} loss_stereo={:.6e} loss_smooth={:.6e} loss_total={:.6e} stereo_pixels={}",
            self.step, self.epoch, self.lr, self.primary, self.stereo, self.smooth, self.total, self.stereo_pixels
        )
    }
}

/// Per-epoch summary.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_total_loss: f64,
    pub val_metrics: Option<MetricsReport>,
    pub checkpoint_path: PathBuf,
}

/// Everything a training run produced.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Stereo pipeline invocations (cache hits do not count).
    pub sgm_runs: usize,
    pub skipped_samples: usize,
}

/// A fully preprocessed training sample held in memory.
struct PreparedSample {
    rgb: IntensityImage,
    filled_norm: Grid<f32>,
    gt: DepthMap,
    stereo: Option<(DepthMap, ValidMask)>,
}

struct PreparedData {
    train: Vec<PreparedSample>,
    val: Vec<LoadedSample>,
}

fn crop_grid(grid: &Grid<f32>, x0: usize, y0: usize, w: usize, h: usize) -> Grid<f32> {
    let mut data = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            data.push(*grid.get(x, y));
        }
    }
    Grid::from_vec(w, h, data).expect("crop dims validated")
}

fn mask_from_depth(map: &DepthMap) -> Vec<bool> {
    map.values().iter().map(|&v| v != MISSING_DEPTH).collect()
}

/// Compute (or fetch from the content-addressed cache) the SGM supervision
/// target for one stereo pair.
fn stereo_target(
    left: &IntensityImage,
    right: &IntensityImage,
    rig: &StereoRig,
    params: &SgmParams,
    max_depth: f32,
    cache_dir: Option<&Path>,
    sgm_runs: &mut usize,
) -> Result<(DepthMap, ValidMask)> {
    let key = cache_dir.map(|dir| {
        let mut hasher = Sha256::new();
        for img in [left, right] {
            for &v in img.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.update(format!("{params:?}|{rig:?}|{max_depth}"));
        let digest = hasher.finalize();
        (dir.join(format!("{digest:x}.depth.png")), dir.join(format!("{digest:x}.mask.png")))
    });
    if let Some((depth_path, mask_path)) = &key {
        if depth_path.exists() && mask_path.exists() {
            let depth = imageio::read_depth_png16(depth_path)?.clamp_to_max_depth(max_depth)?;
            let mask = imageio::read_mask_png8(mask_path)?;
            return Ok((depth, mask));
        }
    }
    let (depth, mask) = sgm_stereo_depth(left, right, rig, params, max_depth)?;
    *sgm_runs += 1;
    if let Some((depth_path, mask_path)) = &key {
        if let Some(parent) = depth_path.parent() {
            fs::create_dir_all(parent)?;
        }
        imageio::write_depth_png16(&depth, depth_path)?;
        imageio::write_mask_png8(&mask, mask_path)?;
    }
    Ok((depth, mask))
}

/// Load and preprocess the manifest once: fill + normalize the sparse
/// input, compute or fetch stereo targets, split off the validation tail.
fn prepare_data(
    manifest: &DatasetManifest,
    config: &TrainConfig,
    report: &mut TrainReport,
) -> Result<PreparedData> {
    let n_val = (config.val_fraction * manifest.records.len() as f64).round() as usize;
    let n_train = manifest.records.len() - n_val;
    if n_train == 0 {
        return Err(Error::Validation("no training records after the validation split".into()));
    }
    let stereo_active = config.weights.beta > 0.0;
    if stereo_active && config.stereo_rig.is_none() {
        return Err(Error::Config("stereo loss is active (beta > 0) but no stereo rig given".into()));
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    for (i, record) in manifest.records.iter().enumerate() {
        let loaded = match imageio::load_sample(record, manifest.max_depth) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping sample {}: {e}", record.rgb_path.display());
                report.skipped_samples += 1;
                continue;
            }
        };
        if i >= n_train {
            val.push(loaded);
            continue;
        }
        let gt = loaded.gt.clone().ok_or_else(|| {
            Error::Validation(format!(
                "record {} has no ground-truth depth, required for the primary loss",
                record.rgb_path.display()
            ))
        })?;
        let filled = morph_fill(&loaded.sparse, &config.fill)?;
        let filled_norm = normalize_depth(&filled)?;
        let stereo = match (&loaded.right_rgb, stereo_active) {
            (Some(right), true) => Some(stereo_target(
                &loaded.rgb,
                right,
                config.stereo_rig.as_ref().expect("checked above"),
                &config.sgm,
                manifest.max_depth,
                config.sgm_cache_dir.as_deref(),
                &mut report.sgm_runs,
            )?),
            _ => None,
        };
        train.push(PreparedSample { rgb: loaded.rgb, filled_norm, gt, stereo });
    }
    if train.is_empty() {
        return Err(Error::Validation("every training sample failed to load".into()));
    }
    if let Some((ch, cw)) = config.crop {
        for s in &train {
            if ch > s.gt.height() || cw > s.gt.width() {
                return Err(Error::Config(format!(
                    "crop {ch}x{cw} exceeds sample {}x{}",
                    s.gt.width(),
                    s.gt.height()
                )));
            }
        }
    }
    Ok(PreparedData { train, val })
}

/// The epoch loop shared by fresh and resumed runs. `rng` advances through
/// shuffles and crop draws in a fixed order, so a run resumed from an epoch
/// checkpoint retraces the uninterrupted run step for step.
#[allow(clippy::too_many_arguments)]
fn run_epochs(
    model: &DFuseNet<f32>,
    data: &PreparedData,
    config: &TrainConfig,
    out_dir: &Path,
    adam: &mut AdamState<f32>,
    rng: &mut ChaCha8Rng,
    start_epoch: usize,
    report: &mut TrainReport,
) -> Result<()> {
    let params: Vec<Tensor<f32>> = model.named_parameters().into_iter().map(|(_, t)| t).collect();
    let stereo_active = config.weights.beta > 0.0;
    let mut step: u64 = adam.step;

    for epoch in start_epoch..config.epochs {
        let lr = schedule_lr(epoch, config);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        for k in (1..order.len()).rev() {
            let j = rng.gen_range(0..=k);
            order.swap(k, j);
        }

        let mut epoch_total = 0.0f64;
        let mut epoch_steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut rgb_batch = Vec::new();
            let mut depth_batch = Vec::new();
            let mut gt_values: Vec<f32> = Vec::new();
            let mut gt_mask: Vec<bool> = Vec::new();
            let mut stereo_values: Vec<f32> = Vec::new();
            let mut stereo_mask: Vec<bool> = Vec::new();
            let mut any_stereo = false;

            for &idx in chunk {
                let s = &data.train[idx];
                let (w, h) = (s.gt.width(), s.gt.height());
                let (cw, ch, x0, y0) = match config.crop {
                    Some((ch, cw)) => {
                        let x0 = rng.gen_range(0..=w - cw);
                        let y0 = rng.gen_range(0..=h - ch);
                        (cw, ch, x0, y0)
                    }
                    None => (w, h, 0, 0),
                };
                let rgb = s.rgb.crop(x0, y0, cw, ch)?;
                let depth = crop_grid(&s.filled_norm, x0, y0, cw, ch);
                let gt = s.gt.crop(x0, y0, cw, ch)?;
                gt_mask.extend(mask_from_depth(&gt));
                gt_values.extend_from_slice(gt.values());
                match &s.stereo {
                    Some((sd, sm)) if stereo_active => {
                        any_stereo = true;
                        let sd = sd.crop(x0, y0, cw, ch)?;
                        stereo_values.extend_from_slice(sd.values());
                        for y in y0..y0 + ch {
                            for x in x0..x0 + cw {
                                stereo_mask.push(*sm.get(x, y));
                            }
                        }
                    }
                    _ => {
                        stereo_values.resize(stereo_values.len() + cw * ch, 0.0);
                        stereo_mask.resize(stereo_mask.len() + cw * ch, false);
                    }
                }
                rgb_batch.push(rgb);
                depth_batch.push(depth);
            }

            let (bh, bw) = (depth_batch[0].height(), depth_batch[0].width());
            if depth_batch.iter().any(|d| d.height() != bh || d.width() != bw) {
                return Err(Error::Shape(
                    "samples in a batch must share dimensions; set a training crop".into(),
                ));
            }

            let rgb_t = intensity_batch_to_tensor::<f32>(&rgb_batch)?;
            let depth_t = grid_batch_to_tensor::<f32>(&depth_batch)?;
            let n = rgb_batch.len();
            let gt_t = Tensor::from_data([n, 1, bh, bw], gt_values)?;
            let stereo_t = Tensor::from_data([n, 1, bh, bw], stereo_values)?;

            model.zero_grad();
            let pred = model.forward_t(&rgb_t, &depth_t, true)?;
            let stereo_arg = if any_stereo { Some((&stereo_t, &stereo_mask[..])) } else { None };
            let (total, parts) =
                total_loss(&pred, &gt_t, &gt_mask, stereo_arg, &config.weights, config.primary_norm)?;
            total.backward()?;
            adam_step(&params, adam, lr, (ADAM_BETA1, ADAM_BETA2), ADAM_EPS, config.weight_decay)?;

            step += 1;
            let record = StepRecord {
                step,
                epoch,
                lr,
                primary: parts.primary,
                stereo: parts.stereo,
                smooth: parts.smooth,
                total: parts.total,
                stereo_pixels: parts.stereo_pixels,
            };
            log::info!("{}", record.to_log_line());
            epoch_total += parts.total;
            epoch_steps += 1;
            report.steps.push(record);
        }
        if epoch_steps == 0 {
            return Err(Error::Validation(format!("epoch {epoch} processed no batches")));
        }

        let val_metrics = if data.val.is_empty() {
            None
        } else {
            let mut per_image = Vec::new();
            for s in &data.val {
                if let Some(gt) = &s.gt {
                    let filled = morph_fill(&s.sparse, &config.fill)?;
                    let norm = normalize_depth(&filled)?;
                    let pred = model.predict(std::slice::from_ref(&s.rgb), &[norm])?;
                    per_image.push(compute_metrics(&pred[0], gt)?);
                }
            }
            if per_image.is_empty() {
                None
            } else {
                Some(aggregate_reports(&per_image)?)
            }
        };

        let checkpoint_path = out_dir.join(format!("epoch_{epoch:04}.ckpt"));
        let ckpt = Checkpoint::capture(model, adam, (epoch + 1) as u32, rng);
        ckpt.save(&checkpoint_path)?;
        report.epochs.push(EpochRecord {
            epoch,
            mean_total_loss: epoch_total / epoch_steps as f64,
            val_metrics,
            checkpoint_path,
        });
    }
    Ok(())
}

/// Deterministic optimization loop over a manifest. Checkpoints are written
/// per epoch as `epoch_{E:04}.ckpt` under `out_dir`.
pub fn train_loop(
    model: &DFuseNet<f32>,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut report = TrainReport::default();
    let data = prepare_data(manifest, config, &mut report)?;
    let params: Vec<Tensor<f32>> = model.named_parameters().into_iter().map(|(_, t)| t).collect();
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_epochs(model, &data, config, out_dir, &mut adam, &mut rng, 0, &mut report)?;
    Ok(report)
}

/// Restore a checkpoint into `model` and continue training up to
/// `config.epochs`, matching the uninterrupted run step for step.
pub fn resume_train_loop(
    model: &DFuseNet<f32>,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    checkpoint: &Checkpoint,
    out_dir: &Path,
) -> Result<TrainReport> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let (mut adam, start_epoch, mut rng) = checkpoint.restore_into(model)?;
    let mut report = TrainReport::default();
    let data = prepare_data(manifest, config, &mut report)?;
    run_epochs(model, &data, config, out_dir, &mut adam, &mut rng, start_epoch as usize, &mut report)?;
    Ok(report)
}

/// Bit-exact snapshot of a training run: model parameters and buffers,
/// optimizer moments, epoch counter, and RNG stream position, with the
/// network configuration embedded for validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: DFuseNetConfig,
    /// Number of completed epochs (training resumes here).
    pub epoch: u32,
    pub adam_step_count: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    /// (name, shape, values, adam_m, adam_v) per parameter, in model order.
    pub params: Vec<(String, [usize; 4], Vec<f32>, Vec<f32>, Vec<f32>)>,
    /// (name, shape, values) per buffer.
    pub buffers: Vec<(String, [usize; 4], Vec<f32>)>,
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn capture(model: &DFuseNet<f32>, adam: &AdamState<f32>, epoch: u32, rng: &ChaCha8Rng) -> Self {
        let named = model.named_parameters();
        let params = named
            .iter()
            .enumerate()
            .map(|(i, (name, t))| {
                (
                    name.clone(),
                    t.shape(),
                    t.to_vec(),
                    adam.m.get(i).cloned().unwrap_or_else(|| vec![0.0; t.numel()]),
                    adam.v.get(i).cloned().unwrap_or_else(|| vec![0.0; t.numel()]),
                )
            })
            .collect();
        let buffers = model
            .named_buffers()
            .into_iter()
            .map(|(name, t)| (name, t.shape(), t.to_vec()))
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            epoch,
            adam_step_count: adam.step,
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
            params,
            buffers,
        }
    }

    /// Build a fresh model from the embedded configuration and load the
    /// checkpoint into it.
    pub fn build_model(&self) -> Result<DFuseNet<f32>> {
        let model = DFuseNet::build(self.config.clone(), 0)?;
        self.restore_into(&model)?;
        Ok(model)
    }

    /// Load parameters/buffers into an existing model and return the
    /// optimizer state, completed-epoch counter, and RNG. Fails on the
    /// first name/shape mismatch.
    pub fn restore_into(&self, model: &DFuseNet<f32>) -> Result<(AdamState<f32>, u32, ChaCha8Rng)> {
        let named = model.named_parameters();
        if named.len() != self.params.len() {
            return Err(Error::Incompatible(format!(
                "model has {} parameters, checkpoint has {}",
                named.len(),
                self.params.len()
            )));
        }
        for ((name, tensor), (ck_name, ck_shape, values, _, _)) in named.iter().zip(&self.params) {
            if name != ck_name || tensor.shape() != *ck_shape {
                return Err(Error::Incompatible(format!(
                    "parameter {name} with shape {:?} does not match checkpoint entry {ck_name} {ck_shape:?}",
                    tensor.shape()
                )));
            }
            tensor.set_data(values);
        }
        let named_buffers = model.named_buffers();
        if named_buffers.len() != self.buffers.len() {
            return Err(Error::Incompatible("buffer count mismatch".into()));
        }
        for ((name, tensor), (ck_name, ck_shape, values)) in named_buffers.iter().zip(&self.buffers) {
            if name != ck_name || tensor.shape() != *ck_shape {
                return Err(Error::Incompatible(format!(
                    "buffer {name} does not match checkpoint entry {ck_name} {ck_shape:?}"
                )));
            }
            tensor.set_data(values);
        }
        let adam = AdamState {
            m: self.params.iter().map(|(_, _, _, m, _)| m.clone()).collect(),
            v: self.params.iter().map(|(_, _, _, _, v)| v.clone()).collect(),
            step: self.adam_step_count,
        };
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_word_pos(self.rng_word_pos);
        Ok((adam, self.epoch, rng))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        let config_json = serde_json::to_string(&self.config)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        write_bytes(&mut out, config_json.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.adam_step_count.to_le_bytes());
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, shape, values, m, v) in &self.params {
            write_bytes(&mut out, name.as_bytes());
            for d in shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            write_f32s(&mut out, values);
            write_f32s(&mut out, m);
            write_f32s(&mut out, v);
        }
        out.extend_from_slice(&(self.buffers.len() as u32).to_le_bytes());
        for (name, shape, values) in &self.buffers {
            write_bytes(&mut out, name.as_bytes());
            for d in shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            write_f32s(&mut out, values);
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let config_json = String::from_utf8(r.bytes_field()?.to_vec())
            .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
        let config: DFuseNetConfig = serde_json::from_str(&config_json)
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let epoch = r.u32()?;
        let adam_step_count = r.u64()?;
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(r.take(32)?);
        let rng_word_pos = r.u128()?;
        let n_params = r.u32()? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = String::from_utf8(r.bytes_field()?.to_vec())
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
            let numel: usize = shape.iter().product();
            let values = r.f32s(numel)?;
            let m = r.f32s(numel)?;
            let v = r.f32s(numel)?;
            params.push((name, shape, values, m, v));
        }
        let n_buffers = r.u32()? as usize;
        let mut buffers = Vec::with_capacity(n_buffers);
        for _ in 0..n_buffers {
            let name = String::from_utf8(r.bytes_field()?.to_vec())
                .map_err(|_| Error::Format("buffer name is not UTF-8".into()))?;
            let shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
            let numel: usize = shape.iter().product();
            buffers.push((name, shape, r.f32s(numel)?));
        }
        Ok(Self { version, config, epoch, adam_step_count, rng_seed, rng_word_pos, params, buffers })
    }
}

fn write_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn write_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn bytes_field(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
