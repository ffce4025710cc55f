//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dfuse_core::camera::{CameraIntrinsics, StereoRig};
use dfuse_core::eval::{aggregate_reports, compute_metrics, MetricsReport};
use dfuse_core::fill::{morph_fill, normalize_depth, FillParams, Kernel, KernelShape};
use dfuse_core::imageio::{
    load_manifest, read_depth_png16, read_rgb8, write_depth_png16, write_mask_png8,
};
use dfuse_core::loss::PrimaryNorm;
use dfuse_core::network::{DFuseNet, DFuseNetConfig};
use dfuse_core::raster::{DepthMap, MISSING_DEPTH};
use dfuse_core::sample::{sparsify, SampleSpec};
use dfuse_core::stereo::{sgm_stereo_depth, SgmParams};
use dfuse_core::train::{resume_train_loop, train_loop, Checkpoint, TrainConfig};
use dfuse_core::{Error, Result};

use crate::config_file::FileConfig;
use crate::{EvalArgs, FillArgs, FillOpts, PredictArgs, SampleArgs, SgmArgs, SgmOpts, TrainArgs};

/// Exit-code mapping: numeric failures are 3, all other pipeline errors 2.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn merge_fill(file: &FileConfig, opts: &FillOpts) -> Result<FillParams> {
    let mut p = file.fill.unwrap_or_default();
    if let Some(shape) = &opts.dilate_shape {
        let shape = match shape.as_str() {
            "diamond" => KernelShape::Diamond,
            _ => KernelShape::Full,
        };
        p.dilate_kernel = Kernel { shape, ..p.dilate_kernel };
    }
    if let Some(size) = opts.dilate_size {
        p.dilate_kernel = Kernel { size, ..p.dilate_kernel };
    }
    if let Some(v) = opts.closing_size {
        p.closing_size = v;
    }
    if let Some(v) = opts.large_size {
        p.large_size = v;
    }
    if let Some(v) = opts.max_iterations {
        p.max_iterations = v;
    }
    if let Some(v) = opts.blur_size {
        p.blur_size = v;
    }
    if let Some(v) = opts.blur_sigma_px {
        p.blur_sigma = v;
    }
    p.validate()?;
    Ok(p)
}

fn merge_sgm(file: &FileConfig, opts: &SgmOpts) -> Result<SgmParams> {
    let mut p = file.sgm.unwrap_or_default();
    if let Some(v) = opts.census_window {
        p.census_window = v;
    }
    if let Some(v) = opts.dmax {
        p.dmax = v;
    }
    if let Some(v) = opts.p1 {
        p.p1 = v;
    }
    if let Some(v) = opts.p2 {
        p.p2 = v;
    }
    if let Some(v) = opts.lr_tolerance_px {
        p.lr_tolerance = v;
    }
    p.validate()?;
    Ok(p)
}

pub fn run_fill(args: FillArgs, file: &FileConfig) -> Result<()> {
    let params = merge_fill(file, &args.fill)?;
    let sparse = read_depth_png16(&args.input)?;
    let dense = morph_fill(&sparse, &params)?;
    write_depth_png16(&dense, &args.output)?;
    println!(
        "filled {} ({} of {} pixels were measurements)",
        args.output.display(),
        sparse.valid_count(),
        sparse.values().len()
    );
    Ok(())
}

pub fn run_sgm(args: SgmArgs, file: &FileConfig) -> Result<()> {
    let params = merge_sgm(file, &args.sgm)?;
    let left = read_rgb8(&args.left)?;
    let right = read_rgb8(&args.right)?;
    let rig = StereoRig::new(
        CameraIntrinsics::new(args.fx_px, args.fx_px, 0.0, 0.0)?,
        args.baseline_m,
    )?;
    let (depth, mask) = sgm_stereo_depth(&left, &right, &rig, &params, args.max_depth_m)?;
    write_depth_png16(&depth, &args.out_depth)?;
    write_mask_png8(&mask, &args.out_mask)?;
    println!(
        "stereo depth at {} ({:.1}% of pixels valid)",
        args.out_depth.display(),
        100.0 * mask.density()
    );
    Ok(())
}

pub fn run_sample(args: SampleArgs) -> Result<()> {
    let spec = match (args.samples, args.fraction) {
        (Some(n), None) => SampleSpec::Count(n),
        (None, Some(f)) => SampleSpec::Fraction(f),
        _ => unreachable!("clap group guarantees exactly one"),
    };
    let dense = read_depth_png16(&args.input)?;
    let sparse = sparsify(&dense, spec, args.seed)?;
    write_depth_png16(&sparse, &args.output)?;
    println!("kept {} of {} measurements", sparse.valid_count(), dense.valid_count());
    Ok(())
}

pub fn run_train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;

    let mut config = TrainConfig {
        fill: merge_fill(file, &args.fill)?,
        sgm: merge_sgm(file, &args.sgm)?,
        ..Default::default()
    };
    if let Some(w) = file.loss {
        config.weights = w;
    }
    if let Some(t) = &file.train {
        if let Some(v) = t.learning_rate {
            config.learning_rate = v;
        }
        if let Some(v) = t.weight_decay {
            config.weight_decay = v;
        }
        if let Some(v) = t.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = t.epochs {
            config.epochs = v;
        }
        if let Some(v) = t.lr_decay_factor {
            config.lr_decay_factor = v;
        }
        if let Some(v) = t.lr_decay_every_epochs {
            config.lr_decay_every_epochs = v;
        }
        if let Some(v) = t.seed {
            config.seed = v;
        }
        if let Some(v) = t.val_fraction {
            config.val_fraction = v;
        }
        if let (Some(h), Some(w)) = (t.crop_h, t.crop_w) {
            config.crop = Some((h, w));
        }
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        config.weight_decay = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.lr_decay_factor {
        config.lr_decay_factor = v;
    }
    if let Some(v) = args.lr_decay_every {
        config.lr_decay_every_epochs = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.alpha {
        config.weights.alpha = v;
    }
    if let Some(v) = args.beta {
        config.weights.beta = v;
    }
    if let Some(v) = args.gamma {
        config.weights.gamma = v;
    }
    if let Some(n) = &args.primary_norm {
        config.primary_norm = if n == "l1" { PrimaryNorm::L1 } else { PrimaryNorm::L2 };
    }
    if let (Some(h), Some(w)) = (args.crop_h, args.crop_w) {
        config.crop = Some((h, w));
    }
    if let Some(v) = args.val_fraction {
        config.val_fraction = v;
    }
    if let (Some(fx), Some(b)) = (args.fx_px, args.baseline_m) {
        config.stereo_rig = Some(StereoRig::new(CameraIntrinsics::new(fx, fx, 0.0, 0.0)?, b)?);
    }
    config.sgm_cache_dir = args.sgm_cache_dir.clone();

    let report = if let Some(ckpt_path) = &args.resume {
        let ckpt = Checkpoint::load(ckpt_path)?;
        let model = DFuseNet::build(ckpt.config.clone(), args.net_seed)?;
        resume_train_loop(&model, &manifest, &config, &ckpt, &args.out_dir)?
    } else {
        let net_config = match args.preset.as_str() {
            "tiny" => DFuseNetConfig::tiny(manifest.max_depth),
            _ => DFuseNetConfig::standard(manifest.max_depth),
        };
        let model = DFuseNet::build(net_config, args.net_seed)?;
        train_loop(&model, &manifest, &config, &args.out_dir)?
    };

    let log_path = args.out_dir.join("train.log");
    let mut log_file = fs::File::create(&log_path)?;
    for step in &report.steps {
        writeln!(log_file, "{}", step.to_log_line())?;
    }
    for e in &report.epochs {
        if let Some(m) = &e.val_metrics {
            println!("epoch {} mean_loss={:.6e} val_rmse_mm={:.3}", e.epoch, e.mean_total_loss, m.rmse_mm);
        } else {
            println!("epoch {} mean_loss={:.6e}", e.epoch, e.mean_total_loss);
        }
    }
    println!(
        "trained {} steps over {} epochs; log at {}",
        report.steps.len(),
        report.epochs.len(),
        log_path.display()
    );
    Ok(())
}

fn predict_one(
    model: &DFuseNet<f32>,
    fill: &FillParams,
    rgb_path: &Path,
    sparse_path: &Path,
    output: &Path,
) -> Result<()> {
    let rgb = read_rgb8(rgb_path)?;
    let sparse = read_depth_png16(sparse_path)?.clamp_to_max_depth(model.config.max_depth)?;
    let dense = morph_fill(&sparse, fill)?;
    let norm = normalize_depth(&dense)?;
    let pred = model.predict(&[rgb], &[norm])?;
    write_depth_png16(&pred[0], output)?;
    Ok(())
}

pub fn run_predict(args: PredictArgs, file: &FileConfig) -> Result<()> {
    let fill = merge_fill(file, &args.fill)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let model = ckpt.build_model()?;

    match (&args.rgb, &args.sparse, &args.output, &args.manifest, &args.out_dir) {
        (Some(rgb), Some(sparse), Some(output), None, None) => {
            predict_one(&model, &fill, rgb, sparse, output)?;
            println!("wrote {}", output.display());
            Ok(())
        }
        (None, None, None, Some(manifest_path), Some(out_dir)) => {
            let manifest = load_manifest(manifest_path)?;
            fs::create_dir_all(out_dir)?;
            let jobs: Vec<(PathBuf, PathBuf, PathBuf)> = manifest
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let name = r
                        .rgb_path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("sample{i}"));
                    (r.rgb_path.clone(), r.sparse_depth_path.clone(), out_dir.join(format!("{name}_pred.png")))
                })
                .collect();
            // The tensor graph is single-threaded by design; every worker
            // gets its own model instance rebuilt from the checkpoint.
            let workers = rayon::current_num_threads().min(jobs.len()).max(1);
            let results: Vec<Result<()>> = std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for worker in 0..workers {
                    let ckpt = &ckpt;
                    let fill = &fill;
                    let jobs = &jobs;
                    handles.push(scope.spawn(move || -> Vec<Result<()>> {
                        let model = match ckpt.build_model() {
                            Ok(m) => m,
                            Err(e) => return vec![Err(e)],
                        };
                        jobs.iter()
                            .skip(worker)
                            .step_by(workers)
                            .map(|(rgb, sparse, out)| predict_one(&model, fill, rgb, sparse, out))
                            .collect()
                    }));
                }
                handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
            });
            for r in results {
                r?;
            }
            println!("wrote {} predictions to {}", jobs.len(), out_dir.display());
            Ok(())
        }
        _ => Err(Error::InvalidInput(
            "predict needs either --rgb/--sparse/--output or --manifest/--out-dir".into(),
        )),
    }
}

pub fn run_eval(args: EvalArgs) -> Result<()> {
    let mut names: Vec<String> = fs::read_dir(&args.pred_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().map(|x| x == "png").unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Validation(format!("no .png files in {}", args.pred_dir.display())));
    }

    if let Some(dir) = &args.dump_error_dir {
        fs::create_dir_all(dir)?;
    }
    let per_image: Vec<(String, MetricsReport)> = names
        .par_iter()
        .map(|name| -> Result<(String, MetricsReport)> {
            let pred = read_depth_png16(&args.pred_dir.join(name))?;
            let gt_path = args.gt_dir.join(name);
            if !gt_path.exists() {
                return Err(Error::Validation(format!(
                    "missing ground truth for {name} in {}",
                    args.gt_dir.display()
                )));
            }
            let gt = read_depth_png16(&gt_path)?.clamp_to_max_depth(args.max_depth_m)?;
            let report = compute_metrics(&pred, &gt)?;
            if let Some(dir) = &args.dump_error_dir {
                let values: Vec<f32> = pred
                    .values()
                    .iter()
                    .zip(gt.values())
                    .map(|(&p, &g)| if g == MISSING_DEPTH { MISSING_DEPTH } else { (p - g).abs() })
                    .collect();
                let err_map =
                    DepthMap::new(pred.width(), pred.height(), values, pred.max_depth())?;
                write_depth_png16(&err_map, &dir.join(name))?;
            }
            Ok((name.clone(), report))
        })
        .collect::<Result<Vec<_>>>()?;

    if args.per_image {
        for (name, r) in &per_image {
            println!("# {name}");
            println!("{}", r.to_kv_lines());
        }
    }
    let aggregate = aggregate_reports(&per_image.iter().map(|(_, r)| *r).collect::<Vec<_>>())?;
    println!("{}", aggregate.to_table());
    println!("{}", aggregate.to_kv_lines());
    Ok(())
}
