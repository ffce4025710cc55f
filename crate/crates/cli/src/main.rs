//! `dfuse`: batch command-line surface over the depth-completion pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure.

mod config_file;
mod ops;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dfuse", version, about = "Sparse-to-dense depth completion toolkit")]
struct Cli {
    /// Worker threads for per-file parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// TOML configuration file; explicit flags override file values.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Densify a sparse depth PNG with morphological filling.
    Fill(FillArgs),
    /// Run semi-global matching on a rectified pair and write depth + mask.
    Sgm(SgmArgs),
    /// Randomly subsample a depth PNG's measurements.
    Sample(SampleArgs),
    /// Train the fusion network over a dataset manifest.
    Train(TrainArgs),
    /// Run a trained checkpoint on inputs and write predicted depth.
    Predict(PredictArgs),
    /// Compare predicted depth maps against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct FillOpts {
    /// Initial dilation kernel shape.
    #[arg(long, value_parser = ["diamond", "full"])]
    dilate_shape: Option<String>,
    /// Initial dilation kernel size in pixels (odd, >= 3).
    #[arg(long = "dilate-size-px")]
    dilate_size: Option<usize>,
    /// Morphological closing kernel size in pixels (odd, >= 3).
    #[arg(long = "closing-size-px")]
    closing_size: Option<usize>,
    /// Large-hole dilation kernel size in pixels (odd, >= 3).
    #[arg(long = "large-size-px")]
    large_size: Option<usize>,
    /// Cap on large-hole dilation iterations.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Gaussian blur kernel size in pixels (odd, >= 3).
    #[arg(long = "blur-size-px")]
    blur_size: Option<usize>,
    /// Gaussian blur standard deviation in pixels.
    #[arg(long)]
    blur_sigma_px: Option<f32>,
}

#[derive(Args)]
struct FillArgs {
    /// Input sparse depth PNG (16-bit, value/256 meters, 0 = missing).
    #[arg(long)]
    input: std::path::PathBuf,
    /// Output dense depth PNG.
    #[arg(long)]
    output: std::path::PathBuf,
    #[command(flatten)]
    fill: FillOpts,
}

#[derive(Args)]
struct SgmOpts {
    /// Census window size in pixels (odd, 3..=7).
    #[arg(long = "census-window-px")]
    census_window: Option<usize>,
    /// Number of candidate disparities.
    #[arg(long)]
    dmax: Option<usize>,
    /// Small disparity-change penalty (cost units).
    #[arg(long)]
    p1: Option<u32>,
    /// Large disparity-change penalty (cost units).
    #[arg(long)]
    p2: Option<u32>,
    /// Left-right consistency tolerance in pixels.
    #[arg(long)]
    lr_tolerance_px: Option<f32>,
}

#[derive(Args)]
struct SgmArgs {
    /// Left (reference) rectified color image.
    #[arg(long)]
    left: std::path::PathBuf,
    /// Right rectified color image.
    #[arg(long)]
    right: std::path::PathBuf,
    /// Focal length in pixels.
    #[arg(long)]
    fx_px: f32,
    /// Stereo baseline in meters.
    #[arg(long)]
    baseline_m: f32,
    /// Depth bound in meters; farther estimates become missing.
    #[arg(long, default_value_t = 85.0)]
    max_depth_m: f32,
    /// Output depth PNG path.
    #[arg(long)]
    out_depth: std::path::PathBuf,
    /// Output validity-mask PNG path.
    #[arg(long)]
    out_mask: std::path::PathBuf,
    #[command(flatten)]
    sgm: SgmOpts,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("howmany").required(true).args(["samples", "fraction"])))]
struct SampleArgs {
    /// Input depth PNG.
    #[arg(long)]
    input: std::path::PathBuf,
    /// Output subsampled depth PNG.
    #[arg(long)]
    output: std::path::PathBuf,
    /// Keep exactly this many measurements.
    #[arg(long)]
    samples: Option<usize>,
    /// Keep this fraction of the measurements (0..=1).
    #[arg(long)]
    fraction: Option<f64>,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest path.
    #[arg(long)]
    manifest: std::path::PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    out_dir: std::path::PathBuf,
    /// Network preset.
    #[arg(long, value_parser = ["tiny", "standard"], default_value = "standard")]
    preset: String,
    /// Seed for parameter initialization.
    #[arg(long, default_value_t = 0)]
    net_seed: u64,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// L2 weight decay coefficient.
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Multiplicative learning-rate decay factor.
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    /// Epochs between learning-rate decays.
    #[arg(long)]
    lr_decay_every: Option<usize>,
    /// Data-order / crop seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Primary-loss weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Stereo-loss weight (enables SGM supervision when > 0).
    #[arg(long)]
    beta: Option<f64>,
    /// Smoothness-loss weight.
    #[arg(long)]
    gamma: Option<f64>,
    /// Primary loss norm.
    #[arg(long, value_parser = ["l1", "l2"])]
    primary_norm: Option<String>,
    /// Training crop height in pixels.
    #[arg(long = "crop-h-px")]
    crop_h: Option<usize>,
    /// Training crop width in pixels.
    #[arg(long = "crop-w-px")]
    crop_w: Option<usize>,
    /// Fraction of records held out for per-epoch evaluation.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Focal length in pixels (stereo supervision).
    #[arg(long)]
    fx_px: Option<f32>,
    /// Stereo baseline in meters (stereo supervision).
    #[arg(long)]
    baseline_m: Option<f32>,
    /// Directory for cached SGM targets.
    #[arg(long)]
    sgm_cache_dir: Option<std::path::PathBuf>,
    /// Resume from this checkpoint.
    #[arg(long)]
    resume: Option<std::path::PathBuf>,
    #[command(flatten)]
    fill: FillOpts,
    #[command(flatten)]
    sgm: SgmOpts,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["rgb", "manifest"])))]
struct PredictArgs {
    /// Trained checkpoint path.
    #[arg(long)]
    checkpoint: std::path::PathBuf,
    /// Input color image (single-sample mode).
    #[arg(long, requires_all = ["sparse", "output"])]
    rgb: Option<std::path::PathBuf>,
    /// Input sparse depth PNG (single-sample mode).
    #[arg(long)]
    sparse: Option<std::path::PathBuf>,
    /// Output depth PNG (single-sample mode).
    #[arg(long)]
    output: Option<std::path::PathBuf>,
    /// Dataset manifest (batch mode).
    #[arg(long, requires = "out_dir")]
    manifest: Option<std::path::PathBuf>,
    /// Output directory (batch mode).
    #[arg(long)]
    out_dir: Option<std::path::PathBuf>,
    #[command(flatten)]
    fill: FillOpts,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted depth PNGs.
    #[arg(long)]
    pred_dir: std::path::PathBuf,
    /// Directory of ground-truth depth PNGs with matching file names.
    #[arg(long)]
    gt_dir: std::path::PathBuf,
    /// Depth bound in meters applied to ground truth.
    #[arg(long, default_value_t = 85.0)]
    max_depth_m: f32,
    /// Also print one metrics block per image.
    #[arg(long, default_value_t = false)]
    per_image: bool,
    /// Write absolute-error maps (as depth PNGs) into this directory.
    #[arg(long)]
    dump_error_dir: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are success, not usage errors.
            if matches!(e.kind(), ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: failed to set --jobs: {e}");
            return ExitCode::from(1);
        }
    }

    let file_config = match config_file::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::Fill(args) => ops::run_fill(args, &file_config),
        Command::Sgm(args) => ops::run_sgm(args, &file_config),
        Command::Sample(args) => ops::run_sample(args),
        Command::Train(args) => ops::run_train(args, &file_config),
        Command::Predict(args) => ops::run_predict(args, &file_config),
        Command::Eval(args) => ops::run_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ops::exit_code(&e))
        }
    }
}
