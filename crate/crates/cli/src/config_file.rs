//! Optional TOML configuration: one file carries every module's parameter
//! section; explicit command-line flags take precedence over file values.

use std::path::Path;

use dfuse_core::fill::FillParams;
use dfuse_core::loss::LossWeights;
use dfuse_core::stereo::SgmParams;
use dfuse_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub fill: Option<FillParams>,
    #[serde(default)]
    pub sgm: Option<SgmParams>,
    #[serde(default)]
    pub loss: Option<LossWeights>,
    #[serde(default)]
    pub train: Option<TrainSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr_decay_factor: Option<f64>,
    pub lr_decay_every_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub val_fraction: Option<f64>,
    pub crop_h: Option<usize>,
    pub crop_w: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}
