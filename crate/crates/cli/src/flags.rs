use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use halo_choice::{DiagMode, FitConfig, Optimizer, PenaltySign};

use crate::error::CliError;

/// Estimator flags shared by `fit`, `benchmark` and `scaling`. Values given
/// here override the `--config` file, which overrides the defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct FitFlags {
    /// TOML file whose keys are `FitConfig` field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub mixture_k: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epochs without validation improvement before stopping (0 = never).
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// additive | replace
    #[arg(long)]
    pub diag_mode: Option<DiagMode>,
    /// penalize | reward
    #[arg(long)]
    pub penalty_sign: Option<PenaltySign>,
    /// adam | gd
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
}

impl FitFlags {
    pub fn resolve(&self) -> Result<FitConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => FitConfig::load(path)?,
            None => FitConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field {
                    cfg.$field = v;
                })*
            };
        }
        apply!(
            lambda,
            rank,
            mixture_k,
            step_size,
            epochs,
            batch_size,
            patience,
            val_fraction,
            init_scale,
            diag_mode,
            penalty_sign,
            optimizer
        );
        Ok(cfg)
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
