use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ChoiceError, Result};
use crate::models::{DiagMode, Family};

/// Direction of the squared-norm term in the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltySign {
    /// Minimize `nll + lambda * ||theta||^2`.
    #[default]
    Penalize,
    /// Minimize `nll - lambda * ||theta||^2`. Unbounded below for
    /// `lambda > 0`; kept only for comparison runs.
    Reward,
}

impl PenaltySign {
    pub fn factor(self) -> f64 {
        match self {
            PenaltySign::Penalize => 1.0,
            PenaltySign::Reward => -1.0,
        }
    }
}

impl std::str::FromStr for PenaltySign {
    type Err = ChoiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalize" => Ok(Self::Penalize),
            "reward" => Ok(Self::Reward),
            other => Err(ChoiceError::InvalidConfig(format!(
                "unknown penalty sign {other:?}"
            ))),
        }
    }
}

/// Update rule applied to each mini-batch gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Fixed-step gradient descent; `beta1`, `beta2` and `eps` are ignored.
    Gd,
}

impl std::str::FromStr for Optimizer {
    type Err = ChoiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "gd" => Ok(Self::Gd),
            other => Err(ChoiceError::InvalidConfig(format!(
                "unknown optimizer {other:?}"
            ))),
        }
    }
}

/// Estimator hyperparameters. Serialized as a flat TOML table whose keys
/// are exactly the field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lambda: f64,
    /// Low-rank models only.
    pub rank: usize,
    /// Mixture models only.
    pub mixture_k: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub penalty_sign: PenaltySign,
    pub diag_mode: DiagMode,
    pub optimizer: Optimizer,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            rank: 2,
            mixture_k: 2,
            step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 100,
            batch_size: 256,
            seed: 0,
            init_scale: 0.01,
            patience: 10,
            val_fraction: 0.1,
            penalty_sign: PenaltySign::Penalize,
            diag_mode: DiagMode::Additive,
            optimizer: Optimizer::Adam,
        }
    }
}

impl FitConfig {
    /// Checks the config against a model family over `m` products.
    pub fn validate(&self, family: Family, m: usize) -> Result<()> {
        let bad = |msg: String| Err(ChoiceError::InvalidConfig(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda {} must be a nonnegative number",
                self.lambda
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size {} must be positive", self.step_size));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("eps must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {} not in [0, 1)", self.val_fraction));
        }
        match family {
            Family::LowRank if self.rank == 0 => bad("rank must be >= 1".into()),
            Family::LowRank if self.rank > m => bad(format!("rank > m ({} > {m})", self.rank)),
            Family::Mixture if self.mixture_k < 1 => bad("mixture_k must be >= 1".into()),
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("fit config is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ChoiceError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ChoiceError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| ChoiceError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_uses_field_names() {
        let cfg = FitConfig {
            lambda: 0.123456789012345,
            rank: 3,
            seed: 42,
            penalty_sign: PenaltySign::Reward,
            diag_mode: DiagMode::Replace,
            ..FitConfig::default()
        };
        let text = cfg.to_toml();
        for key in [
            "lambda",
            "rank",
            "mixture_k",
            "step_size",
            "beta1",
            "beta2",
            "eps",
            "epochs",
            "batch_size",
            "seed",
            "init_scale",
            "patience",
            "val_fraction",
            "penalty_sign",
            "diag_mode",
            "optimizer",
        ] {
            assert!(
                text.contains(&format!("{key} = ")),
                "missing {key} in {text}"
            );
        }
        assert_eq!(FitConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults_and_rejects_unknown() {
        let cfg = FitConfig::from_toml("lambda = 0.5\nepochs = 7\n").unwrap();
        assert_eq!(cfg.lambda, 0.5);
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.batch_size, 256);
        assert!(FitConfig::from_toml("learning_rate = 0.1\n").is_err());
    }

    #[test]
    fn enum_names_parse() {
        assert_eq!(
            "reward".parse::<PenaltySign>().unwrap(),
            PenaltySign::Reward
        );
        assert_eq!("gd".parse::<Optimizer>().unwrap(), Optimizer::Gd);
        assert!("sgd".parse::<Optimizer>().is_err());
        let cfg = FitConfig::from_toml("optimizer = \"gd\"\n").unwrap();
        assert_eq!(cfg.optimizer, Optimizer::Gd);
    }

    #[test]
    fn validation_errors() {
        let d = FitConfig::default();
        assert!(d.validate(Family::LowRank, 5).is_ok());
        let e = FitConfig {
            rank: 50,
            ..d.clone()
        }
        .validate(Family::LowRank, 20)
        .unwrap_err();
        assert!(e.to_string().contains("rank > m"), "{e}");
        assert!(FitConfig {
            rank: 50,
            ..d.clone()
        }
        .validate(Family::Halo, 20)
        .is_ok());
        assert!(FitConfig {
            mixture_k: 0,
            ..d.clone()
        }
        .validate(Family::Mixture, 3)
        .is_err());
        assert!(FitConfig {
            lambda: -1.0,
            ..d.clone()
        }
        .validate(Family::Mnl, 3)
        .is_err());
        assert!(FitConfig {
            batch_size: 0,
            ..d.clone()
        }
        .validate(Family::Mnl, 3)
        .is_err());
        assert!(FitConfig {
            val_fraction: 1.0,
            ..d
        }
        .validate(Family::Mnl, 3)
        .is_err());
    }
}
