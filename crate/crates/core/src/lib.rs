//! Discrete-choice models with halo effects.
//!
//! Four model families share one forward interface: multinomial logit
//! (MNL), a finite mixture of MNLs, the Halo MNL whose logits are `H a` for
//! a dense `m x m` matrix, and the low-rank Halo MNL with
//! `H = diag(alpha) + U V^T`, which is also computable as a single
//! self-attention head ([`attention`]). Models are fit by regularized
//! maximum likelihood ([`estimation`]) and evaluated by cross-entropy,
//! KL-to-truth and parameter recovery ([`evaluation`]). [`synthetic`]
//! draws ground truths and transactions; [`oracle`] holds brute-force
//! reference implementations used by the tests.

pub mod attention;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod synthetic;

pub use attention::attention_forward;
pub use dataset::{
    load_dataset, save_dataset, split_dataset, Assortment, ChoiceDataset, ChoiceProbabilities,
    Transaction,
};
pub use error::{ChoiceError, Result};
pub use estimation::{fit, nll, objective, FitConfig, FitResult, Optimizer, PenaltySign};
pub use evaluation::{cross_entropy, BenchmarkSummary, EvalReport, RelativeLossMode};
pub use models::{
    halo_probs, lowrank_materialize, lowrank_probs, mixture_probs, mnl_probs, ChoiceModel,
    DiagMode, Family, HaloParams, LowRankHaloParams, MixtureMnlParams, MnlParams,
};
pub use synthetic::SyntheticSpec;

pub use nalgebra::{DMatrix, DVector};
