//! Regularized maximum-likelihood estimation.
//!
//! The objective minimized is the mean negative log-likelihood per
//! transaction plus `lambda` times the squared norm of the penalized
//! parameters (`alpha`, `U`, `V` for low-rank; `H` for Halo; component
//! utilities for mixtures, whose weights are left unpenalized).

mod config;
mod fit;
mod gradients;

pub use config::{FitConfig, Optimizer, PenaltySign};
pub use fit::{fit, write_trace_csv, FitResult, TraceRow};
pub use gradients::{
    grad_halo, grad_lowrank, grad_mixture, grad_mnl, num_params, LowRankGradient, MixtureGradient,
};

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ChoiceDataset, Transaction};
use crate::error::{ChoiceError, Result};
use crate::models::{ChoiceModel, HaloParams, LowRankHaloParams, MixtureMnlParams, MnlParams};
use gradients::{accumulate_nll_grad, transaction_nll, Scratch};

fn check_dataset(model: &ChoiceModel, dataset: &ChoiceDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(ChoiceError::InvalidDataset("empty dataset".into()));
    }
    if dataset.num_products() != model.num_products() {
        return Err(ChoiceError::shape(
            "dataset products",
            model.num_products(),
            dataset.num_products(),
        ));
    }
    Ok(())
}

/// Mean negative log-likelihood per transaction, in nats.
pub fn nll(model: &ChoiceModel, dataset: &ChoiceDataset) -> Result<f64> {
    check_dataset(model, dataset)?;
    Ok(mean_nll(model, dataset.transactions()))
}

pub(crate) fn mean_nll(model: &ChoiceModel, transactions: &[Transaction]) -> f64 {
    let mut scratch = Scratch::default();
    let total: f64 = transactions
        .iter()
        .map(|t| transaction_nll(model, t, &mut scratch))
        .sum();
    total / transactions.len() as f64
}

/// Squared norm of the penalized parameters.
pub fn penalty(model: &ChoiceModel) -> f64 {
    let flat = flatten_params(model);
    let skip = unpenalized_prefix(model);
    flat[skip..].iter().map(|x| x * x).sum()
}

/// Mixture weight logits lead the flat layout and are not penalized.
fn unpenalized_prefix(model: &ChoiceModel) -> usize {
    match model {
        ChoiceModel::Mixture(p) => p.num_components(),
        _ => 0,
    }
}

/// `nll + lambda * penalty`.
pub fn objective(model: &ChoiceModel, dataset: &ChoiceDataset, lambda: f64) -> Result<f64> {
    objective_with_sign(model, dataset, lambda, PenaltySign::Penalize)
}

pub fn objective_with_sign(
    model: &ChoiceModel,
    dataset: &ChoiceDataset,
    lambda: f64,
    sign: PenaltySign,
) -> Result<f64> {
    if lambda < 0.0 {
        return Err(ChoiceError::InvalidConfig(
            "lambda must be nonnegative".into(),
        ));
    }
    let base = nll(model, dataset)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    Ok(base + sign.factor() * lambda * penalty(model))
}

/// Objective value and its gradient (flat layout) over `transactions`: the
/// mean of the per-transaction gradients plus the full penalty gradient.
pub fn objective_gradient(
    model: &ChoiceModel,
    transactions: &[Transaction],
    lambda: f64,
    sign: PenaltySign,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; num_params(model)];
    let value = objective_gradient_into(model, transactions.iter(), lambda, sign, &mut grad);
    (value, grad)
}

pub(crate) fn objective_gradient_into<'a>(
    model: &ChoiceModel,
    transactions: impl ExactSizeIterator<Item = &'a Transaction>,
    lambda: f64,
    sign: PenaltySign,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut scratch = Scratch::default();
    let scale = 1.0 / transactions.len() as f64;
    let mut total = 0.0;
    for t in transactions {
        total += accumulate_nll_grad(model, t, scale, grad, &mut scratch);
    }
    let mut value = total * scale;
    if lambda != 0.0 {
        let flat = flatten_params(model);
        let skip = unpenalized_prefix(model);
        let factor = sign.factor() * lambda;
        let mut pen = 0.0;
        for (g, x) in grad[skip..].iter_mut().zip(&flat[skip..]) {
            *g += 2.0 * factor * x;
            pen += x * x;
        }
        value += factor * pen;
    }
    value
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// Flat parameter vector used by the optimizer and by finite differences.
///
/// Layouts: MNL `alpha`; Halo `H` row-major; low-rank `alpha`, then `U`
/// row-major, then `V` row-major; mixture `w`, then each component's
/// `alpha` in order.
pub fn flatten_params(model: &ChoiceModel) -> Vec<f64> {
    match model {
        ChoiceModel::Mnl(p) => p.alpha().as_slice().to_vec(),
        ChoiceModel::Halo(p) => row_major(p.h()).collect(),
        ChoiceModel::LowRank(p) => p
            .alpha()
            .iter()
            .copied()
            .chain(row_major(p.u()))
            .chain(row_major(p.v()))
            .collect(),
        ChoiceModel::Mixture(p) => p
            .weights_logits()
            .iter()
            .copied()
            .chain(
                p.components()
                    .iter()
                    .flat_map(|c| c.alpha().iter().copied()),
            )
            .collect(),
    }
}

/// Inverse of [`flatten_params`], using `template` for shapes and modes.
pub fn unflatten_params(template: &ChoiceModel, flat: &[f64]) -> Result<ChoiceModel> {
    let expected = num_params(template);
    if flat.len() != expected {
        return Err(ChoiceError::shape("flat parameters", expected, flat.len()));
    }
    let m = template.num_products();
    Ok(match template {
        ChoiceModel::Mnl(_) => MnlParams::from_slice(flat)?.into(),
        ChoiceModel::Halo(_) => HaloParams::new(DMatrix::from_row_slice(m, m, flat))?.into(),
        ChoiceModel::LowRank(p) => {
            let r = p.rank();
            LowRankHaloParams::new(
                DVector::from_column_slice(&flat[..m]),
                DMatrix::from_row_slice(m, r, &flat[m..m + m * r]),
                DMatrix::from_row_slice(m, r, &flat[m + m * r..]),
                p.diag_mode(),
            )?
            .into()
        }
        ChoiceModel::Mixture(p) => {
            let k = p.num_components();
            let components = flat[k..]
                .chunks(m)
                .map(MnlParams::from_slice)
                .collect::<Result<Vec<_>>>()?;
            MixtureMnlParams::new(DVector::from_column_slice(&flat[..k]), components)?.into()
        }
    })
}
