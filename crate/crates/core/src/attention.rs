//! The low-rank Halo MNL written as a single self-attention head.
//!
//! Products are tokens. Queries are `U`, keys are `sqrt(r) V`, values are the
//! identity, and the scaled scores `Q K^T / sqrt(r)` reproduce `U V^T`. The
//! per-product utilities `alpha` enter on the diagonal, and the output layer
//! is a softmax over the offered products.

use nalgebra::DMatrix;

use crate::dataset::{Assortment, ChoiceProbabilities};
use crate::error::{ChoiceError, Result};
use crate::models::{masked_softmax, DiagMode, LowRankHaloParams};

/// Attention scores `Q K^T / sqrt(d_k)` with `Q = U`, `K = sqrt(r) V`.
pub fn attention_scores(params: &LowRankHaloParams) -> DMatrix<f64> {
    let d_k = params.rank() as f64;
    let queries = params.u();
    let keys = params.v() * d_k.sqrt();
    (queries * keys.transpose()) / d_k.sqrt()
}

/// Row-wise softmax of `scores` over the offered columns; other columns
/// become 0.
fn row_softmax_offered(scores: &mut DMatrix<f64>, assortment: &Assortment) {
    let offered = assortment.offered();
    for i in 0..scores.nrows() {
        let max = offered
            .iter()
            .map(|&j| scores[(i, j)])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in 0..scores.ncols() {
            if assortment.contains(j) {
                let e = (scores[(i, j)] - max).exp();
                scores[(i, j)] = e;
                total += e;
            } else {
                scores[(i, j)] = 0.0;
            }
        }
        for &j in offered {
            scores[(i, j)] /= total;
        }
    }
}

/// Choice probabilities computed through the attention head.
///
/// With `normalize = false` this is the same choice function as
/// [`crate::models::lowrank_probs`]. With `normalize = true` the scores are
/// softmaxed row-wise over the offered products before the diagonal is
/// merged.
pub fn attention_forward(
    params: &LowRankHaloParams,
    assortment: &Assortment,
    normalize: bool,
) -> Result<ChoiceProbabilities> {
    let m = params.num_products();
    if assortment.num_products() != m {
        return Err(ChoiceError::shape(
            "assortment",
            m,
            assortment.num_products(),
        ));
    }
    let mut attn = attention_scores(params);
    if normalize {
        row_softmax_offered(&mut attn, assortment);
    }
    // Values are the identity, so attn * Y = attn.
    let alpha = params.alpha();
    for i in 0..m {
        match params.diag_mode() {
            DiagMode::Additive => attn[(i, i)] += alpha[i],
            DiagMode::Replace => attn[(i, i)] = alpha[i],
        }
    }
    let mut logits = vec![0.0; m];
    for &j in assortment.offered() {
        for (i, logit) in logits.iter_mut().enumerate() {
            *logit += attn[(i, j)];
        }
    }
    Ok(masked_softmax(&logits, assortment))
}
