//! Per-transaction NLL and its analytic gradient for every family.
//!
//! All families share one fact: for logits `z` restricted to the offered
//! set, `d(-ln p_y)/dz = p - y`. For a Halo matrix this gives
//! `(p - y) a^T`, and the low-rank and mixture gradients follow by the
//! chain rule.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Transaction;
use crate::error::{ChoiceError, Result};
use crate::models::{
    log_sum_exp, ChoiceModel, DiagMode, HaloParams, LowRankHaloParams, MixtureMnlParams, MnlParams,
};

/// Reusable buffers for the per-transaction kernels.
#[derive(Default)]
pub(crate) struct Scratch {
    logits: Vec<f64>,
    probs: Vec<f64>,
    va: Vec<f64>,
    utd: Vec<f64>,
    comp_logp: Vec<f64>,
}

/// Softmax over `logits` in place; returns the log-normalizer.
fn softmax_in_place(logits: &[f64], probs: &mut Vec<f64>) -> f64 {
    let lse = log_sum_exp(logits);
    probs.clear();
    probs.extend(logits.iter().map(|z| (z - lse).exp()));
    lse
}

fn position_of_choice(t: &Transaction) -> usize {
    t.assortment()
        .offered()
        .binary_search(&t.choice())
        .expect("choice is offered")
}

/// `-ln p(a)_y` for one transaction.
pub(crate) fn transaction_nll(model: &ChoiceModel, t: &Transaction, s: &mut Scratch) -> f64 {
    if t.assortment().size() == 1 {
        return 0.0;
    }
    let y = position_of_choice(t);
    let offered = t.assortment().offered();
    match model {
        ChoiceModel::Mnl(p) => {
            s.logits.clear();
            s.logits.extend(offered.iter().map(|&i| p.alpha()[i]));
            log_sum_exp(&s.logits) - s.logits[y]
        }
        ChoiceModel::Halo(p) => {
            halo_offered_logits(p.h(), offered, &mut s.logits);
            log_sum_exp(&s.logits) - s.logits[y]
        }
        ChoiceModel::LowRank(p) => {
            p.offered_logits_into(t.assortment(), &mut s.va, &mut s.logits);
            log_sum_exp(&s.logits) - s.logits[y]
        }
        ChoiceModel::Mixture(p) => -mixture_log_prob(p, t, s),
    }
}

fn halo_offered_logits(h: &DMatrix<f64>, offered: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &i in offered {
        out.push(offered.iter().map(|&k| h[(i, k)]).sum());
    }
}

/// `ln sum_k pi_k p_k(y)`; leaves per-component `ln pi_k + ln p_k(y)` in
/// `s.comp_logp`.
fn mixture_log_prob(p: &MixtureMnlParams, t: &Transaction, s: &mut Scratch) -> f64 {
    let y = position_of_choice(t);
    let offered = t.assortment().offered();
    let w_lse = log_sum_exp(p.weights_logits().as_slice());
    s.comp_logp.clear();
    for (w, c) in p.weights_logits().iter().zip(p.components()) {
        s.logits.clear();
        s.logits.extend(offered.iter().map(|&i| c.alpha()[i]));
        let lse = log_sum_exp(&s.logits);
        s.comp_logp.push((w - w_lse) + (s.logits[y] - lse));
    }
    log_sum_exp(&s.comp_logp)
}

/// Number of scalar parameters in the flat layout of `model`.
pub fn num_params(model: &ChoiceModel) -> usize {
    match model {
        ChoiceModel::Mnl(p) => p.num_products(),
        ChoiceModel::Halo(p) => p.num_products() * p.num_products(),
        ChoiceModel::LowRank(p) => p.num_products() * (1 + 2 * p.rank()),
        ChoiceModel::Mixture(p) => p.num_components() * (1 + p.num_products()),
    }
}

/// Adds `scale * grad(-ln p(a)_y)` into `out` (flat layout, see
/// [`crate::estimation::flatten_params`]) and returns `-ln p(a)_y`.
pub(crate) fn accumulate_nll_grad(
    model: &ChoiceModel,
    t: &Transaction,
    scale: f64,
    out: &mut [f64],
    s: &mut Scratch,
) -> f64 {
    let y = position_of_choice(t);
    let offered = t.assortment().offered();
    match model {
        ChoiceModel::Mnl(p) => {
            s.logits.clear();
            s.logits.extend(offered.iter().map(|&i| p.alpha()[i]));
            let lse = softmax_in_place(&s.logits, &mut s.probs);
            s.probs[y] -= 1.0;
            for (&i, d) in offered.iter().zip(&s.probs) {
                out[i] += scale * d;
            }
            lse - s.logits[y]
        }
        ChoiceModel::Halo(p) => {
            let m = p.num_products();
            halo_offered_logits(p.h(), offered, &mut s.logits);
            let lse = softmax_in_place(&s.logits, &mut s.probs);
            s.probs[y] -= 1.0;
            for (&i, d) in offered.iter().zip(&s.probs) {
                let row = &mut out[i * m..(i + 1) * m];
                for &j in offered {
                    row[j] += scale * d;
                }
            }
            lse - s.logits[y]
        }
        ChoiceModel::LowRank(p) => {
            let m = p.num_products();
            let r = p.rank();
            p.offered_logits_into(t.assortment(), &mut s.va, &mut s.logits);
            let lse = softmax_in_place(&s.logits, &mut s.probs);
            s.probs[y] -= 1.0;
            let (u, v) = (p.u(), p.v());
            // U^T d over offered rows.
            s.utd.clear();
            s.utd.resize(r, 0.0);
            for (&i, d) in offered.iter().zip(&s.probs) {
                for k in 0..r {
                    s.utd[k] += u[(i, k)] * d;
                }
            }
            let (alpha_g, rest) = out.split_at_mut(m);
            let (u_g, v_g) = rest.split_at_mut(m * r);
            let replace = p.diag_mode() == DiagMode::Replace;
            for (&i, &d) in offered.iter().zip(&s.probs) {
                alpha_g[i] += scale * d;
                for k in 0..r {
                    // Replace mode drops the diagonal term (i, i) of G.
                    let vsum = if replace {
                        s.va[k] - v[(i, k)]
                    } else {
                        s.va[k]
                    };
                    u_g[i * r + k] += scale * d * vsum;
                    let usum = if replace {
                        s.utd[k] - d * u[(i, k)]
                    } else {
                        s.utd[k]
                    };
                    v_g[i * r + k] += scale * usum;
                }
            }
            lse - s.logits[y]
        }
        ChoiceModel::Mixture(p) => {
            let k_count = p.num_components();
            let m = p.num_products();
            let log_prob = mixture_log_prob(p, t, s);
            let weights = p.weights();
            let (w_g, alpha_g) = out.split_at_mut(k_count);
            for (k, c) in p.components().iter().enumerate() {
                let gamma = (s.comp_logp[k] - log_prob).exp();
                w_g[k] += scale * (weights[k] - gamma);
                s.logits.clear();
                s.logits.extend(offered.iter().map(|&i| c.alpha()[i]));
                softmax_in_place(&s.logits, &mut s.probs);
                s.probs[y] -= 1.0;
                let block = &mut alpha_g[k * m..(k + 1) * m];
                for (&i, d) in offered.iter().zip(&s.probs) {
                    block[i] += scale * gamma * d;
                }
            }
            -log_prob
        }
    }
}

fn check_products(m: usize, t: &Transaction) -> Result<()> {
    if t.assortment().num_products() != m {
        return Err(ChoiceError::shape(
            "transaction",
            m,
            t.assortment().num_products(),
        ));
    }
    Ok(())
}

fn flat_grad(model: &ChoiceModel, t: &Transaction) -> Vec<f64> {
    let mut out = vec![0.0; num_params(model)];
    accumulate_nll_grad(model, t, 1.0, &mut out, &mut Scratch::default());
    out
}

/// Gradient of the per-transaction NLL of an MNL: `(p - y) ∘ a`.
pub fn grad_mnl(params: &MnlParams, t: &Transaction) -> Result<DVector<f64>> {
    check_products(params.num_products(), t)?;
    Ok(DVector::from_vec(flat_grad(
        &ChoiceModel::Mnl(params.clone()),
        t,
    )))
}

/// Gradient of the per-transaction NLL with respect to `H`: `(p - y) a^T`.
pub fn grad_halo(params: &HaloParams, t: &Transaction) -> Result<DMatrix<f64>> {
    let m = params.num_products();
    check_products(m, t)?;
    let g = flat_grad(&ChoiceModel::Halo(params.clone()), t);
    Ok(DMatrix::from_row_slice(m, m, &g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowRankGradient {
    pub dalpha: DVector<f64>,
    pub du: DMatrix<f64>,
    pub dv: DMatrix<f64>,
}

/// Gradient of the per-transaction NLL of a low-rank model. With
/// `G = (p - y) a^T`: `dalpha = diag(G)`, `dU = G V`, `dV = G^T U` in
/// additive mode; replace mode zeroes the diagonal of `G` before the factor
/// gradients.
pub fn grad_lowrank(params: &LowRankHaloParams, t: &Transaction) -> Result<LowRankGradient> {
    let m = params.num_products();
    let r = params.rank();
    check_products(m, t)?;
    let g = flat_grad(&ChoiceModel::LowRank(params.clone()), t);
    Ok(LowRankGradient {
        dalpha: DVector::from_column_slice(&g[..m]),
        du: DMatrix::from_row_slice(m, r, &g[m..m + m * r]),
        dv: DMatrix::from_row_slice(m, r, &g[m + m * r..]),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureGradient {
    pub dw: DVector<f64>,
    pub dalphas: Vec<DVector<f64>>,
}

/// Gradient of the per-transaction NLL of a mixture, via posterior
/// responsibilities `gamma_k = pi_k p_k(y) / sum_j pi_j p_j(y)`:
/// `dalpha_k = gamma_k (p_k - y) ∘ a` and `dw_k = pi_k - gamma_k`.
pub fn grad_mixture(params: &MixtureMnlParams, t: &Transaction) -> Result<MixtureGradient> {
    let m = params.num_products();
    let k = params.num_components();
    check_products(m, t)?;
    let g = flat_grad(&ChoiceModel::Mixture(params.clone()), t);
    Ok(MixtureGradient {
        dw: DVector::from_column_slice(&g[..k]),
        dalphas: g[k..].chunks(m).map(DVector::from_column_slice).collect(),
    })
}
