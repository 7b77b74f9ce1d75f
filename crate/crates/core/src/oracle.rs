//! Brute-force reference implementations for testing.
//!
//! Nothing here shares code with the production paths in `models` or
//! `estimation`: probabilities are computed with plain exponentials and no
//! max-subtraction, gradients by central differences, and the two-product
//! MLE by grid search.

use nalgebra::DMatrix;

use crate::dataset::{Assortment, ChoiceDataset, ChoiceProbabilities};
use crate::error::{ChoiceError, Result};
use crate::models::MnlParams;

/// Largest logit magnitude the unstabilized oracle accepts.
pub const ORACLE_MAX_LOGIT: f64 = 30.0;
pub const ORACLE_MAX_PRODUCTS: usize = 12;

/// Step and tolerance for finite-difference checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteDiffSpec {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for FiniteDiffSpec {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Coordinates with magnitude at or below this are compared absolutely.
pub const FD_RELATIVE_FLOOR: f64 = 1e-6;
pub const FD_ABSOLUTE_TOL: f64 = 1e-8;

/// Direct evaluation of `p(a)_i = a_i exp((Ha)_i) / sum_j a_j exp((Ha)_j)`.
pub fn oracle_probs(h: &DMatrix<f64>, assortment: &Assortment) -> Result<ChoiceProbabilities> {
    let m = assortment.num_products();
    if m > ORACLE_MAX_PRODUCTS {
        return Err(ChoiceError::InvalidParams(format!(
            "oracle supports at most {ORACLE_MAX_PRODUCTS} products"
        )));
    }
    if h.nrows() != m || h.ncols() != m {
        return Err(ChoiceError::shape("oracle matrix", m, h.nrows()));
    }
    let bits = assortment.bits();
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut logit = 0.0;
        for k in 0..m {
            if bits[k] {
                logit += h[(i, k)];
            }
        }
        if logit.abs() > ORACLE_MAX_LOGIT {
            return Err(ChoiceError::NonFinite(format!(
                "oracle logit {logit} exceeds {ORACLE_MAX_LOGIT}"
            )));
        }
        if bits[i] {
            weights[i] = logit.exp();
        }
    }
    let mut denom = 0.0;
    for w in &weights {
        denom += w;
    }
    Ok(ChoiceProbabilities::from_vec(
        weights.into_iter().map(|w| w / denom).collect(),
    ))
}

/// Mean of `-ln p(a_i)_{y_i}` using [`oracle_probs`] per transaction.
pub fn oracle_nll(h: &DMatrix<f64>, dataset: &ChoiceDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(ChoiceError::InvalidDataset("empty dataset".into()));
    }
    let mut total = 0.0;
    for t in dataset.transactions() {
        let p = oracle_probs(h, t.assortment())?;
        total += -p.get(t.choice()).ln();
    }
    Ok(total / dataset.len() as f64)
}

/// Central-difference gradient of `objective` at `point`.
pub fn fd_gradient<F>(objective: F, point: &[f64], spec: &FiniteDiffSpec) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if spec.step <= 0.0 {
        return Err(ChoiceError::InvalidConfig(
            "finite-difference step must be positive".into(),
        ));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + spec.step;
        let plus = objective(&x);
        x[i] = orig - spec.step;
        let minus = objective(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(ChoiceError::NonFinite(format!(
                "objective not finite around coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * spec.step));
    }
    Ok(grad)
}

/// Largest comparison error between an analytic gradient and a numeric one.
/// Coordinates whose reference magnitude exceeds [`FD_RELATIVE_FLOOR`] are
/// compared relatively, the rest absolutely. Returns
/// `(worst_relative, worst_absolute)`.
pub fn gradient_discrepancy(analytic: &[f64], numeric: &[f64]) -> (f64, f64) {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale > FD_RELATIVE_FLOOR {
            worst_rel = worst_rel.max((a - n).abs() / scale);
        } else {
            worst_abs = worst_abs.max((a - n).abs());
        }
    }
    (worst_rel, worst_abs)
}

/// Whether the two gradients agree under `spec.tolerance` (relative) and
/// [`FD_ABSOLUTE_TOL`] (absolute, near-zero coordinates).
pub fn gradients_agree(analytic: &[f64], numeric: &[f64], spec: &FiniteDiffSpec) -> bool {
    let (rel, abs) = gradient_discrepancy(analytic, numeric);
    rel < spec.tolerance && abs < FD_ABSOLUTE_TOL
}

/// Result of the two-product grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMle {
    /// `alpha = (0, g)` at the best grid point.
    pub params: MnlParams,
    pub g: f64,
    pub grid_step: f64,
    pub nll: f64,
    /// Set when the optimum sits on the grid boundary (e.g. one product
    /// never chosen).
    pub boundary_warning: bool,
}

/// Grid-search MLE of a two-product MNL with `alpha = (0, g)` over
/// `g` in `[-halfwidth, halfwidth]`.
pub fn grid_mle_mnl2(
    dataset: &ChoiceDataset,
    grid_halfwidth: f64,
    grid_points: usize,
) -> Result<GridMle> {
    if dataset.num_products() != 2 {
        return Err(ChoiceError::InvalidDataset(
            "grid MLE needs exactly 2 products".into(),
        ));
    }
    if dataset.is_empty() {
        return Err(ChoiceError::InvalidDataset("empty dataset".into()));
    }
    if dataset
        .transactions()
        .iter()
        .any(|t| t.assortment().size() != 2)
    {
        return Err(ChoiceError::InvalidDataset(
            "grid MLE needs full assortments".into(),
        ));
    }
    if grid_points < 2 || grid_halfwidth <= 0.0 {
        return Err(ChoiceError::InvalidConfig(
            "grid needs >= 2 points and positive width".into(),
        ));
    }
    let mut c0 = 0.0;
    let mut c1 = 0.0;
    for t in dataset.transactions() {
        if t.choice() == 0 {
            c0 += 1.0;
        } else {
            c1 += 1.0;
        }
    }
    let n = c0 + c1;
    let step = 2.0 * grid_halfwidth / (grid_points - 1) as f64;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..grid_points {
        let g = -grid_halfwidth + step * k as f64;
        let p1 = g.exp() / (1.0 + g.exp());
        let p0 = 1.0 / (1.0 + g.exp());
        let nll = -(c0 * p0.ln() + c1 * p1.ln()) / n;
        if nll < best.0 {
            best = (nll, k);
        }
    }
    let g = -grid_halfwidth + step * best.1 as f64;
    Ok(GridMle {
        params: MnlParams::from_slice(&[0.0, g])?,
        g,
        grid_step: step,
        nll: best.0,
        boundary_warning: best.1 == 0 || best.1 == grid_points - 1,
    })
}
