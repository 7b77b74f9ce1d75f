//! Forward computation for the four choice model families.
//!
//! Every model maps an assortment to logits and applies a softmax restricted
//! to the offered products. Unoffered products get probability exactly 0.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Assortment, ChoiceProbabilities};
use crate::error::{ChoiceError, Result};

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ChoiceError::InvalidParams(format!(
            "{what} has non-finite entries"
        )))
    }
}

fn check_assortment(m: usize, assortment: &Assortment) -> Result<()> {
    if assortment.num_products() != m {
        return Err(ChoiceError::shape(
            "assortment",
            m,
            assortment.num_products(),
        ));
    }
    Ok(())
}

/// Softmax of `logits` over the offered products of `assortment`; every
/// other entry is exactly 0. Uses max-subtraction, so logits of any finite
/// magnitude are safe.
pub fn masked_softmax(logits: &[f64], assortment: &Assortment) -> ChoiceProbabilities {
    let offered = assortment.offered();
    let max = offered
        .iter()
        .map(|&i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &i in offered {
        let e = (logits[i] - max).exp();
        probs[i] = e;
        total += e;
    }
    for &i in offered {
        probs[i] /= total;
    }
    ChoiceProbabilities::from_vec(probs)
}

/// Numerically stable log-sum-exp.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Plain multinomial logit: one log-utility per product.
#[derive(Clone, Debug, PartialEq)]
pub struct MnlParams {
    alpha: DVector<f64>,
}

impl MnlParams {
    pub fn new(alpha: DVector<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(ChoiceError::InvalidParams("alpha is empty".into()));
        }
        check_finite("alpha", alpha.as_slice())?;
        Ok(Self { alpha })
    }

    pub fn from_slice(alpha: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(alpha))
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            alpha: DVector::zeros(m),
        }
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn num_products(&self) -> usize {
        self.alpha.len()
    }
}

/// Finite mixture of MNL components with softmax-parameterized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureMnlParams {
    weights_logits: DVector<f64>,
    components: Vec<MnlParams>,
}

impl MixtureMnlParams {
    pub fn new(weights_logits: DVector<f64>, components: Vec<MnlParams>) -> Result<Self> {
        if components.is_empty() {
            return Err(ChoiceError::InvalidParams(
                "mixture needs K >= 1 components".into(),
            ));
        }
        if weights_logits.len() != components.len() {
            return Err(ChoiceError::shape(
                "mixture weights",
                components.len(),
                weights_logits.len(),
            ));
        }
        check_finite("weights_logits", weights_logits.as_slice())?;
        let m = components[0].num_products();
        if let Some(c) = components.iter().find(|c| c.num_products() != m) {
            return Err(ChoiceError::shape("mixture component", m, c.num_products()));
        }
        Ok(Self {
            weights_logits,
            components,
        })
    }

    pub fn weights_logits(&self) -> &DVector<f64> {
        &self.weights_logits
    }

    pub fn components(&self) -> &[MnlParams] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn num_products(&self) -> usize {
        self.components[0].num_products()
    }

    /// Mixture weights `softmax(w)`.
    pub fn weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(self.weights_logits.as_slice());
        self.weights_logits
            .iter()
            .map(|w| (w - lse).exp())
            .collect()
    }
}

/// Halo MNL: logits are `H a` for a dense `m x m` matrix `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct HaloParams {
    h: DMatrix<f64>,
}

impl HaloParams {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() || h.nrows() == 0 {
            return Err(ChoiceError::shape(
                "halo matrix",
                "square, nonempty",
                format!("{}x{}", h.nrows(), h.ncols()),
            ));
        }
        check_finite("H", h.as_slice())?;
        Ok(Self { h })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn num_products(&self) -> usize {
        self.h.nrows()
    }
}

/// How the per-product utilities `alpha` are merged into the diagonal of the
/// low-rank interaction matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagMode {
    /// `H = diag(alpha) + U V^T`.
    #[default]
    Additive,
    /// `H = U V^T` with its diagonal overwritten by `alpha`.
    Replace,
}

impl fmt::Display for DiagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagMode::Additive => f.write_str("additive"),
            DiagMode::Replace => f.write_str("replace"),
        }
    }
}

impl FromStr for DiagMode {
    type Err = ChoiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(DiagMode::Additive),
            "replace" => Ok(DiagMode::Replace),
            other => Err(ChoiceError::InvalidConfig(format!(
                "unknown diag_mode {other:?}"
            ))),
        }
    }
}

/// Low-rank Halo MNL: `H = diag(alpha) + U V^T` with `U, V` of shape `m x r`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankHaloParams {
    alpha: DVector<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    diag_mode: DiagMode,
}

impl LowRankHaloParams {
    pub fn new(
        alpha: DVector<f64>,
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        diag_mode: DiagMode,
    ) -> Result<Self> {
        let m = alpha.len();
        if m == 0 {
            return Err(ChoiceError::InvalidParams("alpha is empty".into()));
        }
        if u.shape() != v.shape() {
            return Err(ChoiceError::shape(
                "low-rank factors",
                format!("{:?}", u.shape()),
                format!("{:?}", v.shape()),
            ));
        }
        if u.nrows() != m {
            return Err(ChoiceError::shape("factor rows", m, u.nrows()));
        }
        let r = u.ncols();
        if r == 0 || r > m {
            return Err(ChoiceError::InvalidParams(format!(
                "rank {r} not in [1, {m}]"
            )));
        }
        check_finite("alpha", alpha.as_slice())?;
        check_finite("U", u.as_slice())?;
        check_finite("V", v.as_slice())?;
        Ok(Self {
            alpha,
            u,
            v,
            diag_mode,
        })
    }

    /// Low-rank model with zero factors, i.e. a plain MNL.
    pub fn from_mnl(alpha: DVector<f64>, rank: usize, diag_mode: DiagMode) -> Result<Self> {
        let m = alpha.len();
        Self::new(
            alpha,
            DMatrix::zeros(m, rank),
            DMatrix::zeros(m, rank),
            diag_mode,
        )
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn diag_mode(&self) -> DiagMode {
        self.diag_mode
    }

    pub fn num_products(&self) -> usize {
        self.alpha.len()
    }

    /// Logits for the offered products only, in `assortment.offered()`
    /// order, without materializing `H`.
    pub(crate) fn offered_logits_into(
        &self,
        assortment: &Assortment,
        va: &mut Vec<f64>,
        out: &mut Vec<f64>,
    ) {
        let r = self.rank();
        va.clear();
        va.resize(r, 0.0);
        for (k, slot) in va.iter_mut().enumerate() {
            let col = self.v.column(k);
            *slot = assortment.offered().iter().map(|&j| col[j]).sum();
        }
        out.clear();
        for &i in assortment.offered() {
            let mut logit = self.alpha[i];
            match self.diag_mode {
                DiagMode::Additive => {
                    for k in 0..r {
                        logit += self.u[(i, k)] * va[k];
                    }
                }
                DiagMode::Replace => {
                    for k in 0..r {
                        logit += self.u[(i, k)] * (va[k] - self.v[(i, k)]);
                    }
                }
            }
            out.push(logit);
        }
    }
}

pub fn mnl_probs(params: &MnlParams, assortment: &Assortment) -> Result<ChoiceProbabilities> {
    check_assortment(params.num_products(), assortment)?;
    Ok(masked_softmax(params.alpha.as_slice(), assortment))
}

pub fn mixture_probs(
    params: &MixtureMnlParams,
    assortment: &Assortment,
) -> Result<ChoiceProbabilities> {
    check_assortment(params.num_products(), assortment)?;
    let mut probs = vec![0.0; params.num_products()];
    for (pi, component) in params.weights().into_iter().zip(&params.components) {
        let p = masked_softmax(component.alpha.as_slice(), assortment);
        for &i in assortment.offered() {
            probs[i] += pi * p.get(i);
        }
    }
    // Weights may sum to 1 + ulp; keep every entry a probability.
    for x in &mut probs {
        *x = x.min(1.0);
    }
    Ok(ChoiceProbabilities::from_vec(probs))
}

/// `H a`, computed for every product.
pub fn halo_logits(h: &DMatrix<f64>, assortment: &Assortment) -> Result<Vec<f64>> {
    let m = assortment.num_products();
    if h.shape() != (m, m) {
        return Err(ChoiceError::shape(
            "halo matrix",
            format!("{m}x{m}"),
            format!("{}x{}", h.nrows(), h.ncols()),
        ));
    }
    let mut logits = vec![0.0; m];
    for &k in assortment.offered() {
        let col = h.column(k);
        for (logit, hik) in logits.iter_mut().zip(col.iter()) {
            *logit += hik;
        }
    }
    Ok(logits)
}

pub fn halo_probs(params: &HaloParams, assortment: &Assortment) -> Result<ChoiceProbabilities> {
    let logits = halo_logits(&params.h, assortment)?;
    Ok(masked_softmax(&logits, assortment))
}

/// The dense interaction matrix of a low-rank model.
pub fn lowrank_materialize(params: &LowRankHaloParams) -> DMatrix<f64> {
    let mut h = &params.u * params.v.transpose();
    for i in 0..params.num_products() {
        match params.diag_mode {
            DiagMode::Additive => h[(i, i)] += params.alpha[i],
            DiagMode::Replace => h[(i, i)] = params.alpha[i],
        }
    }
    h
}

pub fn lowrank_probs(
    params: &LowRankHaloParams,
    assortment: &Assortment,
) -> Result<ChoiceProbabilities> {
    let h = lowrank_materialize(params);
    let logits = halo_logits(&h, assortment)?;
    Ok(masked_softmax(&logits, assortment))
}

/// Model family tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mnl,
    Mixture,
    Halo,
    #[serde(rename = "lowrank")]
    LowRank,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Mnl, Family::Mixture, Family::Halo, Family::LowRank];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Mnl => "mnl",
            Family::Mixture => "mixture",
            Family::Halo => "halo",
            Family::LowRank => "lowrank",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = ChoiceError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| ChoiceError::InvalidConfig(format!("unknown model family {s:?}")))
    }
}

/// Parameters of any supported choice model.
#[derive(Clone, Debug, PartialEq)]
pub enum ChoiceModel {
    Mnl(MnlParams),
    Mixture(MixtureMnlParams),
    Halo(HaloParams),
    LowRank(LowRankHaloParams),
}

impl ChoiceModel {
    pub fn family(&self) -> Family {
        match self {
            ChoiceModel::Mnl(_) => Family::Mnl,
            ChoiceModel::Mixture(_) => Family::Mixture,
            ChoiceModel::Halo(_) => Family::Halo,
            ChoiceModel::LowRank(_) => Family::LowRank,
        }
    }

    pub fn num_products(&self) -> usize {
        match self {
            ChoiceModel::Mnl(p) => p.num_products(),
            ChoiceModel::Mixture(p) => p.num_products(),
            ChoiceModel::Halo(p) => p.num_products(),
            ChoiceModel::LowRank(p) => p.num_products(),
        }
    }

    pub fn probs(&self, assortment: &Assortment) -> Result<ChoiceProbabilities> {
        match self {
            ChoiceModel::Mnl(p) => mnl_probs(p, assortment),
            ChoiceModel::Mixture(p) => mixture_probs(p, assortment),
            ChoiceModel::Halo(p) => halo_probs(p, assortment),
            ChoiceModel::LowRank(p) => lowrank_probs(p, assortment),
        }
    }

    /// The equivalent Halo interaction matrix, when one exists. A mixture
    /// of MNLs is not a Halo MNL.
    pub fn halo_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            ChoiceModel::Mnl(p) => Some(DMatrix::from_diagonal(&p.alpha)),
            ChoiceModel::Mixture(_) => None,
            ChoiceModel::Halo(p) => Some(p.h.clone()),
            ChoiceModel::LowRank(p) => Some(lowrank_materialize(p)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelJson::from(self))
            .expect("model json is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: ModelJson =
            serde_json::from_str(text).map_err(|e| ChoiceError::Serialization(e.to_string()))?;
        json.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| ChoiceError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ChoiceError::io(path, e))?;
        Self::from_json(&text)
    }
}

impl From<MnlParams> for ChoiceModel {
    fn from(p: MnlParams) -> Self {
        ChoiceModel::Mnl(p)
    }
}

impl From<MixtureMnlParams> for ChoiceModel {
    fn from(p: MixtureMnlParams) -> Self {
        ChoiceModel::Mixture(p)
    }
}

impl From<HaloParams> for ChoiceModel {
    fn from(p: HaloParams) -> Self {
        ChoiceModel::Halo(p)
    }
}

impl From<LowRankHaloParams> for ChoiceModel {
    fn from(p: LowRankHaloParams) -> Self {
        ChoiceModel::LowRank(p)
    }
}

// Matrices are stored row-major in JSON.
#[derive(Serialize, Deserialize)]
#[serde(tag = "model", deny_unknown_fields)]
enum ModelJson {
    #[serde(rename = "mnl")]
    Mnl { alpha: Vec<f64> },
    #[serde(rename = "mixture")]
    Mixture {
        weights_logits: Vec<f64>,
        components: Vec<Vec<f64>>,
    },
    #[serde(rename = "halo")]
    Halo { m: usize, h: Vec<f64> },
    #[serde(rename = "lowrank")]
    LowRank {
        alpha: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        rank: usize,
        diag_mode: DiagMode,
    },
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(
    rows: usize,
    cols: usize,
    data: &[f64],
    what: &'static str,
) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(ChoiceError::shape(what, rows * cols, data.len()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl From<&ChoiceModel> for ModelJson {
    fn from(model: &ChoiceModel) -> Self {
        match model {
            ChoiceModel::Mnl(p) => ModelJson::Mnl {
                alpha: p.alpha.as_slice().to_vec(),
            },
            ChoiceModel::Mixture(p) => ModelJson::Mixture {
                weights_logits: p.weights_logits.as_slice().to_vec(),
                components: p
                    .components
                    .iter()
                    .map(|c| c.alpha.as_slice().to_vec())
                    .collect(),
            },
            ChoiceModel::Halo(p) => ModelJson::Halo {
                m: p.num_products(),
                h: row_major(&p.h),
            },
            ChoiceModel::LowRank(p) => ModelJson::LowRank {
                alpha: p.alpha.as_slice().to_vec(),
                u: row_major(&p.u),
                v: row_major(&p.v),
                rank: p.rank(),
                diag_mode: p.diag_mode,
            },
        }
    }
}

impl TryFrom<ModelJson> for ChoiceModel {
    type Error = ChoiceError;

    fn try_from(json: ModelJson) -> Result<Self> {
        Ok(match json {
            ModelJson::Mnl { alpha } => MnlParams::from_slice(&alpha)?.into(),
            ModelJson::Mixture {
                weights_logits,
                components,
            } => {
                let components = components
                    .iter()
                    .map(|a| MnlParams::from_slice(a))
                    .collect::<Result<Vec<_>>>()?;
                MixtureMnlParams::new(DVector::from_vec(weights_logits), components)?.into()
            }
            ModelJson::Halo { m, h } => {
                HaloParams::new(from_row_major(m, m, &h, "halo matrix")?)?.into()
            }
            ModelJson::LowRank {
                alpha,
                u,
                v,
                rank,
                diag_mode,
            } => {
                let m = alpha.len();
                LowRankHaloParams::new(
                    DVector::from_vec(alpha),
                    from_row_major(m, rank, &u, "U")?,
                    from_row_major(m, rank, &v, "V")?,
                    diag_mode,
                )?
                .into()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn a(bits: &[u8]) -> Assortment {
        Assortment::from_bits(&bits.iter().map(|&b| b == 1).collect::<Vec<_>>()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
    }

    fn random_assortment(rng: &mut ChaCha8Rng, m: usize) -> Assortment {
        loop {
            let bits: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
            if let Ok(a) = Assortment::from_bits(&bits) {
                return a;
            }
        }
    }

    #[test]
    fn mnl_uniform_and_ln2() {
        let p = mnl_probs(
            &MnlParams::from_slice(&[0.0, 0.0, 0.0]).unwrap(),
            &a(&[1, 1, 1]),
        )
        .unwrap();
        for &x in p.as_slice() {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = mnl_probs(&MnlParams::from_slice(&[0.0, LN2]).unwrap(), &a(&[1, 1])).unwrap();
        assert_abs_diff_eq!(p.get(0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mnl_masks_unoffered_exactly() {
        let p = mnl_probs(
            &MnlParams::from_slice(&[5.0, -5.0, 0.0]).unwrap(),
            &a(&[0, 1, 1]),
        )
        .unwrap();
        assert_eq!(p.get(0), 0.0);
        assert!(p.is_valid_for(&a(&[0, 1, 1]), 1e-12));
    }

    #[test]
    fn mnl_rejects_mismatched_assortment() {
        assert!(mnl_probs(&MnlParams::zeros(3), &a(&[1, 1])).is_err());
    }

    #[test]
    fn halo_logits_examples() {
        let alpha = [0.3, -1.2, 2.0];
        let h = DMatrix::from_diagonal(&DVector::from_column_slice(&alpha));
        let asrt = a(&[1, 0, 1]);
        let logits = halo_logits(&h, &asrt).unwrap();
        assert_eq!(logits[0], 0.3);
        assert_eq!(logits[2], 2.0);

        let h = DMatrix::from_row_slice(2, 2, &[0.0, LN2, 0.0, 0.0]);
        assert_eq!(halo_logits(&h, &a(&[1, 1])).unwrap(), vec![LN2, 0.0]);
        assert_eq!(
            halo_logits(&DMatrix::zeros(3, 3), &asrt).unwrap(),
            vec![0.0; 3]
        );
        assert!(halo_logits(&DMatrix::zeros(2, 2), &asrt).is_err());
    }

    #[test]
    fn halo_probs_ln2() {
        let h = HaloParams::new(DMatrix::from_row_slice(2, 2, &[0.0, LN2, 0.0, 0.0])).unwrap();
        let p = halo_probs(&h, &a(&[1, 1])).unwrap();
        assert_abs_diff_eq!(p.get(0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn materialize_examples() {
        let p = LowRankHaloParams::from_mnl(
            DVector::from_column_slice(&[1.0, 2.0]),
            1,
            DiagMode::Additive,
        )
        .unwrap();
        assert_eq!(
            lowrank_materialize(&p),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])
        );

        let p = LowRankHaloParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DiagMode::Additive,
        )
        .unwrap();
        assert_eq!(
            lowrank_materialize(&p),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
        );

        let p = LowRankHaloParams::new(
            DVector::from_column_slice(&[9.0, 9.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DiagMode::Replace,
        )
        .unwrap();
        assert_eq!(
            lowrank_materialize(&p),
            DMatrix::from_row_slice(2, 2, &[9.0, 0.0, 0.0, 9.0])
        );
    }

    #[test]
    fn lowrank_rank_one_example() {
        // H = [[0, 1], [0, 0]]: logits (1, 0).
        let p = LowRankHaloParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DiagMode::Additive,
        )
        .unwrap();
        let e = std::f64::consts::E;
        let probs = lowrank_probs(&p, &a(&[1, 1])).unwrap();
        assert_abs_diff_eq!(probs.get(0), e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(probs.get(1), 1.0 / (e + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn lowrank_validation() {
        let bad_rank = LowRankHaloParams::new(
            DVector::zeros(2),
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 3),
            DiagMode::Additive,
        );
        assert!(bad_rank.is_err());
        let mismatched = LowRankHaloParams::new(
            DVector::zeros(3),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(3, 2),
            DiagMode::Additive,
        );
        assert!(mismatched.is_err());
        assert!(MnlParams::from_slice(&[f64::NAN]).is_err());
        assert!(HaloParams::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn factored_logits_match_materialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let m = rng.random_range(1..9);
            let r = rng.random_range(1..=m);
            let mode = if trial % 2 == 0 {
                DiagMode::Additive
            } else {
                DiagMode::Replace
            };
            let p = LowRankHaloParams::new(
                DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0)),
                random_matrix(&mut rng, m, r, 1.5),
                random_matrix(&mut rng, m, r, 1.5),
                mode,
            )
            .unwrap();
            let asrt = random_assortment(&mut rng, m);
            let dense = halo_logits(&lowrank_materialize(&p), &asrt).unwrap();
            let (mut va, mut out) = (Vec::new(), Vec::new());
            p.offered_logits_into(&asrt, &mut va, &mut out);
            for (&i, &l) in asrt.offered().iter().zip(&out) {
                assert_abs_diff_eq!(l, dense[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let p = MnlParams::from_slice(&[500.0, -500.0, 499.0]).unwrap();
        let probs = mnl_probs(&p, &a(&[1, 1, 1])).unwrap();
        assert!(probs.as_slice().iter().all(|x| x.is_finite()));
        assert!(probs.is_valid_for(&a(&[1, 1, 1]), 1e-12));
        let h = HaloParams::new(DMatrix::from_element(3, 3, 250.0)).unwrap();
        let probs = halo_probs(&h, &a(&[1, 0, 1])).unwrap();
        assert!(probs.is_valid_for(&a(&[1, 0, 1]), 1e-12));
    }

    #[test]
    fn mixture_single_component_is_mnl() {
        let alpha = DVector::from_column_slice(&[0.5, -0.2, 1.0]);
        let mix = MixtureMnlParams::new(
            DVector::from_element(1, 3.7),
            vec![MnlParams::new(alpha.clone()).unwrap()],
        )
        .unwrap();
        let asrt = a(&[1, 1, 0]);
        let pm = mixture_probs(&mix, &asrt).unwrap();
        let p = mnl_probs(&MnlParams::new(alpha).unwrap(), &asrt).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(pm.get(i), p.get(i), epsilon = 1e-15);
        }
        assert_eq!(pm.get(2), 0.0);
    }

    #[test]
    fn mixture_validation() {
        assert!(MixtureMnlParams::new(DVector::zeros(0), vec![]).is_err());
        assert!(MixtureMnlParams::new(DVector::zeros(2), vec![MnlParams::zeros(3)]).is_err());
        assert!(MixtureMnlParams::new(
            DVector::zeros(2),
            vec![MnlParams::zeros(3), MnlParams::zeros(2)]
        )
        .is_err());
    }

    #[test]
    fn json_round_trip_all_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let models: Vec<ChoiceModel> = vec![
            MnlParams::from_slice(&[0.1, 1.0 / 3.0, -2.5e-17])
                .unwrap()
                .into(),
            MixtureMnlParams::new(
                DVector::from_column_slice(&[0.2, -0.7]),
                vec![
                    MnlParams::from_slice(&[1.0, 2.0, 3.0]).unwrap(),
                    MnlParams::from_slice(&[-1.0, std::f64::consts::PI, 0.0]).unwrap(),
                ],
            )
            .unwrap()
            .into(),
            HaloParams::new(random_matrix(&mut rng, 3, 3, 1.0))
                .unwrap()
                .into(),
            LowRankHaloParams::new(
                DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
                random_matrix(&mut rng, 4, 2, 1.0),
                random_matrix(&mut rng, 4, 2, 1.0),
                DiagMode::Replace,
            )
            .unwrap()
            .into(),
        ];
        for model in models {
            let back = ChoiceModel::from_json(&model.to_json()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn json_layout_is_row_major() {
        let p = LowRankHaloParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[3.0, 4.0]),
            DiagMode::Additive,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&ChoiceModel::from(p).to_json()).unwrap();
        assert_eq!(v["model"], "lowrank");
        assert_eq!(v["u"], serde_json::json!([1.0, 2.0]));
        assert_eq!(v["rank"], 1);
        assert_eq!(v["diag_mode"], "additive");

        let h = HaloParams::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&ChoiceModel::from(h).to_json()).unwrap();
        assert_eq!(v["h"], serde_json::json!([1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn json_rejects_bad_input() {
        assert!(ChoiceModel::from_json(r#"{"model":"mnl","alpha":[1.0],"x":1}"#).is_err());
        assert!(ChoiceModel::from_json(r#"{"model":"halo","m":2,"h":[1.0]}"#).is_err());
        assert!(ChoiceModel::from_json(r#"{"model":"nope"}"#).is_err());
    }

    proptest! {
        #[test]
        fn every_model_output_is_a_distribution(
            seed in any::<u64>(),
            m in 1usize..10,
            family in 0usize..4,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = rng.random_range(1..=m);
            let model: ChoiceModel = match family {
                0 => MnlParams::new(DVector::from_fn(m, |_, _| rng.random_range(-20.0..20.0))).unwrap().into(),
                1 => MixtureMnlParams::new(
                    DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0)),
                    (0..3).map(|_| MnlParams::new(DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0))).unwrap()).collect(),
                ).unwrap().into(),
                2 => HaloParams::new(random_matrix(&mut rng, m, m, 10.0)).unwrap().into(),
                _ => LowRankHaloParams::new(
                    DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0)),
                    random_matrix(&mut rng, m, r, 3.0),
                    random_matrix(&mut rng, m, r, 3.0),
                    if seed % 2 == 0 { DiagMode::Additive } else { DiagMode::Replace },
                ).unwrap().into(),
            };
            let asrt = random_assortment(&mut rng, m);
            let p = model.probs(&asrt).unwrap();
            prop_assert!(p.is_valid_for(&asrt, 1e-9));
        }
    }
}
