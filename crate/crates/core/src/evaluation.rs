//! Metrics and benchmark aggregation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Assortment, ChoiceDataset};
use crate::error::{ChoiceError, Result};
use crate::estimation;
use crate::models::ChoiceModel;

/// Test cross-entropy in nats per transaction; the same quantity as
/// [`estimation::nll`]. A chosen item with probability 0 yields `+inf`,
/// which callers report as a non-finite metric.
pub fn cross_entropy(model: &ChoiceModel, dataset: &ChoiceDataset) -> Result<f64> {
    estimation::nll(model, dataset)
}

/// Subtracts each column's mean. Halo probabilities are unchanged by
/// `H -> H + 1 c^T`, so this picks one representative per class.
pub fn canonicalize_halo(h: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = h.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// MNL utilities anchored at product 0 (`alpha - alpha_0`).
pub fn canonicalize_alpha(alpha: &DVector<f64>) -> DVector<f64> {
    let anchor = alpha[0];
    alpha.map(|a| a - anchor)
}

/// Parameter-recovery errors between two interaction matrices after
/// column-centering: `f2 = ||dH||_F^2 / m^2` and `l1 = sum|dH| / m^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryError {
    pub f2: f64,
    pub l1: f64,
}

pub fn recovery_errors(fitted: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<RecoveryError> {
    if fitted.shape() != truth.shape() || fitted.nrows() != fitted.ncols() {
        return Err(ChoiceError::shape(
            "recovery matrices",
            format!("{:?}", truth.shape()),
            format!("{:?}", fitted.shape()),
        ));
    }
    let m2 = (fitted.nrows() * fitted.nrows()) as f64;
    let diff = canonicalize_halo(fitted) - canonicalize_halo(truth);
    Ok(RecoveryError {
        f2: diff.norm_squared() / m2,
        l1: diff.abs().sum() / m2,
    })
}

/// `(1/m^2) ||canon(H_fit) - canon(H_true)||_F^2` for models with a Halo
/// representation.
pub fn param_recovery_error(fitted: &ChoiceModel, truth: &ChoiceModel) -> Result<f64> {
    let (f, t) = halo_pair(fitted, truth)?;
    Ok(recovery_errors(&f, &t)?.f2)
}

fn halo_pair(fitted: &ChoiceModel, truth: &ChoiceModel) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let no_halo = |which: &str| {
        ChoiceError::InvalidParams(format!("{which} model has no Halo matrix representation"))
    };
    let f = fitted.halo_matrix().ok_or_else(|| no_halo("fitted"))?;
    let t = truth.halo_matrix().ok_or_else(|| no_halo("truth"))?;
    Ok((f, t))
}

/// Both recovery metrics for models with a Halo representation.
pub fn model_recovery_errors(fitted: &ChoiceModel, truth: &ChoiceModel) -> Result<RecoveryError> {
    let (f, t) = halo_pair(fitted, truth)?;
    recovery_errors(&f, &t)
}

/// Mean over `assortments` of `KL(p_truth(a) || p_fitted(a))` in nats.
/// Returns `+inf` if the fitted model gives probability 0 where the truth
/// does not.
pub fn kl_to_truth(
    fitted: &ChoiceModel,
    truth: &ChoiceModel,
    assortments: &[Assortment],
) -> Result<f64> {
    if assortments.is_empty() {
        return Err(ChoiceError::InvalidConfig(
            "KL needs at least one assortment".into(),
        ));
    }
    let mut total = 0.0;
    for a in assortments {
        let p = truth.probs(a)?;
        let q = fitted.probs(a)?;
        let mut kl = 0.0;
        for &i in a.offered() {
            let pi = p.get(i);
            if pi > 0.0 {
                kl += pi * (pi / q.get(i)).ln();
            }
        }
        // Rounding can push an exact zero slightly negative.
        total += kl.max(0.0);
    }
    Ok(total / assortments.len() as f64)
}

/// Per-(model, dataset, seed) evaluation record.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub dataset_name: String,
    pub seed: u64,
    pub train_ce: f64,
    pub test_ce: f64,
    pub kl_to_truth: Option<f64>,
    pub param_error_f2: Option<f64>,
    pub param_error_l1: Option<f64>,
}

impl EvalReport {
    /// Whether every reported metric is finite.
    pub fn is_finite(&self) -> bool {
        [
            Some(self.train_ce),
            Some(self.test_ce),
            self.kl_to_truth,
            self.param_error_f2,
            self.param_error_l1,
        ]
        .iter()
        .flatten()
        .all(|v| v.is_finite())
    }

    pub fn score(&self) -> CategoryScore {
        CategoryScore {
            category: self.dataset_name.clone(),
            model: self.model_name.clone(),
            test_ce: self.test_ce,
        }
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "model",
    "dataset",
    "seed",
    "train_ce",
    "test_ce",
    "kl_to_truth",
    "param_error_f2",
    "param_error_l1",
];

/// Writes reports as CSV; absent optional metrics are empty fields.
pub fn write_reports_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let ser = |e: csv::Error| ChoiceError::Serialization(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_COLUMNS).map_err(ser)?;
    for r in reports {
        w.write_record([
            r.model_name.clone(),
            r.dataset_name.clone(),
            r.seed.to_string(),
            r.train_ce.to_string(),
            r.test_ce.to_string(),
            opt_field(r.kl_to_truth),
            opt_field(r.param_error_f2),
            opt_field(r.param_error_l1),
        ])
        .map_err(ser)?;
    }
    w.flush()
        .map_err(|e| ChoiceError::Serialization(e.to_string()))
}

/// One test cross-entropy for a (category, model) cell. Repeated cells
/// (e.g. several seeds) are averaged by [`summarize_benchmark`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    #[serde(rename = "category_name")]
    pub category: String,
    #[serde(rename = "model_name")]
    pub model: String,
    pub test_ce: f64,
}

/// How per-category losses are turned into a relative loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelativeLossMode {
    /// `mean(model CE) / mean(reference CE) - 1`.
    #[default]
    RatioOfMeans,
    /// `mean(model CE / reference CE) - 1`.
    MeanOfRatios,
}

impl std::str::FromStr for RelativeLossMode {
    type Err = ChoiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio-of-means" => Ok(Self::RatioOfMeans),
            "mean-of-ratios" => Ok(Self::MeanOfRatios),
            other => Err(ChoiceError::InvalidConfig(format!(
                "unknown relative loss mode {other:?}"
            ))),
        }
    }
}

/// Two cross-entropies within this distance are a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub wins: usize,
    pub relative_loss_pct: f64,
    pub mean_ce: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    /// Test CE per model, in `BenchmarkSummary::models` order.
    pub ce: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub reference: String,
    pub relative_loss_mode: RelativeLossMode,
    pub models: Vec<ModelSummary>,
    pub categories: Vec<CategoryRow>,
}

impl BenchmarkSummary {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn total_wins(&self) -> usize {
        self.models.iter().map(|m| m.wins).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable")
    }

    /// Plain-text table: model, wins, relative loss.
    pub fn render_table(&self) -> String {
        let width = self
            .models
            .iter()
            .map(|m| m.model.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!("{:<width$}  {:>5}  {:>9}\n", "model", "wins", "loss");
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<width$}  {:>5}  {:>8.2}%",
                m.model, m.wins, m.relative_loss_pct
            );
        }
        out
    }
}

fn push_unique(list: &mut Vec<String>, name: &str) {
    if !list.iter().any(|x| x == name) {
        list.push(name.to_string());
    }
}

/// Wins and relative loss per model. Every model must have a score in
/// every category. Models and categories keep their first-seen order.
pub fn summarize_benchmark(
    scores: &[CategoryScore],
    reference: &str,
    mode: RelativeLossMode,
) -> Result<BenchmarkSummary> {
    let mut models = Vec::new();
    let mut categories = Vec::new();
    let mut cells: HashMap<(&str, &str), (f64, usize)> = HashMap::new();
    for s in scores {
        push_unique(&mut models, &s.model);
        push_unique(&mut categories, &s.category);
        let cell = cells.entry((&s.category, &s.model)).or_insert((0.0, 0));
        cell.0 += s.test_ce;
        cell.1 += 1;
    }
    if !models.iter().any(|m| m == reference) {
        return Err(ChoiceError::InvalidConfig(format!(
            "reference model {reference:?} has no scores"
        )));
    }
    let mut table = Vec::with_capacity(categories.len());
    for c in &categories {
        let mut row = Vec::with_capacity(models.len());
        for m in &models {
            let (sum, count) =
                cells
                    .get(&(c.as_str(), m.as_str()))
                    .ok_or_else(|| ChoiceError::MissingCell {
                        model: m.clone(),
                        category: c.clone(),
                    })?;
            row.push(sum / *count as f64);
        }
        table.push(row);
    }

    let ref_idx = models
        .iter()
        .position(|m| m == reference)
        .expect("checked above");
    let n_cat = categories.len() as f64;
    let mean_of = |j: usize| table.iter().map(|row| row[j]).sum::<f64>() / n_cat;
    let ref_mean = mean_of(ref_idx);

    let mut summaries: Vec<ModelSummary> = models
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mean_ce = mean_of(j);
            let ratio = match mode {
                RelativeLossMode::RatioOfMeans => mean_ce / ref_mean,
                RelativeLossMode::MeanOfRatios => {
                    table.iter().map(|row| row[j] / row[ref_idx]).sum::<f64>() / n_cat
                }
            };
            ModelSummary {
                model: name.clone(),
                wins: 0,
                relative_loss_pct: if j == ref_idx {
                    0.0
                } else {
                    100.0 * (ratio - 1.0)
                },
                mean_ce,
            }
        })
        .collect();

    for row in &table {
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        for (j, &ce) in row.iter().enumerate() {
            if ce <= best + TIE_TOLERANCE {
                summaries[j].wins += 1;
            }
        }
    }

    Ok(BenchmarkSummary {
        reference: reference.to_string(),
        relative_loss_mode: mode,
        models: summaries,
        categories: categories
            .into_iter()
            .zip(table)
            .map(|(category, ce)| CategoryRow { category, ce })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HaloParams, LowRankHaloParams, MnlParams};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn score(c: &str, m: &str, ce: f64) -> CategoryScore {
        CategoryScore {
            category: c.into(),
            model: m.into(),
            test_ce: ce,
        }
    }

    #[test]
    fn canonicalize_removes_pure_shift() {
        let c = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let h = DMatrix::from_fn(3, 3, |_, j| c[j]);
        assert!(canonicalize_halo(&h).abs().max() < 1e-15);
    }

    #[test]
    fn canonicalize_is_idempotent_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = rng.random_range(1..8);
            let h = DMatrix::from_fn(m, m, |_, _| rng.random_range(-3.0..3.0));
            let c: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let shifted = DMatrix::from_fn(m, m, |i, j| h[(i, j)] + c[j]);
            let ch = canonicalize_halo(&h);
            assert!((canonicalize_halo(&ch) - &ch).abs().max() < 1e-12);
            assert!((canonicalize_halo(&shifted) - &ch).abs().max() < 1e-12);
            for col in ch.column_iter() {
                assert!(col.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recovery_error_zero_for_equal_or_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = LowRankHaloParams::new(
            DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0)),
            Default::default(),
        )
        .unwrap();
        let t: ChoiceModel = truth.into();
        assert_eq!(param_recovery_error(&t, &t).unwrap(), 0.0);
        let h = t.halo_matrix().unwrap();
        let shifted: ChoiceModel =
            HaloParams::new(DMatrix::from_fn(4, 4, |i, j| h[(i, j)] + j as f64))
                .unwrap()
                .into();
        assert!(param_recovery_error(&shifted, &t).unwrap() < 1e-28);
    }

    #[test]
    fn recovery_error_single_entry_perturbation() {
        // Perturbing H_00 by d moves column 0 by (d/2, -d/2) after centering:
        // squared Frobenius d^2/2, divided by m^2 = 4.
        let d = 0.3;
        let truth = DMatrix::from_row_slice(2, 2, &[0.4, -0.1, 0.7, 1.2]);
        let mut fitted = truth.clone();
        fitted[(0, 0)] += d;
        let e = recovery_errors(&fitted, &truth).unwrap();
        assert_abs_diff_eq!(e.f2, (d * d / 2.0) / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.l1, d / 4.0, epsilon = 1e-15);
        assert!(recovery_errors(&DMatrix::zeros(3, 3), &truth).is_err());
    }

    #[test]
    fn recovery_error_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(
            recovery_errors(&a, &b).unwrap(),
            recovery_errors(&b, &a).unwrap()
        );
    }

    #[test]
    fn kl_examples() {
        let truth: ChoiceModel = MnlParams::from_slice(&[std::f64::consts::LN_2, 0.0])
            .unwrap()
            .into();
        let fitted: ChoiceModel = MnlParams::zeros(2).into();
        let a = vec![Assortment::full(2)];
        assert_eq!(kl_to_truth(&truth, &truth, &a).unwrap(), 0.0);
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(
            kl_to_truth(&fitted, &truth, &a).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert!(kl_to_truth(&fitted, &truth, &[]).is_err());
    }

    #[test]
    fn kl_nonnegative_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let h1 = HaloParams::new(DMatrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0)))
                .unwrap();
            let h2 = HaloParams::new(DMatrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0)))
                .unwrap();
            let a: Vec<_> = (1..16u32)
                .map(|mask| {
                    Assortment::from_bits(&(0..4).map(|j| mask & (1 << j) != 0).collect::<Vec<_>>())
                        .unwrap()
                })
                .collect();
            assert!(kl_to_truth(&h1.into(), &h2.into(), &a).unwrap() >= 0.0);
        }
    }

    #[test]
    fn wins_and_relative_loss() {
        let scores = vec![
            score("c1", "A", 1.0),
            score("c1", "B", 1.1),
            score("c2", "A", 1.0),
            score("c2", "B", 0.9),
            score("c3", "A", 2.0),
            score("c3", "B", 2.1),
        ];
        let s = summarize_benchmark(&scores, "A", RelativeLossMode::RatioOfMeans).unwrap();
        assert_eq!(s.model("A").unwrap().wins, 2);
        assert_eq!(s.model("B").unwrap().wins, 1);
        assert_eq!(s.model("A").unwrap().relative_loss_pct, 0.0);
        assert_eq!(s.total_wins(), 3);
    }

    #[test]
    fn relative_loss_arithmetic() {
        let scores = vec![score("c", "ref", 1.0), score("c", "x", 1.05)];
        let s = summarize_benchmark(&scores, "ref", RelativeLossMode::RatioOfMeans).unwrap();
        assert_abs_diff_eq!(
            s.model("x").unwrap().relative_loss_pct,
            5.0,
            epsilon = 1e-12
        );

        let scores = vec![
            score("c1", "ref", 1.0),
            score("c1", "x", 2.0),
            score("c2", "ref", 3.0),
            score("c2", "x", 3.0),
        ];
        let rom = summarize_benchmark(&scores, "ref", RelativeLossMode::RatioOfMeans).unwrap();
        let mor = summarize_benchmark(&scores, "ref", RelativeLossMode::MeanOfRatios).unwrap();
        assert_abs_diff_eq!(
            rom.model("x").unwrap().relative_loss_pct,
            25.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mor.model("x").unwrap().relative_loss_pct,
            50.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ties_award_every_tied_model() {
        let scores = vec![
            score("c", "A", 1.0),
            score("c", "B", 1.0 + 1e-12),
            score("c", "C", 2.0),
        ];
        let s = summarize_benchmark(&scores, "A", RelativeLossMode::RatioOfMeans).unwrap();
        assert_eq!(s.model("A").unwrap().wins, 1);
        assert_eq!(s.model("B").unwrap().wins, 1);
        assert_eq!(s.total_wins(), 2);
    }

    #[test]
    fn seeds_are_averaged_and_missing_cells_rejected() {
        let scores = vec![
            score("c", "A", 1.0),
            score("c", "A", 2.0),
            score("c", "B", 1.4),
        ];
        let s = summarize_benchmark(&scores, "B", RelativeLossMode::RatioOfMeans).unwrap();
        assert_eq!(s.categories[0].ce, vec![1.5, 1.4]);
        assert_eq!(s.model("B").unwrap().wins, 1);

        let scores = vec![
            score("c1", "A", 1.0),
            score("c1", "B", 1.0),
            score("c2", "A", 1.0),
        ];
        let err = summarize_benchmark(&scores, "A", RelativeLossMode::RatioOfMeans).unwrap_err();
        assert!(matches!(err, ChoiceError::MissingCell { .. }));
        assert!(summarize_benchmark(&scores[..2], "Z", RelativeLossMode::RatioOfMeans).is_err());
    }

    #[test]
    fn reports_csv_layout() {
        let r = EvalReport {
            model_name: "mnl".into(),
            dataset_name: "d".into(),
            seed: 3,
            train_ce: 0.5,
            test_ce: 0.75,
            kl_to_truth: None,
            param_error_f2: Some(0.25),
            param_error_l1: None,
        };
        let mut buf = Vec::new();
        write_reports_csv(&[r], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "model,dataset,seed,train_ce,test_ce,kl_to_truth,param_error_f2,param_error_l1\n\
             mnl,d,3,0.5,0.75,,0.25,\n"
        );
    }

    #[test]
    fn cross_entropy_flags_impossible_choices() {
        // A choice with probability 0 cannot be constructed for finite
        // parameters, so check the extreme-logit case stays finite.
        let model: ChoiceModel = MnlParams::from_slice(&[0.0, 700.0]).unwrap().into();
        let t = crate::dataset::Transaction::new(Assortment::full(2), 0).unwrap();
        let d = ChoiceDataset::new(2, false, vec![t]).unwrap();
        let ce = cross_entropy(&model, &d).unwrap();
        assert_abs_diff_eq!(ce, 700.0, epsilon = 1e-9);
    }
}
