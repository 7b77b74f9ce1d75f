//! Seeded ground-truth sampling and transaction generation.
//!
//! Assortments include each product independently with probability `q`
//! (empty draws are redrawn); choices are sampled from the low-rank truth.
//! Each purpose draws from its own random stream derived from the seed, so
//! raising `n` extends a dataset without changing its earlier transactions
//! or the truth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Assortment, ChoiceDataset, Transaction};
use crate::error::{ChoiceError, Result};
use crate::models::{lowrank_probs, DiagMode, LowRankHaloParams};

const STREAM_TRUTH: u64 = 10;
const STREAM_ASSORTMENTS: u64 = 11;
const STREAM_CHOICES: u64 = 12;
/// Stream for held-out assortments used in evaluation.
pub const STREAM_HELDOUT: u64 = 13;

/// Consecutive empty draws tolerated before giving up.
const MAX_REJECTIONS: usize = 1_000_000;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub r: usize,
    /// Per-product inclusion probability.
    pub inclusion_prob: f64,
    /// `alpha*` is uniform on `[lo, hi]`.
    pub alpha_range: (f64, f64),
    /// Standard deviation of the entries of `U*` and `V*`.
    pub factor_scale: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with `alpha_range = [-1, 1]` and `factor_scale = 1/sqrt(r)`.
    pub fn new(m: usize, r: usize, inclusion_prob: f64, n: usize, seed: u64) -> Self {
        Self {
            m,
            r,
            inclusion_prob,
            alpha_range: (-1.0, 1.0),
            factor_scale: 1.0 / (r.max(1) as f64).sqrt(),
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ChoiceError::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if self.r == 0 || self.r > self.m {
            return bad(format!("r {} not in [1, m={}]", self.r, self.m));
        }
        if !(self.inclusion_prob > 0.0 && self.inclusion_prob < 1.0) {
            return bad(format!(
                "inclusion probability {} not in (0, 1)",
                self.inclusion_prob
            ));
        }
        let (lo, hi) = self.alpha_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("alpha range [{lo}, {hi}] is invalid"));
        }
        if !(self.factor_scale >= 0.0 && self.factor_scale.is_finite()) {
            return bad("factor_scale must be nonnegative".into());
        }
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        Ok(())
    }
}

/// Draws `alpha*` uniformly on the alpha range and `U*, V*` entries iid
/// Gaussian with standard deviation `factor_scale`.
pub fn sample_ground_truth(spec: &SyntheticSpec) -> Result<LowRankHaloParams> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, STREAM_TRUTH);
    let (lo, hi) = spec.alpha_range;
    let alpha = DVector::from_fn(spec.m, |_, _| rng.random_range(lo..=hi));
    let normal = Normal::new(0.0, spec.factor_scale)
        .map_err(|e| ChoiceError::InvalidConfig(e.to_string()))?;
    let u = DMatrix::from_fn(spec.m, spec.r, |_, _| normal.sample(&mut rng));
    let v = DMatrix::from_fn(spec.m, spec.r, |_, _| normal.sample(&mut rng));
    LowRankHaloParams::new(alpha, u, v, DiagMode::Additive)
}

/// Draws `count` nonempty assortments with independent inclusion.
pub fn draw_assortments<R: Rng>(
    m: usize,
    inclusion_prob: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Assortment>> {
    let mut out = Vec::with_capacity(count);
    let mut bits = vec![false; m];
    for _ in 0..count {
        let mut rejections = 0;
        loop {
            for b in bits.iter_mut() {
                *b = rng.random_bool(inclusion_prob);
            }
            if let Ok(a) = Assortment::from_bits(&bits) {
                out.push(a);
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(ChoiceError::InvalidConfig(format!(
                    "{MAX_REJECTIONS} consecutive empty assortments; inclusion probability too small"
                )));
            }
        }
    }
    Ok(out)
}

pub fn sample_assortments(spec: &SyntheticSpec) -> Result<Vec<Assortment>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, STREAM_ASSORTMENTS);
    draw_assortments(spec.m, spec.inclusion_prob, spec.n, &mut rng)
}

/// Fresh assortments from the held-out stream, independent of the
/// training draws for the same seed.
pub fn heldout_assortments(spec: &SyntheticSpec, count: usize) -> Result<Vec<Assortment>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, STREAM_HELDOUT);
    draw_assortments(spec.m, spec.inclusion_prob, count, &mut rng)
}

/// Samples one choice per assortment from the truth by inverse CDF.
pub fn sample_choices(
    truth: &LowRankHaloParams,
    assortments: &[Assortment],
    seed: u64,
) -> Result<ChoiceDataset> {
    let mut rng = stream_rng(seed, STREAM_CHOICES);
    let mut transactions = Vec::with_capacity(assortments.len());
    for a in assortments {
        let probs = lowrank_probs(truth, a)?;
        let u: f64 = rng.random();
        let offered = a.offered();
        let mut cumulative = 0.0;
        let mut choice = offered[offered.len() - 1];
        for &i in offered {
            cumulative += probs.get(i);
            if u < cumulative {
                choice = i;
                break;
            }
        }
        transactions.push(Transaction::new(a.clone(), choice)?);
    }
    ChoiceDataset::new(truth.num_products(), false, transactions)
}

/// Ground truth plus `spec.n` transactions drawn from it.
pub fn generate(spec: &SyntheticSpec) -> Result<(LowRankHaloParams, ChoiceDataset)> {
    let truth = sample_ground_truth(spec)?;
    let assortments = sample_assortments(spec)?;
    let dataset = sample_choices(&truth, &assortments, spec.seed)?;
    Ok((truth, dataset))
}
