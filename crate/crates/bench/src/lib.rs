//! Shared fixtures for the criterion benches.

use halo_choice::synthetic::{draw_assortments, generate, sample_ground_truth};
use halo_choice::{Assortment, ChoiceDataset, LowRankHaloParams, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn truth(m: usize, r: usize) -> LowRankHaloParams {
    sample_ground_truth(&SyntheticSpec::new(m, r, 0.5, 1, 42)).expect("valid spec")
}

pub fn assortments(m: usize, count: usize) -> Vec<Assortment> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    draw_assortments(m, 0.5, count, &mut rng).expect("valid draw")
}

pub fn dataset(m: usize, r: usize, n: usize) -> ChoiceDataset {
    generate(&SyntheticSpec::new(m, r, 0.5, n, 42))
        .expect("valid spec")
        .1
}
