//! Seeded random models for tests and the `gen --random` command.
//!
//! Parameters are rationals with denominator 100, so the same draw yields
//! both an exact and a float model with identical inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{gen_binomial, gen_trinomial, payoff_claim, Claim, ClaimKind, MarketModel};
use crate::scalar::Scalar;

pub const DEFAULT_SEED: u64 = 20240601;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cents<T: Scalar>(k: i64) -> T {
    T::from_ratio(k, 100)
}

/// Leaf claim with nominal values `k/100`, `k ∈ [0, 2000]`.
pub fn random_leaf_claim<T: Scalar, R: Rng>(rng: &mut R, model: &MarketModel<T>) -> Result<Claim<T>> {
    let table = model
        .tree
        .leaves()
        .iter()
        .map(|&l| (model.tree.node(l).id.clone(), cents::<T>(rng.random_range(0..=2000))))
        .collect();
    payoff_claim(model, &ClaimKind::Custom(table))
}

/// Binomial model with `N ≤ max_steps`, `u ∈ (1, 3)`, `d ∈ (0.2, 1)`,
/// `p ∈ (0.1, 0.9)`, `S₀ ∈ [1, 10]` and `r ∈ [0, 0.05]` (kept below `u - 1`).
pub fn random_binomial<T: Scalar, R: Rng>(rng: &mut R, max_steps: usize) -> Result<MarketModel<T>> {
    let steps = rng.random_range(1..=max_steps);
    let u = rng.random_range(101..300);
    let d = rng.random_range(21..100);
    let p = rng.random_range(11..90);
    let s0 = rng.random_range(100..=1000);
    let r = rng.random_range(0..=5.min(u - 101));
    gen_binomial(cents(s0), cents(u), cents(d), cents(p), steps, cents(r))
}

/// Trinomial model with `N ≤ max_steps`, `u ∈ (1, 3)`, `d ∈ (0.2, 1)` and each
/// branch probability at least 0.05; no interest.
pub fn random_trinomial<T: Scalar, R: Rng>(rng: &mut R, max_steps: usize) -> Result<MarketModel<T>> {
    let steps = rng.random_range(1..=max_steps);
    let u = rng.random_range(101..300);
    let d = rng.random_range(21..100);
    let pu = rng.random_range(5..=90);
    let pm = rng.random_range(5..=95 - pu);
    let pd = 100 - pu - pm;
    let s0 = rng.random_range(100..=1000);
    gen_trinomial(
        cents(s0),
        cents(u),
        cents(d),
        [cents(pu), cents(pm), cents(pd)],
        steps,
        T::zero(),
    )
}

/// A call with a strike drawn from the range of terminal prices, or a random
/// leaf table, with equal odds.
pub fn random_claim<T: Scalar, R: Rng>(rng: &mut R, model: &MarketModel<T>) -> Result<Claim<T>> {
    if rng.random_bool(0.5) {
        return random_leaf_claim(rng, model);
    }
    let raw = model.raw_stock();
    let (lo, hi) = model.tree.leaves().iter().fold((f64::MAX, 0.0f64), |(lo, hi), &l| {
        let x = raw.get(l).to_f64();
        (lo.min(x), hi.max(x))
    });
    let k = rng.random_range((lo * 100.0).floor() as i64..=(hi * 100.0).ceil() as i64);
    payoff_claim(
        model,
        &ClaimKind::Call {
            strike: cents(k.max(0)),
        },
    )
}
