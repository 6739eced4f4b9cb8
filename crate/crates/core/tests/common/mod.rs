#![allow(dead_code)]

use rand::Rng;
use steercert_core::random::{derive_seed, seeded_rng};
use steercert_core::states::SchmidtVector;

/// Seeded Schmidt vectors with every coefficient at least `min_alpha`.
pub fn random_alphas(d: usize, count: usize, min_alpha: f64, seed: u64) -> Vec<SchmidtVector> {
    (0..count)
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(seed, i as u64));
            SchmidtVector::random(d, min_alpha, &mut rng).expect("sampler converges")
        })
        .collect()
}

/// Seeded α with α_i ≥ 1/d for i ≤ d−2 and α_{d−1} ≥ 0.05, as the partial
/// POVM construction requires.
pub fn admissible_partial_alpha(d: usize, seed: u64) -> SchmidtVector {
    let mut rng = seeded_rng(seed);
    let floor = 1.0 / d as f64;
    loop {
        let head: Vec<f64> = (0..d - 1).map(|_| floor + rng.random_range(0.0..0.5 * floor)).collect();
        let used: f64 = head.iter().map(|a| a * a).sum();
        if used < 1.0 - 0.05 * 0.05 {
            let mut alpha = head;
            alpha.push((1.0 - used).sqrt());
            return SchmidtVector::new(alpha).expect("normalized by construction");
        }
    }
}
