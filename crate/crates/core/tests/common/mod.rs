#![allow(dead_code)]

use msn_sched::Instance;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with `τ ∈ [1, 10]`, `w ∈ [1, 10]`, `λ ∈ [0.1, 2]`.
///
/// Service times stay at or above one unit: the first LP interval has unit
/// length, and the relaxation only bounds the optimum from below on that scale.
pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize) -> Instance {
    let tasks: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0)))
        .collect();
    let rates: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..2.0)).collect();
    Instance::from_rates(&tasks, &rates).expect("valid random instance")
}

/// Same as [`random_instance`] with `n ∈ [1, max_n]`, `m ∈ [1, max_m]`.
pub fn random_small(rng: &mut impl Rng, max_n: usize, max_m: usize) -> Instance {
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(1..=max_m);
    random_instance(rng, n, m)
}
