//! Shared fixtures for the kernel benchmarks.

use rbm_core::catalog::{atlas_spec, random_admissible, rank_based_params};
use rbm_core::{admissible, DerivedModel, ModelParams};

/// Atlas gap model with `n` particles.
pub fn atlas(n: usize) -> (ModelParams, DerivedModel) {
    let p = rank_based_params(&atlas_spec(n).expect("n >= 2")).expect("valid spec");
    let dm = admissible(&p).expect("atlas is admissible");
    (p, dm)
}

/// Dense random admissible model of dimension `d`.
pub fn dense(d: usize, seed: u64) -> (ModelParams, DerivedModel) {
    let p = random_admissible(d, seed).expect("d >= 1");
    let dm = admissible(&p).expect("generator yields admissible models");
    (p, dm)
}

/// Deterministic pre-reflection point with a mix of signs.
pub fn mixed_point(d: usize) -> Vec<f64> {
    (0..d).map(|i| if i % 3 == 0 { -0.4 } else { 0.3 + 0.1 * i as f64 }).collect()
}
