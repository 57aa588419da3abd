//! Robust phenotype optimization under climatic uncertainty.
//!
//! The pipeline selects a small representative subset of climate series
//! (DTW + model-based dissimilarities, relational k-means), reconstructs
//! full yield distributions non-parametrically from subset evaluations,
//! and runs a two-step bi-objective (expectation vs CVaR) particle swarm
//! optimization, with random-search and full-set baselines and Pareto
//! front quality indicators for method comparison.

pub mod climate;
pub mod cluster;
pub mod cropmodel;
pub mod dissim;
pub mod error;
pub mod experiment;
pub mod indicators;
pub mod moo;
pub mod reconstruct;

pub use error::Error;

/// Numerical tolerance for degeneracy detection (zero scales, weight sums).
pub const EPS_NUM: f64 = 1e-12;

/// Derives an independent child seed from a master seed and a stream path.
///
/// Used everywhere a sub-computation (site, restart, particle, replication)
/// needs its own reproducible random stream: results do not depend on the
/// order in which sub-computations run.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    // splitmix64-style mixing, one round per path component
    let mut z = master;
    for &p in path {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
