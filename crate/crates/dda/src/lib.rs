//! Distributed dual averaging over random gossip networks.
//!
//! Simulates constrained stochastic optimization by a network of agents that
//! mix dual variables through randomized gossip and project onto a polyhedron,
//! plus the statistical machinery to validate the algorithm's asymptotics
//! (consensus decay, active-set identification, normality of scaled errors,
//! efficiency of averaged iterates).
//!
//! See the `examples/` directory for one runnable program per capability; the
//! crate-level catalog lives in the README.

pub mod algorithms;
pub mod analysis;
pub mod config;
pub mod driver;
pub mod linalg;
pub mod network;
pub mod output;
pub mod polyhedron;
pub mod problem;

/// Dense double-precision matrix used throughout (row-major construction).
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense double-precision column vector.
pub type Vector = nalgebra::DVector<f64>;

/// Derives a child seed from a master seed and a stream index (splitmix64 of
/// `master XOR golden·(index+1)`). Stream 0 is reserved for instance
/// generation; replication i uses stream i+1. Distinct indices give
/// independent-quality streams while keeping every run reproducible from the
/// single master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
