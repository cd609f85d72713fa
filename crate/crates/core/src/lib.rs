//! Cubic regularized Newton with affine scaling (CRNAS) for
//! `min L(θ) s.t. Aθ = b, θ ≥ 0`, together with a first-order variant,
//! three biological parameter-estimation objectives, synthetic data
//! generators and a multi-start benchmark harness.

pub mod barrier;
pub mod bench;
pub mod biomodels;
pub mod datagen;
pub mod error;
pub mod problem;
pub mod solver;
pub mod subproblem;

pub use error::{CrnasError, Result};
