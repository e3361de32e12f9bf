//! Clustering via the relaxed K-means semidefinite program.
//!
//! The toolkit covers the full pipeline: sampling sub-Gaussian mixtures and
//! stochastic block models, solving the relaxed K-means SDP with a
//! projection-splitting method, trace debiasing for unequal-covariance
//! mixtures, K-medoids rounding of the solver output, and the analytics used
//! to study partial-recovery behaviour (misclassification metric, SNR
//! functionals, brute-force oracles, divergence bounds).

pub mod analysis;
pub mod debias;
pub mod error;
pub mod generators;
pub mod io;
pub mod model;
pub mod rounding;
pub mod seeding;
pub mod solver;

mod assignment;
mod linalg;

pub use error::{Error, Result};
pub use model::{
    block_l1_discrepancy, lemma9_bound, misclassification_error, L1Discrepancy, Partition,
    PartitionMatrix,
};
