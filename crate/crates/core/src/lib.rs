//! Discrete-time Föllmer-Schweizer decomposition of contingent claims on
//! finite filtration trees, with stability and first-order sensitivity of the
//! decomposition under drift/volatility perturbations of the stock.
//!
//! Everything is generic over [`Scalar`], so the same code runs with `f64` or
//! with exact rationals.

pub mod cli;
pub mod decomposition;
pub mod error;
pub mod filtration;
pub mod fixtures;
pub mod io;
pub mod models;
pub mod oracle;
pub mod perturbation;
pub mod report;
pub mod scalar;

pub use decomposition::{fs_decompose, sequential_regression, Degeneracy, FsDecomposition};
pub use error::{Error, Result};
pub use filtration::{AdaptedProcess, FiltrationTree, NodeId, PredictableProcess};
pub use models::{Claim, ClaimKind, MarketModel};
pub use perturbation::{asymptotic_expansion, theta_prime, AsymptoticExpansion, PerturbationSpec};
pub use scalar::{Mode, Rational, Scalar};
