//! Learning conditional exponential-family models (log-linear classifiers and
//! linear-chain CRFs) from labeled and unlabeled data with auxiliary
//! expectation constraints, trained by alternating information and moment
//! projections.

pub mod cli;
pub mod constraints;
pub mod error;
pub mod eval;
pub mod ge;
pub mod gibbs;
pub mod io;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod projections;
pub mod synth;

pub use error::{Error, Result};
