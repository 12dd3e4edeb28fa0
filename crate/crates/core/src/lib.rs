//! Federated, differentially-private cycle-consistent image translation.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod dp;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod federation;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
