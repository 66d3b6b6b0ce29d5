//! Permutation tests for a single regression coefficient in the presence of
//! nuisance covariates: PALMRT, the conformal permutation test (CPT), their
//! weighted variants, design-adaptive block groups and a simulation harness.

pub mod cli;
pub mod cpt;
pub mod data;
pub mod error;
pub mod group_file;
pub mod linalg;
pub mod optimizer;
pub mod palmrt;
pub mod perm;
pub mod rng;
pub mod sim;
pub mod weighted;

pub use error::{Error, Result};
