//! Command-line front end and HTTP service for projected treatment-effect
//! posteriors.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod artifact;
pub mod cli;
pub mod commands;
pub mod error;
pub mod report;
pub mod service;
pub mod subset_spec;

pub use error::{CliError, Result};
