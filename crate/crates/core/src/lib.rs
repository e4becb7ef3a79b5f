//! Projected posteriors for a treatment effect under nested control sets.
//!
//! Fit a full-model posterior over ψ = [τ βᵀ]ᵀ, then map each draw through
//! the linear operator that summarizes it on a smaller control set. The
//! backward stepwise search orders controls by how little their removal
//! moves the treatment posterior.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytic;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod posterior;
pub mod projector;
pub mod sampler;
pub mod simgen;

pub use analytic::{
    fit_flat_posterior, project_gaussian, refit_gaussian, sample_flat_posterior, NoiseScale,
};
pub use data::{load_dataset, ControlSubset, Dataset, DesignGram};
pub use diagnostics::{summarize_draws, DrawSummary};
pub use error::{Error, Result};
pub use posterior::{GaussianPosterior, PosteriorDraws, Provenance, StepwisePath, TauSummary};
pub use projector::{
    backward_stepwise, build_operator, diff_mean, project_draws, DiffMean, Metric,
    ProjectionOperator, StopRule,
};
pub use sampler::{gibbs_ric, ric_to_standard, RicDraws, SamplerConfig};
