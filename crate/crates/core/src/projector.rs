//! Draw-wise posterior projection onto nested control subsets and the
//! backward-stepwise removal path.
//!
//! A draw ψ of the full outcome regression maps to `ψ̃ = A ψ` with
//! `A = (W̃ᵀW̃)⁻¹W̃ᵀW`. Since `W̃` is a column subset of `W`, `A` restricted
//! to the kept coordinates is exactly the identity; only the columns for
//! excluded controls carry information.
//!
//! In the removal loop the projected treatment effect only needs row 0 of
//! `A`, which is `e₀ᵀ(W̃ᵀW̃)⁻¹ · W̃ᵀW`. Candidate factors are obtained by
//! deleting one column from the current Cholesky factor instead of
//! refactorizing.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{ControlSubset, Dataset, DesignGram};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::posterior::{PathStep, PosteriorDraws, StepwisePath, TauSummary};

/// Tolerance on the identity sub-block of a freshly solved operator.
const IDENTITY_BLOCK_TOL: f64 = 1e-10;

/// `A = (W̃₁ᵀW̃₁)⁻¹W̃₁ᵀW̃₀`, mapping coefficients on a parent design `W̃₀` to a
/// nested child design `W̃₁`. With the full design as parent this is the
/// usual `(W̃ᵀW̃)⁻¹W̃ᵀW`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionOperator {
    a: DMatrix<f64>,
    subset: ControlSubset,
    parent: ControlSubset,
}

impl ProjectionOperator {
    pub fn from_gram(gram: &DesignGram, phi: &ControlSubset) -> Result<Self> {
        Self::nested(gram, &ControlSubset::full(gram.p()), phi)
    }

    /// Operator from the `parent` subset's coordinates to `child`'s.
    pub fn nested(
        gram: &DesignGram,
        parent: &ControlSubset,
        child: &ControlSubset,
    ) -> Result<Self> {
        parent.check_len(gram.p())?;
        child.check_len(gram.p())?;
        if (0..gram.p()).any(|j| child.contains(j) && !parent.contains(j)) {
            return Err(Error::Invalid(
                "child subset is not nested in the parent subset".into(),
            ));
        }
        let from = parent.kept_coordinates();
        let to = child.kept_coordinates();
        if from == to {
            let m = from.len();
            return Ok(Self {
                a: DMatrix::identity(m, m),
                subset: child.clone(),
                parent: parent.clone(),
            });
        }
        let chol = gram.factor(child)?;
        let rhs = DMatrix::from_fn(to.len(), from.len(), |i, j| gram.at(to[i], from[j]));
        let mut a = chol.solve_mat(&rhs);

        // Columns of A for kept coordinates form the identity.
        for (i, &c) in to.iter().enumerate() {
            let col = from.iter().position(|&f| f == c).expect("nested");
            for r in 0..to.len() {
                let expect = if r == i { 1.0 } else { 0.0 };
                let got = a[(r, col)];
                if (got - expect).abs() > IDENTITY_BLOCK_TOL {
                    return Err(Error::Numerical(format!(
                        "projection identity block off by {:.3e}; reduced design is ill conditioned",
                        (got - expect).abs()
                    )));
                }
                a[(r, col)] = expect;
            }
        }
        Ok(Self {
            a,
            subset: child.clone(),
            parent: parent.clone(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn subset(&self) -> &ControlSubset {
        &self.subset
    }

    pub fn parent(&self) -> &ControlSubset {
        &self.parent
    }

    pub fn is_identity(&self) -> bool {
        self.a.nrows() == self.a.ncols() && self.subset == self.parent
    }

    /// Row 0 of `A`: the weights giving the projected treatment effect.
    pub fn tau_row(&self) -> DVector<f64> {
        self.a.row(0).transpose()
    }
}

/// `A = (W̃ᵀW̃)⁻¹W̃ᵀW` for the subset `phi` of `ds`'s controls.
pub fn build_operator(ds: &Dataset, phi: &ControlSubset) -> Result<ProjectionOperator> {
    ProjectionOperator::from_gram(&DesignGram::from_dataset(ds), phi)
}

/// `ψ̃ = A ψ` for every draw; σ_ε is carried through.
pub fn project_draws(draws: &PosteriorDraws, op: &ProjectionOperator) -> Result<PosteriorDraws> {
    if draws.dim() != op.a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: op.a.ncols(),
            found: draws.dim(),
        });
    }
    if op.is_identity() {
        return Ok(draws.clone());
    }
    let psi = draws.psi() * op.a.transpose();
    Ok(draws.with_psi(psi))
}

/// Projected treatment-effect draws `ψ · a₀` for weights `a₀`.
pub fn project_tau(draws: &PosteriorDraws, tau_row: &DVector<f64>) -> Result<Vec<f64>> {
    if draws.dim() != tau_row.len() {
        return Err(Error::DimensionMismatch {
            expected: tau_row.len(),
            found: draws.dim(),
        });
    }
    Ok((draws.psi() * tau_row).iter().copied().collect())
}

/// Squared difference in posterior means, `(τ̄ − τ̄ₖ)²`.
pub fn diff_mean(p_orig_tau: &[f64], p_proj_tau: &[f64]) -> Result<f64> {
    if p_orig_tau.is_empty() || p_proj_tau.is_empty() {
        return Err(Error::Empty("treatment-effect draws"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let d = mean(p_orig_tau) - mean(p_proj_tau);
    Ok(d * d)
}

/// Distance between the original and a projected treatment posterior,
/// both given as draw vectors.
pub trait Metric: Sync {
    fn distance(&self, original: &[f64], projected: &[f64]) -> f64;

    fn name(&self) -> &str {
        "custom"
    }
}

/// The squared difference in means.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiffMean;

impl Metric for DiffMean {
    fn distance(&self, original: &[f64], projected: &[f64]) -> f64 {
        diff_mean(original, projected).unwrap_or(f64::NAN)
    }

    fn name(&self) -> &str {
        "d_M"
    }
}

impl<F> Metric for F
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    fn distance(&self, original: &[f64], projected: &[f64]) -> f64 {
        self(original, projected)
    }
}

/// When to stop removing controls. The default runs until only the
/// treatment remains.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StopRule {
    /// Stop once this many controls remain.
    pub keep: Option<usize>,
    /// Stop, without recording the step, once the smallest candidate
    /// distance exceeds this value.
    pub max_distance: Option<f64>,
    /// Keep each step's projected treatment draws on the path.
    pub keep_draws: bool,
}

/// Backward-stepwise removal of controls (squared-difference-in-means or
/// any other [`Metric`]).
///
/// At each step every remaining control is tentatively excluded; the one
/// whose exclusion moves the treatment posterior least is removed. Ties go
/// to the lowest column index. Candidates whose reduced design is rank
/// deficient are skipped with a warning.
pub fn backward_stepwise(
    ds: &Dataset,
    draws: &PosteriorDraws,
    metric: &dyn Metric,
    stop: StopRule,
) -> Result<StepwisePath> {
    backward_stepwise_gram(&DesignGram::from_dataset(ds), draws, metric, stop)
}

struct Candidate {
    control: usize,
    distance: f64,
    chol: Cholesky,
    tau: Vec<f64>,
}

pub fn backward_stepwise_gram(
    gram: &DesignGram,
    draws: &PosteriorDraws,
    metric: &dyn Metric,
    stop: StopRule,
) -> Result<StepwisePath> {
    let p = gram.p();
    if draws.dim() != p + 1 {
        return Err(Error::DimensionMismatch {
            expected: p + 1,
            found: draws.dim(),
        });
    }
    let keep = stop.keep.unwrap_or(0);
    if keep > p {
        return Err(Error::Config(format!("cannot keep {keep} of {p} controls")));
    }
    let original_tau = draws.tau();
    let mut current = ControlSubset::full(p);
    let mut chol = gram.factor(&current).ok();
    let mut path = StepwisePath::default();

    for step in 1..=(p - keep) {
        let remaining = current.included();
        let candidates: Vec<Candidate> = remaining
            .par_iter()
            .enumerate()
            .filter_map(|(pos, &r)| {
                let subset = current.without(r);
                // kept coordinate `pos + 1` is control r
                let factor = chol
                    .as_ref()
                    .and_then(|c| c.delete(pos + 1).ok())
                    .or_else(|| gram.factor(&subset).ok());
                let Some(factor) = factor else {
                    warn!(
                        "step {step}: skipping `{}`, reduced design is rank deficient",
                        gram.control_names[r]
                    );
                    return None;
                };
                let row = tau_row_from_factor(gram, &subset, &factor);
                let tau = project_tau(draws, &row).ok()?;
                let distance = metric.distance(&original_tau, &tau);
                if distance.is_nan() {
                    warn!(
                        "step {step}: metric undefined for `{}`",
                        gram.control_names[r]
                    );
                    return None;
                }
                Some(Candidate {
                    control: r,
                    distance,
                    chol: factor,
                    tau,
                })
            })
            .collect();

        // candidates are in ascending control order, so the first minimum wins ties
        let best = candidates
            .into_iter()
            .reduce(|a, b| if b.distance < a.distance { b } else { a })
            .ok_or(Error::Path { step })?;
        if stop.max_distance.is_some_and(|t| best.distance > t) {
            break;
        }
        path.steps.push(PathStep {
            removed: best.control,
            distance: best.distance,
            tau: TauSummary::from_draws(&best.tau),
            draws: stop.keep_draws.then_some(best.tau),
        });
        current = current.without(best.control);
        chol = Some(best.chol);
    }
    Ok(path)
}

/// `e₀ᵀ (W̃ᵀW̃)⁻¹ W̃ᵀW` from a factor of `W̃ᵀW̃`.
fn tau_row_from_factor(
    gram: &DesignGram,
    subset: &ControlSubset,
    factor: &Cholesky,
) -> DVector<f64> {
    let keep = subset.kept_coordinates();
    let mut e0 = DVector::zeros(keep.len());
    e0[0] = 1.0;
    let u = factor.solve(&e0);
    let m = gram.p() + 1;
    let mut row = DVector::zeros(m);
    for j in 0..m {
        row[j] = keep
            .iter()
            .zip(u.iter())
            .map(|(&k, ui)| ui * gram.at(k, j))
            .sum();
    }
    // kept coordinates are exact
    for (i, &k) in keep.iter().enumerate() {
        row[k] = if i == 0 { 1.0 } else { 0.0 };
    }
    row
}

/// Treatment-effect weights for `phi`, using a cached factor when given.
pub fn tau_row(gram: &DesignGram, phi: &ControlSubset) -> Result<DVector<f64>> {
    if phi.is_full() {
        let mut row = DVector::zeros(gram.p() + 1);
        row[0] = 1.0;
        return Ok(row);
    }
    let factor = gram.factor(phi)?;
    Ok(tau_row_from_factor(gram, phi, &factor))
}
