//! Posterior containers shared by the fitting and projection code.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Which first-stage fit produced a set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FlatAnalyticSampled,
    HorseshoeRic,
}

/// `S` joint draws of ψ = [τ βᵀ]ᵀ with per-draw noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    psi: DMatrix<f64>,
    sigma_eps: DVector<f64>,
    provenance: Provenance,
    chain: Vec<u32>,
    iter: Vec<u32>,
}

impl PosteriorDraws {
    /// Draws from a single chain numbered `0..S`.
    pub fn new(psi: DMatrix<f64>, sigma_eps: DVector<f64>, provenance: Provenance) -> Result<Self> {
        let s = psi.nrows();
        let iter = (0..s as u32).collect();
        Self::with_chains(psi, sigma_eps, provenance, vec![0; s], iter)
    }

    pub fn with_chains(
        psi: DMatrix<f64>,
        sigma_eps: DVector<f64>,
        provenance: Provenance,
        chain: Vec<u32>,
        iter: Vec<u32>,
    ) -> Result<Self> {
        let s = psi.nrows();
        if s == 0 || psi.ncols() == 0 {
            return Err(Error::Empty("posterior draws"));
        }
        for len in [sigma_eps.len(), chain.len(), iter.len()] {
            if len != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    found: len,
                });
            }
        }
        if !psi.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite coefficient draw".into()));
        }
        if !sigma_eps.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Numerical(
                "noise scale draws must be finite and positive".into(),
            ));
        }
        Ok(Self {
            psi,
            sigma_eps,
            provenance,
            chain,
            iter,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.psi.nrows()
    }

    /// Dimension of ψ (p + 1 for a full-model posterior).
    pub fn dim(&self) -> usize {
        self.psi.ncols()
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn tau(&self) -> Vec<f64> {
        self.psi.column(0).iter().copied().collect()
    }

    pub fn sigma_eps(&self) -> &DVector<f64> {
        &self.sigma_eps
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn chain(&self) -> &[u32] {
        &self.chain
    }

    pub fn iter(&self) -> &[u32] {
        &self.iter
    }

    /// Column means of ψ.
    pub fn mean(&self) -> DVector<f64> {
        let s = self.n_draws() as f64;
        DVector::from_iterator(self.dim(), self.psi.column_iter().map(|c| c.sum() / s))
    }

    /// Same draws with a new coefficient matrix (used by projection).
    pub(crate) fn with_psi(&self, psi: DMatrix<f64>) -> Self {
        Self {
            psi,
            sigma_eps: self.sigma_eps.clone(),
            provenance: self.provenance,
            chain: self.chain.clone(),
            iter: self.iter.clone(),
        }
    }

    /// Values of coordinate `j`, grouped by chain index in ascending order.
    pub fn by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        let mut ids: Vec<u32> = self.chain.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|&c| {
                (0..self.n_draws())
                    .filter(|&i| self.chain[i] == c)
                    .map(|i| self.psi[(i, j)])
                    .collect()
            })
            .collect()
    }
}

/// Exact Gaussian posterior `N(mean, cov)` for ψ at a fixed noise scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub sigma_eps: f64,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, sigma_eps: f64) -> Result<Self> {
        let m = mean.len();
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: cov.nrows(),
            });
        }
        if !(sigma_eps > 0.0) {
            return Err(Error::Invalid("sigma_eps must be positive".into()));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale.max(1.0) {
            return Err(Error::Numerical(
                "posterior covariance is not symmetric".into(),
            ));
        }
        let jitter = &cov + DMatrix::identity(m, m) * 1e-12;
        Cholesky::factor_with_threshold(&jitter, 0.0).map_err(|_| {
            Error::Numerical("posterior covariance is not positive semidefinite".into())
        })?;
        Ok(Self {
            mean,
            cov,
            sigma_eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn tau_mean(&self) -> f64 {
        self.mean[0]
    }

    pub fn tau_var(&self) -> f64 {
        self.cov[(0, 0)]
    }
}

/// Mean, sd, and central 95% interval of a scalar posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl TauSummary {
    pub fn from_draws(draws: &[f64]) -> Self {
        let (mean, sd) = mean_sd(draws);
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            sd,
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }

    /// Normal-theory summary (for analytic posteriors).
    pub fn gaussian(mean: f64, var: f64) -> Self {
        let sd = var.max(0.0).sqrt();
        const Z975: f64 = 1.959_963_984_540_054;
        Self {
            mean,
            sd,
            q025: mean - Z975 * sd,
            q975: mean + Z975 * sd,
        }
    }
}

/// Sample mean and (n − 1)-denominator standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One greedy removal.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    /// Control index (0-based into the control list).
    pub removed: usize,
    pub distance: f64,
    pub tau: TauSummary,
    pub draws: Option<Vec<f64>>,
}

/// Removal order with the projected treatment posterior after each step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepwisePath {
    pub steps: Vec<PathStep>,
}

impl StepwisePath {
    pub fn removed(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.removed).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.distance).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Step (1-based) at which control `j` was removed, if it was.
    pub fn removal_step(&self, j: usize) -> Option<usize> {
        self.steps
            .iter()
            .position(|s| s.removed == j)
            .map(|k| k + 1)
    }
}
