//! Closed-form results under flat priors on ψ with a known noise scale.
//!
//! The full-model posterior is `N(ψ̂, σ²(WᵀW)⁻¹)`; projecting it onto a
//! nested design `W̃` gives `N((W̃ᵀW̃)⁻¹W̃ᵀY, σ²(W̃ᵀW̃)⁻¹)`, and a refit on
//! `W̃` differs only through the noise scale. Marginals for τ are computed
//! by partialling the controls out of `Z` and `Y` (Frisch–Waugh–Lovell), an
//! independent route from the joint Gram inverse.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{subset_design, ControlSubset, Dataset, DesignGram};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, Cholesky, PIVOT_RTOL};
use crate::posterior::{GaussianPosterior, PosteriorDraws, Provenance};
use crate::projector::ProjectionOperator;

/// Univariate Gaussian marginal of τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauMarginal {
    pub mean: f64,
    pub variance: f64,
}

/// `N(ψ̂, σ²(WᵀW)⁻¹)` with `ψ̂ = (WᵀW)⁻¹WᵀY`.
pub fn fit_flat_posterior(ds: &Dataset, sigma_eps: f64) -> Result<GaussianPosterior> {
    fit_flat_from_gram(&DesignGram::from_dataset(ds), sigma_eps)
}

pub fn fit_flat_from_gram(gram: &DesignGram, sigma_eps: f64) -> Result<GaussianPosterior> {
    check_sigma(sigma_eps)?;
    let full = ControlSubset::full(gram.p());
    let (mean, cov) = ols_on_subset(gram, &full, sigma_eps)?;
    GaussianPosterior::new(mean, cov, sigma_eps)
}

/// Noise-scale handling for sampled flat-prior posteriors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    Known(f64),
    /// σ² drawn from its marginal under `π(σ²) ∝ 1/σ²`.
    Jeffreys,
}

/// Exact i.i.d. draws from the flat-prior posterior.
///
/// With a known σ this samples `N(ψ̂, σ²(WᵀW)⁻¹)`. Under Jeffreys, each draw
/// first takes `σ² ~ IG((n − p − 1)/2, RSS/2)` and then ψ given σ².
pub fn sample_flat_posterior(
    gram: &DesignGram,
    noise: NoiseScale,
    n_draws: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    if n_draws == 0 {
        return Err(Error::Empty("requested draw count"));
    }
    let m = gram.p() + 1;
    let chol = gram.factor(&ControlSubset::full(gram.p()))?;
    let mean = chol.solve(&gram.wty());
    let rss = (gram.yty() - mean.dot(&gram.wty())).max(0.0);
    let dof = gram.n as f64 - m as f64;

    let inv_gamma = match noise {
        NoiseScale::Known(s) => {
            check_sigma(s)?;
            None
        }
        NoiseScale::Jeffreys => {
            if !(dof > 0.0) || !(rss > 0.0) {
                return Err(Error::Numerical(
                    "residual degrees of freedom or residual sum of squares is zero".into(),
                ));
            }
            // 1/σ² ~ Gamma(shape = dof/2, scale = 2/RSS)
            Some(Gamma::new(dof / 2.0, 2.0 / rss).map_err(|e| Error::Numerical(e.to_string()))?)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = chol.l();
    let mut psi = DMatrix::zeros(n_draws, m);
    let mut sig = DVector::zeros(n_draws);
    let mut xi = vec![0.0; m];
    for s in 0..n_draws {
        let sigma = match (&inv_gamma, noise) {
            (Some(g), _) => 1.0 / g.sample(&mut rng).sqrt(),
            (None, NoiseScale::Known(v)) => v,
            _ => unreachable!(),
        };
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        // Lᵀ u = ξ gives u ~ N(0, (L Lᵀ)⁻¹)
        for i in (0..m).rev() {
            let mut acc = xi[i];
            for k in (i + 1)..m {
                acc -= l[(k, i)] * xi[k];
            }
            xi[i] = acc / l[(i, i)];
        }
        for j in 0..m {
            psi[(s, j)] = mean[j] + sigma * xi[j];
        }
        sig[s] = sigma;
    }
    PosteriorDraws::new(psi, sig, Provenance::FlatAnalyticSampled)
}

/// Projects the full-model flat posterior onto the subset `phi`.
///
/// Returns `N((W̃ᵀW̃)⁻¹W̃ᵀY, σ²(W̃ᵀW̃)⁻¹)`. The closed form relies on
/// `P_W W̃ = W̃`; it is checked against the operator route `A ψ̂` and the
/// call fails when `post` does not belong to `ds`.
pub fn project_gaussian(
    post: &GaussianPosterior,
    ds: &Dataset,
    phi: &ControlSubset,
) -> Result<GaussianPosterior> {
    phi.check_len(ds.p())?;
    if post.dim() != ds.p() + 1 {
        return Err(Error::DimensionMismatch {
            expected: ds.p() + 1,
            found: post.dim(),
        });
    }
    if phi.is_full() {
        return Ok(post.clone());
    }
    let gram = DesignGram::from_dataset(ds);
    let (mean, cov) = ols_on_subset(&gram, phi, post.sigma_eps)?;

    let op = ProjectionOperator::from_gram(&gram, phi)?;
    let via_operator = op.matrix() * &post.mean;
    let scale = max_abs_vec(&mean)
        .max(max_abs_vec(&post.mean))
        .max(f64::MIN_POSITIVE);
    let gap = max_abs_vec(&(&via_operator - &mean));
    if gap > 1e-8 * scale {
        return Err(Error::Invalid(format!(
            "posterior mean is not the flat-prior fit of this dataset (projection gap {gap:.3e})"
        )));
    }
    GaussianPosterior::new(mean, cov, post.sigma_eps)
}

/// Posterior from refitting on `W̃` with noise scale `sigma_eps_refit`.
pub fn refit_gaussian(
    ds: &Dataset,
    phi: &ControlSubset,
    sigma_eps_refit: f64,
) -> Result<GaussianPosterior> {
    refit_from_gram(&DesignGram::from_dataset(ds), phi, sigma_eps_refit)
}

pub fn refit_from_gram(
    gram: &DesignGram,
    phi: &ControlSubset,
    sigma_eps_refit: f64,
) -> Result<GaussianPosterior> {
    check_sigma(sigma_eps_refit)?;
    let (mean, cov) = ols_on_subset(gram, phi, sigma_eps_refit)?;
    GaussianPosterior::new(mean, cov, sigma_eps_refit)
}

/// `sqrt(RSS / (n − q − 1))` of the reduced regression of Y on `W̃`.
pub fn residual_sigma(gram: &DesignGram, phi: &ControlSubset) -> Result<f64> {
    let chol = gram.factor(phi)?;
    let keep = phi.kept_coordinates();
    let wty = gram.wty();
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| wty[k]));
    let coef = chol.solve(&rhs);
    let rss = (gram.yty() - coef.dot(&rhs)).max(0.0);
    let dof = gram.n as f64 - keep.len() as f64;
    if !(dof > 0.0) {
        return Err(Error::Rank("no residual degrees of freedom".into()));
    }
    Ok((rss / dof).sqrt())
}

/// `((W̃ᵀW̃)⁻¹W̃ᵀY, σ²(W̃ᵀW̃)⁻¹)`; the single formula behind projection and refit.
fn ols_on_subset(
    gram: &DesignGram,
    phi: &ControlSubset,
    sigma: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = gram.factor(phi)?;
    let keep = phi.kept_coordinates();
    let wty = gram.wty();
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| wty[k]));
    let mean = chol.solve(&rhs);
    let cov = chol.inverse() * (sigma * sigma);
    Ok((mean, cov))
}

/// τ marginal of the full-model posterior, by partialling X out of Z and Y.
pub fn tau_marginal_original(ds: &Dataset, sigma_eps: f64) -> Result<TauMarginal> {
    tau_marginal_projected(ds, &ControlSubset::full(ds.p()), sigma_eps)
}

/// τ marginal of the projected posterior: as above with `X̃` in place of X.
pub fn tau_marginal_projected(
    ds: &Dataset,
    phi: &ControlSubset,
    sigma_eps: f64,
) -> Result<TauMarginal> {
    check_sigma(sigma_eps)?;
    let (wt, _) = subset_design(ds, phi)?;
    let xt = wt.columns(1, wt.ncols() - 1).into_owned();
    let names = included_names(ds, phi);
    let rz = residualize(&xt, ds.z(), &names)?;
    let ry = residualize(&xt, ds.y(), &names)?;
    let zz = treatment_precision(ds, &xt, &rz)?;
    Ok(TauMarginal {
        mean: rz.dot(&ry) / zz,
        variance: sigma_eps * sigma_eps / zz,
    })
}

/// `var_orig(τ) − var_proj(τ)` in closed form:
/// `σ² · ZᵀP_X(I − P_X̃)P_X Z / (Zᵀ(I − P_X)Z · Zᵀ(I − P_X̃)Z)`.
///
/// The numerator is evaluated as `‖(I − P_X̃) P_X Z‖²`, so it is a sum of
/// squares and never negative.
pub fn variance_difference(ds: &Dataset, phi: &ControlSubset, sigma_eps: f64) -> Result<f64> {
    check_sigma(sigma_eps)?;
    phi.check_len(ds.p())?;
    let full_names = ds.control_names().to_vec();
    let rz_full = residualize(ds.x(), ds.z(), &full_names)?;
    let d_full = treatment_precision(ds, ds.x(), &rz_full)?;
    if phi.is_full() {
        return Ok(0.0);
    }

    let (wt, _) = subset_design(ds, phi)?;
    let xt = wt.columns(1, wt.ncols() - 1).into_owned();
    let names = included_names(ds, phi);
    let rz_sub = residualize(&xt, ds.z(), &names)?;
    let d_sub = treatment_precision(ds, &xt, &rz_sub)?;

    let fitted = ds.z() - &rz_full; // P_X Z
    let resid = residualize(&xt, &fitted, &names)?; // (I − P_X̃) P_X Z
    let numerator = resid.dot(&resid);
    Ok(sigma_eps * sigma_eps * numerator / (d_full * d_sub))
}

fn included_names(ds: &Dataset, phi: &ControlSubset) -> Vec<String> {
    phi.included()
        .into_iter()
        .map(|j| ds.control_names()[j].clone())
        .collect()
}

/// `Zᵀ(I − P_X)Z`, failing when the treatment is (numerically) in the span
/// of the controls.
fn treatment_precision(ds: &Dataset, x: &DMatrix<f64>, rz: &DVector<f64>) -> Result<f64> {
    let zz = rz.dot(rz);
    let max_diag = x
        .column_iter()
        .map(|c| c.dot(&c))
        .fold(ds.z().dot(ds.z()), f64::max);
    let threshold = PIVOT_RTOL * max_diag;
    if !(zz > threshold) {
        return Err(Error::RankDeficient {
            column: "treatment".into(),
            pivot: zz,
            threshold,
        });
    }
    Ok(zz)
}

/// `(I − P_X) v` via a Cholesky solve on `XᵀX`.
fn residualize(x: &DMatrix<f64>, v: &DVector<f64>, names: &[String]) -> Result<DVector<f64>> {
    if x.ncols() == 0 {
        return Ok(v.clone());
    }
    let chol = Cholesky::factor(&x.tr_mul(x)).map_err(|f| Error::RankDeficient {
        column: names[f.index].clone(),
        pivot: f.pivot,
        threshold: f.threshold,
    })?;
    let coef = chol.solve(&x.tr_mul(v));
    Ok(v - x * coef)
}

fn check_sigma(s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Invalid(format!(
            "noise scale must be positive and finite, got {s}"
        )));
    }
    Ok(())
}

fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Largest size for which dense `n × n` projection matrices are formed.
pub const MAX_DENSE_N: usize = 2000;

/// Relative tolerance for identity checks.
pub const IDENTITY_RTOL: f64 = 1e-8;

/// Ridge levels for the limit form of the Sherman–Morrison check.
pub const RIDGE_LEVELS: [f64; 2] = [1e-4, 1e-6];

/// Maximum relative errors of the block-inverse identities, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityReport {
    pub errors: BTreeMap<String, f64>,
}

impl IdentityReport {
    /// Names of identities that failed their check.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .errors
            .iter()
            .filter(|(k, v)| !k.starts_with("sherman_morrison_ridge") && !(**v <= IDENTITY_RTOL))
            .map(|(k, _)| k.clone())
            .collect();
        let coarse = self.errors.get(&ridge_key(RIDGE_LEVELS[0]));
        let fine = self.errors.get(&ridge_key(RIDGE_LEVELS[1]));
        if let (Some(c), Some(f)) = (coarse, fine) {
            if !(f < c) {
                out.push("sherman_morrison_ridge".into());
            }
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

fn ridge_key(eps: f64) -> String {
    format!("sherman_morrison_ridge_{eps:e}")
}

/// Checks the block-inverse identities behind the closed forms, using
/// explicit `n × n` projection matrices.
///
/// With `W` reordered as `[W̃ X†]` and `Q = (WᵀW)⁻¹` computed by LU:
/// - `q_block_reassembly`: the four Schur-complement blocks reassemble to Q;
/// - `q11_residual_form`: `Q₁₁ = [W̃ᵀ(I − P_X†)W̃]⁻¹`;
/// - `q12_from_q11`: `Q₁₂ = −Q₁₁ W̃ᵀX†(X†ᵀX†)⁻¹`;
/// - `woodbury_expansion`: `[W̃ᵀ(I − P_X†)W̃]⁻¹ = G⁻¹ + G⁻¹B(D − BᵀG⁻¹B)⁻¹BᵀG⁻¹`
///   with `G = W̃ᵀW̃`, `B = W̃ᵀX†`, `D = X†ᵀX†`;
/// - `sherman_morrison_ridge_ε`: `((P_X + εI)⁻¹ + P_Z)⁻¹` against the limit
///   form `P_X − P_X Z ZᵀP_X / (ZᵀZ + ZᵀP_X Z)`; the error should shrink with ε;
/// - `numerator_difference_form`: `Zᵀ(P_X − P_X̃)Z = ZᵀP_X(I − P_X̃)P_X Z`;
/// - `numerator_nonnegative`: the negative part of that numerator.
pub fn verify_appendix_identities(ds: &Dataset, phi: &ControlSubset) -> Result<IdentityReport> {
    let n = ds.n();
    if n > MAX_DENSE_N {
        return Err(Error::Invalid(format!(
            "identity checks form n × n matrices; n = {n} exceeds {MAX_DENSE_N}"
        )));
    }
    let (wt, xd) = subset_design(ds, phi)?;
    let k1 = wt.ncols();
    let k2 = xd.ncols();
    let mut errors = BTreeMap::new();

    // Q from the reordered design, by LU.
    let mut wp = DMatrix::zeros(n, k1 + k2);
    wp.columns_mut(0, k1).copy_from(&wt);
    wp.columns_mut(k1, k2).copy_from(&xd);
    let q = dense_inverse(&wp.tr_mul(&wp), "reordered Gram")?;
    let q_scale = max_abs(&q);

    let g = wt.tr_mul(&wt);
    let b = wt.tr_mul(&xd);
    let d = xd.tr_mul(&xd);
    let g_inv = dense_inverse(&g, "reduced Gram")?;
    let d_inv = if k2 > 0 {
        dense_inverse(&d, "excluded-column Gram")?
    } else {
        DMatrix::zeros(0, 0)
    };

    // (i) block reassembly
    let schur = &g - &b * &d_inv * b.transpose();
    let q11 = dense_inverse(&schur, "Schur complement")?;
    let q12 = -(&q11 * &b * &d_inv);
    let q21 = -(&d_inv * b.transpose() * &q11);
    let q22 = &d_inv + &d_inv * b.transpose() * &q11 * &b * &d_inv;
    let mut assembled = DMatrix::zeros(k1 + k2, k1 + k2);
    assembled.view_mut((0, 0), (k1, k1)).copy_from(&q11);
    assembled.view_mut((0, k1), (k1, k2)).copy_from(&q12);
    assembled.view_mut((k1, 0), (k2, k1)).copy_from(&q21);
    assembled.view_mut((k1, k1), (k2, k2)).copy_from(&q22);
    errors.insert(
        "q_block_reassembly".into(),
        max_abs(&(&assembled - &q)) / q_scale,
    );

    // (ii) Q₁₁ against the residual-maker form
    let p_xd = if k2 > 0 {
        &xd * &d_inv * xd.transpose()
    } else {
        DMatrix::zeros(n, n)
    };
    let resid_maker = DMatrix::identity(n, n) - &p_xd;
    let q11_resid = dense_inverse(&(wt.transpose() * &resid_maker * &wt), "residual-form Gram")?;
    let q11_direct = q.view((0, 0), (k1, k1)).into_owned();
    errors.insert(
        "q11_residual_form".into(),
        max_abs(&(&q11_resid - &q11_direct)) / max_abs(&q11_direct),
    );

    // (iii) Q₁₂ from Q₁₁
    let q12_direct = q.view((0, k1), (k1, k2)).into_owned();
    let q12_formula = -(&q11_direct * &b * &d_inv);
    errors.insert(
        "q12_from_q11".into(),
        max_abs(&(&q12_formula - &q12_direct)) / q_scale,
    );

    // (iv) Woodbury
    let woodbury = if k2 > 0 {
        let inner = &d - b.transpose() * &g_inv * &b;
        let inner_inv = dense_inverse(&inner, "Woodbury capacitance")?;
        &g_inv + &g_inv * &b * inner_inv * b.transpose() * &g_inv
    } else {
        g_inv.clone()
    };
    errors.insert(
        "woodbury_expansion".into(),
        max_abs(&(&woodbury - &q11_resid)) / max_abs(&q11_resid),
    );

    // (v) Sherman–Morrison limit form on the full control set
    let z = ds.z();
    let ssz = z.dot(z);
    let x = ds.x();
    let p_x = projection_matrix(x)?;
    let p_z = z * z.transpose() / ssz;
    let pxz = &p_x * z;
    let limit = &p_x - &pxz * pxz.transpose() / (ssz + z.dot(&pxz));
    let limit_scale = max_abs(&limit).max(f64::MIN_POSITIVE);
    let complement = DMatrix::identity(n, n) - &p_x;
    for eps in RIDGE_LEVELS {
        // (P_X + εI)⁻¹ = P_X/(1 + ε) + (I − P_X)/ε since P_X is idempotent
        let ridge_inv = &p_x / (1.0 + eps) + &complement / eps;
        let lhs = spd_inverse(&(ridge_inv + &p_z), "ridge-regularized sum")?;
        errors.insert(ridge_key(eps), max_abs(&(&lhs - &limit)) / limit_scale);
    }

    // (vi) numerator of the variance difference
    let xt = wt.columns(1, k1 - 1).into_owned();
    let p_xt = projection_matrix(&xt)?;
    let numerator = (pxz.transpose() * (DMatrix::identity(n, n) - &p_xt) * &pxz)[(0, 0)];
    let difference_form = (z.transpose() * (&p_x - &p_xt) * z)[(0, 0)];
    errors.insert(
        "numerator_difference_form".into(),
        (numerator - difference_form).abs() / ssz,
    );
    errors.insert("numerator_nonnegative".into(), (-numerator).max(0.0) / ssz);

    Ok(IdentityReport { errors })
}

fn projection_matrix(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if x.ncols() == 0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let inv = dense_inverse(&x.tr_mul(x), "control Gram")?;
    Ok(x * inv * x.transpose())
}

fn dense_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Rank(format!("{what} is singular")))
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::factor_with_threshold(m, 0.0)
        .map(|c| c.inverse())
        .map_err(|_| Error::Numerical(format!("{what} is not positive definite")))
}
