//! Gibbs sampler for the reparameterized exposure/outcome model
//!
//! ```text
//! Z | X       = X β_c + ν,                 ν ~ N(0, σ_ν²)
//! Y | Z, X    = τ (Z − X β_c) + X β_d + ε,  ε ~ N(0, σ_ε²)
//! ```
//!
//! with a flat prior on τ and independent horseshoe priors on β_d and β_c:
//!
//! ```text
//! β_d,j ~ N(0, σ_ε² λ_d,j² g_d²)     β_c,j ~ N(0, σ_ν² λ_c,j² g_c²)
//! λ² | ν ~ IG(1/2, 1/ν),  ν ~ IG(1/2, 1)      (half-Cauchy local scales)
//! g² | ξ ~ IG(1/2, 1/ξ),  ξ ~ IG(1/2, 1)      (half-Cauchy global scales)
//! σ² ~ IG(a₀, b₀)                              (a₀ = b₀ = 0: Jeffreys)
//! ```
//!
//! One sweep updates (τ, β_d) jointly, then β_c, then both noise variances,
//! then the auxiliary scale chain of each block. All conditionals are
//! conjugate and only the Gram statistics of `[Y Z X]` are touched, so a
//! sweep costs O(p³) regardless of n.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::posterior::{mean_sd, PosteriorDraws, Provenance};

/// Noise variances above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Bounds keeping shrinkage scales representable.
const SCALE_FLOOR: f64 = 1e-150;
const SCALE_CEIL: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauPrior {
    #[default]
    Flat,
    /// `N(0, sd²)`; proper, used when prior simulation is needed.
    Normal { sd: f64 },
}

/// Inverse-gamma prior on both noise variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePrior {
    pub shape: f64,
    pub rate: f64,
}

impl VariancePrior {
    pub const JEFFREYS: Self = Self {
        shape: 0.0,
        rate: 0.0,
    };

    pub fn is_proper(&self) -> bool {
        self.shape > 0.0 && self.rate > 0.0
    }
}

impl Default for VariancePrior {
    fn default() -> Self {
        Self::JEFFREYS
    }
}

/// Run configuration. Deserializes from TOML with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub tau_prior: TauPrior,
    pub variance_prior: VariancePrior,
    /// Controls given a flat prior in both blocks instead of the horseshoe.
    pub unpenalized_cols: Vec<String>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 2500,
            n_burn: 1000,
            thin: 1,
            seed: 0,
            chains: 4,
            tau_prior: TauPrior::Flat,
            variance_prior: VariancePrior::JEFFREYS,
            unpenalized_cols: Vec::new(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.n_burn {
            return Err(Error::Config(format!(
                "n_iter ({}) must exceed n_burn ({})",
                self.n_iter, self.n_burn
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if let TauPrior::Normal { sd } = self.tau_prior {
            if !(sd > 0.0) {
                return Err(Error::Config("tau prior sd must be positive".into()));
            }
        }
        let vp = self.variance_prior;
        if vp.shape < 0.0 || vp.rate < 0.0 {
            return Err(Error::Config(
                "variance prior parameters must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Kept draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter - self.n_burn).div_ceil(self.thin)
    }
}

/// Post-burn-in draws of every sampled quantity. Scales are reported on
/// the standard-deviation scale (λ, g), not squared.
#[derive(Debug, Clone, PartialEq)]
pub struct RicDraws {
    pub tau: Vec<f64>,
    pub beta_d: DMatrix<f64>,
    pub beta_c: DMatrix<f64>,
    pub sigma_eps: Vec<f64>,
    pub sigma_nu: Vec<f64>,
    pub local_scales_d: DMatrix<f64>,
    pub local_scales_c: DMatrix<f64>,
    pub global_scale_d: Vec<f64>,
    pub global_scale_c: Vec<f64>,
    pub chain: Vec<u32>,
    pub iter: Vec<u32>,
}

impl RicDraws {
    pub fn n_draws(&self) -> usize {
        self.tau.len()
    }
}

/// Gram statistics of `[Y Z X]`.
#[derive(Debug, Clone)]
pub struct RicStats {
    pub n: usize,
    pub xtx: DMatrix<f64>,
    pub xtz: DVector<f64>,
    pub xty: DVector<f64>,
    pub ztz: f64,
    pub zty: f64,
    pub yty: f64,
}

impl RicStats {
    pub fn new(x: &DMatrix<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Self {
        Self {
            n: x.nrows(),
            xtx: x.tr_mul(x),
            xtz: x.tr_mul(z),
            xty: x.tr_mul(y),
            ztz: z.dot(z),
            zty: z.dot(y),
            yty: y.dot(y),
        }
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::new(ds.x(), ds.z(), ds.y())
    }

    pub fn p(&self) -> usize {
        self.xtx.nrows()
    }
}

/// Prior settings that enter the conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct RicPriors {
    pub tau: TauPrior,
    pub variance: VariancePrior,
    /// `true` where the control is shrunk.
    pub penalized: Vec<bool>,
}

impl RicPriors {
    pub fn new(p: usize, tau: TauPrior, variance: VariancePrior) -> Self {
        Self {
            tau,
            variance,
            penalized: vec![true; p],
        }
    }
}

/// Horseshoe scales of one coefficient block, stored squared.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageScales {
    pub local_sq: DVector<f64>,
    pub local_aux: DVector<f64>,
    pub global_sq: f64,
    pub global_aux: f64,
}

impl ShrinkageScales {
    fn unit(p: usize) -> Self {
        Self {
            local_sq: DVector::from_element(p, 1.0),
            local_aux: DVector::from_element(p, 1.0),
            global_sq: 1.0,
            global_aux: 1.0,
        }
    }
}

/// Full state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RicState {
    pub tau: f64,
    pub beta_d: DVector<f64>,
    pub beta_c: DVector<f64>,
    pub sigma_eps_sq: f64,
    pub sigma_nu_sq: f64,
    pub scales_d: ShrinkageScales,
    pub scales_c: ShrinkageScales,
}

impl RicState {
    /// OLS start: exposure regression for β_c, outcome regression on
    /// `[Z − Xβ_c, X]` for (τ, β_d), residual variances, unit scales.
    pub fn initial(stats: &RicStats) -> Self {
        let p = stats.p();
        let n = stats.n as f64;
        let chol_x = Cholesky::factor(&stats.xtx).ok();
        let beta_c = chol_x
            .as_ref()
            .map(|c| c.solve(&stats.xtz))
            .unwrap_or_else(|| DVector::zeros(p));
        let rss_z = exposure_rss(stats, &beta_c);
        let mut state = Self {
            tau: 0.0,
            beta_d: DVector::zeros(p),
            beta_c,
            sigma_eps_sq: 1.0,
            sigma_nu_sq: (rss_z / (n - p as f64).max(1.0)).max(1e-8),
            scales_d: ShrinkageScales::unit(p),
            scales_c: ShrinkageScales::unit(p),
        };
        let (vtv, vty) = outcome_gram(stats, &state.beta_c);
        if let Ok(c) = Cholesky::factor(&vtv) {
            let theta = c.solve(&vty);
            state.tau = theta[0];
            state.beta_d.copy_from(&theta.rows(1, p));
            let rss = outcome_rss(stats, &vtv, &vty, &theta);
            state.sigma_eps_sq = (rss / (n - p as f64 - 1.0).max(1.0)).max(1e-8);
        }
        state
    }
}

fn exposure_rss(stats: &RicStats, beta_c: &DVector<f64>) -> f64 {
    (stats.ztz - 2.0 * beta_c.dot(&stats.xtz) + beta_c.dot(&(&stats.xtx * beta_c))).max(0.0)
}

/// `VᵀV` and `VᵀY` for `V = [Z − Xβ_c, X]`.
fn outcome_gram(stats: &RicStats, beta_c: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let p = stats.p();
    let xtx_bc = &stats.xtx * beta_c;
    let xtr = &stats.xtz - &xtx_bc;
    let rtr = stats.ztz - 2.0 * beta_c.dot(&stats.xtz) + beta_c.dot(&xtx_bc);
    let mut vtv = DMatrix::zeros(p + 1, p + 1);
    vtv[(0, 0)] = rtr;
    for j in 0..p {
        vtv[(0, j + 1)] = xtr[j];
        vtv[(j + 1, 0)] = xtr[j];
    }
    vtv.view_mut((1, 1), (p, p)).copy_from(&stats.xtx);
    let mut vty = DVector::zeros(p + 1);
    vty[0] = stats.zty - beta_c.dot(&stats.xty);
    vty.rows_mut(1, p).copy_from(&stats.xty);
    (vtv, vty)
}

fn outcome_rss(
    stats: &RicStats,
    vtv: &DMatrix<f64>,
    vty: &DVector<f64>,
    theta: &DVector<f64>,
) -> f64 {
    (stats.yty - 2.0 * theta.dot(vty) + theta.dot(&(vtv * theta))).max(0.0)
}

/// Draw from `IG(shape, rate)`.
fn inv_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("inverse-gamma({shape}, {rate}): {e}")))?;
    Ok(1.0 / g.sample(rng))
}

/// `mean + L⁻ᵀ ξ · scale` where `L Lᵀ` is the precision (up to `scale²`).
fn gaussian_from_precision<R: Rng>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    scale: f64,
) -> Result<DVector<f64>> {
    let chol = Cholesky::factor_with_threshold(precision, 0.0).map_err(|f| {
        Error::Numerical(format!(
            "conditional precision not positive definite at {}",
            f.index
        ))
    })?;
    let mean = chol.solve(linear);
    let m = mean.len();
    let l = chol.l();
    let mut u: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    for i in (0..m).rev() {
        let mut acc = u[i];
        for k in (i + 1)..m {
            acc -= l[(k, i)] * u[k];
        }
        u[i] = acc / l[(i, i)];
    }
    Ok(DVector::from_fn(m, |i, _| mean[i] + scale * u[i]))
}

fn clamp_scale(v: f64) -> f64 {
    v.clamp(SCALE_FLOOR, SCALE_CEIL)
}

/// Precision and linear term of the β_c full conditional: the conditional
/// mean is `precision⁻¹ · linear`.
pub fn beta_c_conditional(
    stats: &RicStats,
    priors: &RicPriors,
    state: &RicState,
) -> (DMatrix<f64>, DVector<f64>) {
    let p = stats.p();
    let tau = state.tau;
    let w_nu = 1.0 / state.sigma_nu_sq;
    let w_eps = 1.0 / state.sigma_eps_sq;
    let mut prec = &stats.xtx * (w_nu + tau * tau * w_eps);
    for j in 0..p {
        if priors.penalized[j] {
            prec[(j, j)] += w_nu / (state.scales_c.local_sq[j] * state.scales_c.global_sq);
        }
    }
    // Xᵀ(Y − Xβ_d − τZ)
    let xtu = &stats.xty - &stats.xtx * &state.beta_d - &stats.xtz * tau;
    let linear = &stats.xtz * w_nu - xtu * (tau * w_eps);
    (prec, linear)
}

/// One Gibbs sweep.
pub fn sweep<R: Rng>(
    state: &mut RicState,
    stats: &RicStats,
    priors: &RicPriors,
    rng: &mut R,
    iteration: usize,
) -> Result<()> {
    let p = stats.p();
    let n = stats.n as f64;
    let pen = &priors.penalized;

    // (τ, β_d) | β_c, σ_ε², scales. Precision (VᵀV + diag d)/σ_ε².
    let (mut vtv, vty) = outcome_gram(stats, &state.beta_c);
    if let TauPrior::Normal { sd } = priors.tau {
        vtv[(0, 0)] += state.sigma_eps_sq / (sd * sd);
    }
    for j in 0..p {
        if pen[j] {
            vtv[(j + 1, j + 1)] += 1.0 / (state.scales_d.local_sq[j] * state.scales_d.global_sq);
        }
    }
    let theta = gaussian_from_precision(rng, &vtv, &vty, state.sigma_eps_sq.sqrt())?;
    state.tau = theta[0];
    state.beta_d.copy_from(&theta.rows(1, p));

    let (prec, linear) = beta_c_conditional(stats, priors, state);
    state.beta_c = gaussian_from_precision(rng, &prec, &linear, 1.0)?;

    // σ_ε² | rest
    let (vtv_new, vty_new) = outcome_gram(stats, &state.beta_c);
    let mut theta_now = DVector::zeros(p + 1);
    theta_now[0] = state.tau;
    theta_now.rows_mut(1, p).copy_from(&state.beta_d);
    let rss_y = outcome_rss(stats, &vtv_new, &vty_new, &theta_now);
    let (pen_d_ss, n_pen) = penalty(&state.beta_d, &state.scales_d, pen);
    let vp = priors.variance;
    state.sigma_eps_sq = inv_gamma(
        rng,
        vp.shape + 0.5 * (n + n_pen as f64),
        vp.rate + 0.5 * (rss_y + pen_d_ss),
    )?;
    check_variance(state.sigma_eps_sq, "sigma_eps^2", iteration)?;

    // σ_ν² | rest
    let rss_z = exposure_rss(stats, &state.beta_c);
    let (pen_c_ss, n_pen_c) = penalty(&state.beta_c, &state.scales_c, pen);
    state.sigma_nu_sq = inv_gamma(
        rng,
        vp.shape + 0.5 * (n + n_pen_c as f64),
        vp.rate + 0.5 * (rss_z + pen_c_ss),
    )?;
    check_variance(state.sigma_nu_sq, "sigma_nu^2", iteration)?;

    update_scales(
        rng,
        &mut state.scales_d,
        &state.beta_d,
        state.sigma_eps_sq,
        pen,
    )?;
    update_scales(
        rng,
        &mut state.scales_c,
        &state.beta_c,
        state.sigma_nu_sq,
        pen,
    )?;
    Ok(())
}

/// `Σ β_j² / (λ_j² g²)` over penalized coordinates, and their count.
fn penalty(beta: &DVector<f64>, s: &ShrinkageScales, pen: &[bool]) -> (f64, usize) {
    let mut ss = 0.0;
    let mut count = 0;
    for j in 0..beta.len() {
        if pen[j] {
            ss += beta[j] * beta[j] / (s.local_sq[j] * s.global_sq);
            count += 1;
        }
    }
    (ss, count)
}

fn update_scales<R: Rng>(
    rng: &mut R,
    s: &mut ShrinkageScales,
    beta: &DVector<f64>,
    sigma_sq: f64,
    pen: &[bool],
) -> Result<()> {
    let mut global_ss = 0.0;
    let mut count = 0usize;
    for j in 0..beta.len() {
        if !pen[j] {
            continue;
        }
        let b2 = beta[j] * beta[j] / sigma_sq;
        s.local_sq[j] = clamp_scale(inv_gamma(
            rng,
            1.0,
            1.0 / s.local_aux[j] + b2 / (2.0 * s.global_sq),
        )?);
        s.local_aux[j] = clamp_scale(inv_gamma(rng, 1.0, 1.0 + 1.0 / s.local_sq[j])?);
        global_ss += b2 / s.local_sq[j];
        count += 1;
    }
    if count > 0 {
        s.global_sq = clamp_scale(inv_gamma(
            rng,
            0.5 * (count as f64 + 1.0),
            1.0 / s.global_aux + 0.5 * global_ss,
        )?);
        s.global_aux = clamp_scale(inv_gamma(rng, 1.0, 1.0 + 1.0 / s.global_sq)?);
    }
    Ok(())
}

fn check_variance(v: f64, what: &'static str, iteration: usize) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Numerical(format!(
            "{what} is not finite at iteration {iteration}"
        )));
    }
    if v > DIVERGENCE_LIMIT {
        return Err(Error::Divergence {
            iteration,
            what,
            value: v,
        });
    }
    Ok(())
}

/// Generator for chain `chain` under `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Runs `cfg.chains` independent chains and returns their merged kept
/// draws, ordered by chain then iteration.
pub fn gibbs_ric(ds: &Dataset, cfg: &SamplerConfig) -> Result<RicDraws> {
    cfg.validate()?;
    let p = ds.p();
    let stats = RicStats::from_dataset(ds);
    let mut priors = RicPriors::new(p, cfg.tau_prior, cfg.variance_prior);
    for name in &cfg.unpenalized_cols {
        let j = ds
            .control_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownControl(name.clone()))?;
        priors.penalized[j] = false;
    }

    let chains: Vec<Result<Vec<(u32, RicState)>>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(&stats, &priors, cfg, c as u64))
        .collect();

    let per_chain = cfg.draws_per_chain();
    let total = per_chain * cfg.chains;
    let mut out = RicDraws {
        tau: Vec::with_capacity(total),
        beta_d: DMatrix::zeros(total, p),
        beta_c: DMatrix::zeros(total, p),
        sigma_eps: Vec::with_capacity(total),
        sigma_nu: Vec::with_capacity(total),
        local_scales_d: DMatrix::zeros(total, p),
        local_scales_c: DMatrix::zeros(total, p),
        global_scale_d: Vec::with_capacity(total),
        global_scale_c: Vec::with_capacity(total),
        chain: Vec::with_capacity(total),
        iter: Vec::with_capacity(total),
    };
    let mut row = 0;
    for (c, chain) in chains.into_iter().enumerate() {
        for (it, s) in chain? {
            out.tau.push(s.tau);
            out.sigma_eps.push(s.sigma_eps_sq.sqrt());
            out.sigma_nu.push(s.sigma_nu_sq.sqrt());
            out.global_scale_d.push(s.scales_d.global_sq.sqrt());
            out.global_scale_c.push(s.scales_c.global_sq.sqrt());
            for j in 0..p {
                out.beta_d[(row, j)] = s.beta_d[j];
                out.beta_c[(row, j)] = s.beta_c[j];
                out.local_scales_d[(row, j)] = s.scales_d.local_sq[j].sqrt();
                out.local_scales_c[(row, j)] = s.scales_c.local_sq[j].sqrt();
            }
            out.chain.push(c as u32);
            out.iter.push(it);
            row += 1;
        }
    }
    Ok(out)
}

fn run_chain(
    stats: &RicStats,
    priors: &RicPriors,
    cfg: &SamplerConfig,
    chain: u64,
) -> Result<Vec<(u32, RicState)>> {
    let mut rng = chain_rng(cfg.seed, chain);
    let mut state = RicState::initial(stats);
    let mut kept = Vec::with_capacity(cfg.draws_per_chain());
    for it in 0..cfg.n_iter {
        sweep(&mut state, stats, priors, &mut rng, it)?;
        let finite = state.tau.is_finite()
            && state.beta_d.iter().all(|v| v.is_finite())
            && state.beta_c.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numerical(format!(
                "non-finite coefficient draw at iteration {it}"
            )));
        }
        if it >= cfg.n_burn && (it - cfg.n_burn).is_multiple_of(cfg.thin) {
            kept.push((it as u32, state.clone()));
        }
    }
    Ok(kept)
}

/// Maps `(τ, β_d, β_c)` back to outcome coefficients: `β = β_d − τ β_c`.
pub fn ric_to_standard(draws: &RicDraws) -> Result<PosteriorDraws> {
    let s = draws.n_draws();
    let p = draws.beta_d.ncols();
    let mut psi = DMatrix::zeros(s, p + 1);
    for i in 0..s {
        let tau = draws.tau[i];
        psi[(i, 0)] = tau;
        for j in 0..p {
            psi[(i, j + 1)] = draws.beta_d[(i, j)] - tau * draws.beta_c[(i, j)];
        }
    }
    PosteriorDraws::with_chains(
        psi,
        DVector::from_column_slice(&draws.sigma_eps),
        Provenance::HorseshoeRic,
        draws.chain.clone(),
        draws.iter.clone(),
    )
}

/// Prior and data simulators for joint-distribution (Geweke) testing.
/// These need proper priors on τ and on both noise variances.
pub mod geweke {
    use super::*;

    fn normal<R: Rng>(rng: &mut R) -> f64 {
        StandardNormal.sample(rng)
    }

    fn half_cauchy_sq<R: Rng>(rng: &mut R) -> Result<(f64, f64)> {
        let aux = inv_gamma(rng, 0.5, 1.0)?;
        let sq = inv_gamma(rng, 0.5, 1.0 / aux)?;
        Ok((clamp_scale(sq), clamp_scale(aux)))
    }

    fn scales_from_prior<R: Rng>(rng: &mut R, p: usize) -> Result<ShrinkageScales> {
        let mut s = ShrinkageScales::unit(p);
        let (g, xi) = half_cauchy_sq(rng)?;
        s.global_sq = g;
        s.global_aux = xi;
        for j in 0..p {
            let (l, nu) = half_cauchy_sq(rng)?;
            s.local_sq[j] = l;
            s.local_aux[j] = nu;
        }
        Ok(s)
    }

    /// A full state drawn from the joint prior.
    pub fn draw_from_prior<R: Rng>(rng: &mut R, p: usize, priors: &RicPriors) -> Result<RicState> {
        let sd = match priors.tau {
            TauPrior::Normal { sd } => sd,
            TauPrior::Flat => {
                return Err(Error::Config(
                    "prior simulation needs a proper tau prior".into(),
                ))
            }
        };
        let vp = priors.variance;
        if !vp.is_proper() {
            return Err(Error::Config(
                "prior simulation needs a proper variance prior".into(),
            ));
        }
        let sigma_eps_sq = inv_gamma(rng, vp.shape, vp.rate)?;
        let sigma_nu_sq = inv_gamma(rng, vp.shape, vp.rate)?;
        let scales_d = scales_from_prior(rng, p)?;
        let scales_c = scales_from_prior(rng, p)?;
        let tau = sd * normal(rng);
        let coef = |rng: &mut R, s: &ShrinkageScales, var: f64| -> DVector<f64> {
            DVector::from_fn(p, |j, _| {
                let z: f64 = StandardNormal.sample(rng);
                z * (var * s.local_sq[j] * s.global_sq).sqrt()
            })
        };
        let beta_d = coef(rng, &scales_d, sigma_eps_sq);
        let beta_c = coef(rng, &scales_c, sigma_nu_sq);
        Ok(RicState {
            tau,
            beta_d,
            beta_c,
            sigma_eps_sq,
            sigma_nu_sq,
            scales_d,
            scales_c,
        })
    }

    /// `(Z, Y)` drawn from the likelihood at `state` for fixed controls.
    pub fn simulate_data<R: Rng>(
        rng: &mut R,
        x: &DMatrix<f64>,
        state: &RicState,
    ) -> (DVector<f64>, DVector<f64>) {
        let n = x.nrows();
        let xc = x * &state.beta_c;
        let xd = x * &state.beta_d;
        let nu = DVector::from_fn(n, |_, _| normal(rng) * state.sigma_nu_sq.sqrt());
        let z = &xc + &nu;
        let eps = DVector::from_fn(n, |_, _| normal(rng) * state.sigma_eps_sq.sqrt());
        let y = nu * state.tau + xd + eps;
        (z, y)
    }

    /// Monitored functions. Horseshoe coefficients and scales have no
    /// finite moments, so those enter through bounded transforms.
    pub const MONITORS: [&str; 9] = [
        "tau",
        "tau^2",
        "atan(beta_d[0])",
        "atan(beta_c[0])",
        "sigma_eps^2",
        "log(sigma_eps^2)",
        "log(sigma_nu^2)",
        "1/(1+lambda_d[0]^2)",
        "log(g_c^2)",
    ];

    fn monitor_values(s: &RicState) -> [f64; 9] {
        [
            s.tau,
            s.tau * s.tau,
            s.beta_d[0].atan(),
            s.beta_c[0].atan(),
            s.sigma_eps_sq,
            s.sigma_eps_sq.ln(),
            s.sigma_nu_sq.ln(),
            1.0 / (1.0 + s.scales_d.local_sq[0]),
            s.scales_c.global_sq.ln(),
        ]
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct GewekeConfig {
        pub n: usize,
        pub p: usize,
        /// Total successive-conditional transitions, split evenly over
        /// `chains`; also the number of forward draws.
        pub transitions: usize,
        /// Independent successive-conditional chains, each started from an
        /// exact joint draw.
        pub chains: usize,
        pub seed: u64,
        pub tau_sd: f64,
        pub variance_prior: VariancePrior,
    }

    impl Default for GewekeConfig {
        fn default() -> Self {
            Self {
                n: 30,
                p: 3,
                transitions: 50_000,
                chains: 200,
                seed: 0,
                tau_sd: 1.0,
                variance_prior: VariancePrior {
                    shape: 3.0,
                    rate: 2.0,
                },
            }
        }
    }

    /// Forward (prior) and successive-conditional estimates of one monitor.
    #[derive(Debug, Clone, PartialEq)]
    pub struct GewekeMonitor {
        pub name: &'static str,
        pub forward_mean: f64,
        pub forward_se: f64,
        pub chain_mean: f64,
        pub chain_se: f64,
        pub z: f64,
    }

    /// Compares prior simulation against chains that alternate a Gibbs
    /// sweep with a fresh data draw.
    ///
    /// A single long chain is a poor probe here: once the global scale
    /// wanders into its heavy tail the coefficients pin the simulated data
    /// and vice versa, and it can stay there for millions of sweeps. Each
    /// chain therefore starts from an exact draw of the joint, so every
    /// state it visits is marginally a prior draw when the kernel is right,
    /// and the chain means are independent, which gives honest standard
    /// errors.
    pub fn run(cfg: &GewekeConfig) -> Result<Vec<GewekeMonitor>> {
        if cfg.chains < 2 || cfg.transitions < cfg.chains {
            return Err(Error::Config(
                "Geweke run needs at least two chains and one transition per chain".into(),
            ));
        }
        let priors = RicPriors::new(
            cfg.p,
            TauPrior::Normal { sd: cfg.tau_sd },
            cfg.variance_prior,
        );
        let mut rng = chain_rng(cfg.seed, 0);
        let x = DMatrix::from_fn(cfg.n, cfg.p, |_, _| normal(&mut rng));
        let k = MONITORS.len();

        let mut fwd_rng = chain_rng(cfg.seed, 1);
        let mut forward: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.transitions); k];
        for _ in 0..cfg.transitions {
            let s = draw_from_prior(&mut fwd_rng, cfg.p, &priors)?;
            for (m, v) in monitor_values(&s).into_iter().enumerate() {
                forward[m].push(v);
            }
        }

        let steps = cfg.transitions / cfg.chains;
        let chain_means: Vec<[f64; MONITORS.len()]> = (0..cfg.chains)
            .into_par_iter()
            .map(|c| {
                let mut rng = chain_rng(cfg.seed, 2 + c as u64);
                let mut state = draw_from_prior(&mut rng, cfg.p, &priors)?;
                let mut sums = [0.0; MONITORS.len()];
                for it in 0..steps {
                    let (z, y) = simulate_data(&mut rng, &x, &state);
                    let stats = RicStats::new(&x, &z, &y);
                    sweep(&mut state, &stats, &priors, &mut rng, it)?;
                    for (acc, v) in sums.iter_mut().zip(monitor_values(&state)) {
                        *acc += v;
                    }
                }
                Ok(sums.map(|v| v / steps as f64))
            })
            .collect::<Result<_>>()?;

        Ok((0..k)
            .map(|m| {
                let (fm, fsd) = mean_sd(&forward[m]);
                let means: Vec<f64> = chain_means.iter().map(|c| c[m]).collect();
                let (cm, csd) = mean_sd(&means);
                let forward_se = fsd / (forward[m].len() as f64).sqrt();
                let chain_se = csd / (means.len() as f64).sqrt();
                let z = (cm - fm) / (forward_se * forward_se + chain_se * chain_se).sqrt();
                GewekeMonitor {
                    name: MONITORS[m],
                    forward_mean: fm,
                    forward_se,
                    chain_mean: cm,
                    chain_se,
                    z,
                }
            })
            .collect())
    }
}
