//! Synthetic designs and their population-level projection oracle.
//!
//! Two generators:
//! - the toy design: six independent standard-normal controls with
//!   `Z = Xγ + ν` and `Y = τZ + Xβ + ε`;
//! - the correlated design: `(Z, X₁..X₇) ~ N(0, Σ)` with `Σ_kl = ρ^(k+l−2)`
//!   off the diagonal, seven independent prognostic controls and eleven
//!   noise controls (p = 25).
//!
//! Every variable block draws from its own ChaCha stream under one root
//! seed, so adding columns never perturbs existing ones.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{ControlSubset, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{submatrix, Cholesky};

/// Toy-design exposure coefficients.
pub const TOY_GAMMA: [f64; 6] = [1.0, 1.0, 0.2, 0.2, 1.0, 0.0];
/// Toy-design outcome coefficients.
pub const TOY_BETA: [f64; 6] = [1.5, 0.5, 1.5, 0.5, 0.0, 0.0];
pub const TOY_TAU: f64 = 0.1;
pub const TOY_N: usize = 1000;

/// Correlation decay of the correlated design.
pub const SIM_RHO: f64 = 0.7;
pub const SIM_P: usize = 25;
pub const SIM_CONFOUNDERS: usize = 7;
pub const SIM_PROGNOSTIC: usize = 7;
pub const SIM_EFFECT: f64 = 0.1;

const STREAM_Z: u64 = 1 << 32;
const STREAM_Y: u64 = (1 << 32) + 1;
const STREAM_JOINT: u64 = (1 << 32) + 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Population parameters of the exposure/outcome hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub gamma: DVector<f64>,
    pub beta: DVector<f64>,
    pub tau: f64,
    pub sigma_nu: f64,
    pub sigma_eps: f64,
    /// Covariance of the controls.
    pub omega: DMatrix<f64>,
    /// Mean of the controls.
    pub mu: DVector<f64>,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.gamma.len();
        if self.beta.len() != p
            || self.mu.len() != p
            || self.omega.nrows() != p
            || self.omega.ncols() != p
        {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.beta.len(),
            });
        }
        if !(self.sigma_nu > 0.0 && self.sigma_eps > 0.0) {
            return Err(Error::Invalid(
                "population noise scales must be positive".into(),
            ));
        }
        if (&self.omega - self.omega.transpose()).amax() > 1e-12 {
            return Err(Error::Invalid("omega is not symmetric".into()));
        }
        Cholesky::factor(&self.omega)
            .map_err(|_| Error::Invalid("omega is not positive definite".into()))?;
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    /// ψ = [τ βᵀ]ᵀ.
    pub fn psi(&self) -> DVector<f64> {
        let mut psi = DVector::zeros(self.p() + 1);
        psi[0] = self.tau;
        psi.rows_mut(1, self.p()).copy_from(&self.beta);
        psi
    }

    /// Population mean of `w = [z xᵀ]ᵀ`.
    pub fn mu_w(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.p() + 1);
        m[0] = self.gamma.dot(&self.mu);
        m.rows_mut(1, self.p()).copy_from(&self.mu);
        m
    }
}

/// `Λ = cov([z xᵀ]ᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCov {
    pub lambda: DMatrix<f64>,
}

/// Blocks of Λ for a subset: `Λ̃ = cov(w̃)`, `Λ† = cov(w†)`, `Λ̃† = cov(w̃, w†)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPartition {
    pub kept: DMatrix<f64>,
    pub dropped: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

impl JointCov {
    pub fn partition(&self, phi: &ControlSubset) -> LambdaPartition {
        let keep = phi.kept_coordinates();
        let drop = phi.dropped_coordinates();
        LambdaPartition {
            kept: submatrix(&self.lambda, &keep, &keep),
            dropped: submatrix(&self.lambda, &drop, &drop),
            cross: submatrix(&self.lambda, &keep, &drop),
        }
    }
}

/// Assembles `Λ = [γᵀΩγ + σ_ν², γᵀΩ; Ωγ, Ω]`.
pub fn population_lambda(spec: &PopulationSpec) -> JointCov {
    let p = spec.p();
    let og = &spec.omega * &spec.gamma;
    let mut lambda = DMatrix::zeros(p + 1, p + 1);
    lambda[(0, 0)] = spec.gamma.dot(&og) + spec.sigma_nu * spec.sigma_nu;
    for j in 0..p {
        lambda[(0, j + 1)] = og[j];
        lambda[(j + 1, 0)] = og[j];
    }
    lambda.view_mut((1, 1), (p, p)).copy_from(&spec.omega);
    JointCov { lambda }
}

/// Large-sample limit of the projected coefficients:
/// `ψ̃⋆ = Λ̃⁻¹ cov(w̃, w) ψ`.
pub fn population_projection(spec: &PopulationSpec, phi: &ControlSubset) -> Result<DVector<f64>> {
    phi.check_len(spec.p())?;
    let lambda = population_lambda(spec).lambda;
    let keep = phi.kept_coordinates();
    let all: Vec<usize> = (0..=spec.p()).collect();
    let kept = submatrix(&lambda, &keep, &keep);
    let cross = submatrix(&lambda, &keep, &all);
    let chol = Cholesky::factor(&kept)
        .map_err(|_| Error::Rank("population covariance of the kept block is singular".into()))?;
    Ok(chol.solve(&(cross * spec.psi())))
}

/// Population matrix `A⋆ = Λ̃⁻¹ cov(w̃, w)`.
pub fn population_operator(spec: &PopulationSpec, phi: &ControlSubset) -> Result<DMatrix<f64>> {
    phi.check_len(spec.p())?;
    let lambda = population_lambda(spec).lambda;
    let keep = phi.kept_coordinates();
    let all: Vec<usize> = (0..=spec.p()).collect();
    let chol = Cholesky::factor(&submatrix(&lambda, &keep, &keep))
        .map_err(|_| Error::Rank("population covariance of the kept block is singular".into()))?;
    Ok(chol.solve_mat(&submatrix(&lambda, &keep, &all)))
}

pub fn toy_spec() -> PopulationSpec {
    PopulationSpec {
        gamma: DVector::from_row_slice(&TOY_GAMMA),
        beta: DVector::from_row_slice(&TOY_BETA),
        tau: TOY_TAU,
        sigma_nu: 1.0,
        sigma_eps: 1.0,
        omega: DMatrix::identity(6, 6),
        mu: DVector::zeros(6),
    }
}

fn control_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("X{j}")).collect()
}

/// Toy design at the default size of 1000 observations.
pub fn gen_toy(seed: u64) -> (Dataset, PopulationSpec) {
    gen_toy_n(seed, TOY_N).expect("toy size is valid")
}

/// Toy design with `n` observations.
pub fn gen_toy_n(seed: u64, n: usize) -> Result<(Dataset, PopulationSpec)> {
    let spec = toy_spec();
    let ds = simulate_independent_controls(&spec, n, seed)?;
    Ok((ds, spec))
}

/// Draws from a spec whose controls are independent (diagonal Ω).
fn simulate_independent_controls(spec: &PopulationSpec, n: usize, seed: u64) -> Result<Dataset> {
    let p = spec.p();
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        let sd = spec.omega[(j, j)].sqrt();
        let col = normals(&mut stream(seed, j as u64), n) * sd;
        x.set_column(j, &col.add_scalar(spec.mu[j]));
    }
    let nu = normals(&mut stream(seed, STREAM_Z), n);
    let z = &x * &spec.gamma + nu * spec.sigma_nu;
    let eps = normals(&mut stream(seed, STREAM_Y), n);
    let y = &z * spec.tau + &x * &spec.beta + eps * spec.sigma_eps;
    Dataset::new(y, z, x, control_names(p))
}

/// The 8 × 8 covariance of `(Z, X₁, …, X₇)`: 1 on the diagonal and
/// `ρ^(k+l−2)` elsewhere (1-based k, l; Z is index 1).
pub fn sim_sigma(rho: f64) -> DMatrix<f64> {
    let m = SIM_CONFOUNDERS + 1;
    DMatrix::from_fn(m, m, |k, l| {
        if k == l {
            1.0
        } else {
            rho.powi((k + l) as i32)
        }
    })
}

/// The correlated design; requires `n ≥ 30`.
pub fn gen_sim(seed: u64, n: usize) -> Result<(Dataset, PopulationSpec)> {
    if n < 30 {
        return Err(Error::Invalid(format!(
            "correlated design needs n >= 30, got {n}"
        )));
    }
    let joint = sim_joint(seed, n)?;
    let z = joint.column(0).into_owned();
    let mut x = DMatrix::zeros(n, SIM_P);
    x.columns_mut(0, SIM_CONFOUNDERS)
        .copy_from(&joint.columns(1, SIM_CONFOUNDERS));
    for j in SIM_CONFOUNDERS..SIM_P {
        x.set_column(j, &normals(&mut stream(seed, j as u64), n));
    }

    let spec = sim_spec();
    let eps = normals(&mut stream(seed, STREAM_Y), n);
    let y = &z * spec.tau + &x * &spec.beta + eps * spec.sigma_eps;
    let ds = Dataset::new(y, z, x, control_names(SIM_P))?;
    Ok((ds, spec))
}

/// The `(Z, X₁, …, X₇)` block of [`gen_sim`] on its own, one row per
/// observation. Same stream, so identical to the corresponding columns.
pub fn sim_joint(seed: u64, n: usize) -> Result<DMatrix<f64>> {
    let sigma = sim_sigma(SIM_RHO);
    let chol = Cholesky::factor(&sigma)
        .map_err(|_| Error::Numerical("Σ is not positive definite".into()))?;
    let m = SIM_CONFOUNDERS + 1;
    let mut rng = stream(seed, STREAM_JOINT);
    let mut joint = DMatrix::zeros(n, m);
    let mut draw = DVector::zeros(m);
    for i in 0..n {
        for v in draw.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = chol.l() * &draw;
        for k in 0..m {
            joint[(i, k)] = row[k];
        }
    }
    Ok(joint)
}

/// Population spec of the correlated design, written in exposure-model
/// form: `γ = Ω⁻¹cov(x, z)` and `σ_ν² = 1 − cov(z, x)Ω⁻¹cov(x, z)`.
pub fn sim_spec() -> PopulationSpec {
    let sigma = sim_sigma(SIM_RHO);
    let mut omega = DMatrix::identity(SIM_P, SIM_P);
    omega
        .view_mut((0, 0), (SIM_CONFOUNDERS, SIM_CONFOUNDERS))
        .copy_from(&sigma.view((1, 1), (SIM_CONFOUNDERS, SIM_CONFOUNDERS)));
    let mut cov_xz = DVector::zeros(SIM_P);
    for k in 0..SIM_CONFOUNDERS {
        cov_xz[k] = sigma[(0, k + 1)];
    }
    let gamma = Cholesky::factor(&omega)
        .expect("Ω is positive definite")
        .solve(&cov_xz);
    let sigma_nu = (1.0 - cov_xz.dot(&gamma)).sqrt();
    let mut beta = DVector::zeros(SIM_P);
    for k in 0..(SIM_CONFOUNDERS + SIM_PROGNOSTIC) {
        beta[k] = SIM_EFFECT;
    }
    PopulationSpec {
        gamma,
        beta,
        tau: SIM_EFFECT,
        sigma_nu,
        sigma_eps: 1.0,
        omega,
        mu: DVector::zeros(SIM_P),
    }
}

/// Role of a correlated-design control (0-based index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlRole {
    Confounder,
    Prognostic,
    Noise,
}

pub fn sim_role(j: usize) -> ControlRole {
    if j < SIM_CONFOUNDERS {
        ControlRole::Confounder
    } else if j < SIM_CONFOUNDERS + SIM_PROGNOSTIC {
        ControlRole::Prognostic
    } else {
        ControlRole::Noise
    }
}
