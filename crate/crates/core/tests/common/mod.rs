#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use projpost::{ControlSubset, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Controls with a shared latent factor, an exposure loading on them, and
/// an outcome depending on both.
pub fn correlated_design(seed: u64, n: usize, p: usize) -> Dataset {
    let mut r = rng(seed);
    let latent: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let load: Vec<f64> = (0..p).map(|_| r.random_range(-0.9..0.9)).collect();
    let x = DMatrix::from_fn(n, p, |i, j| load[j] * latent[i] + normal(&mut r));
    let gamma = DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0));
    let beta = DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0));
    let z = &x * &gamma + DVector::from_fn(n, |_, _| normal(&mut r));
    let y = &z * 0.3 + &x * &beta + DVector::from_fn(n, |_, _| normal(&mut r));
    let names = (1..=p).map(|j| format!("X{j}")).collect();
    Dataset::new(y, z, x, names).unwrap()
}

/// A subset with at least one control excluded (when `p > 0`).
pub fn random_proper_subset(r: &mut ChaCha8Rng, p: usize) -> ControlSubset {
    let mut flags: Vec<bool> = (0..p).map(|_| r.random_bool(0.5)).collect();
    if p > 0 && flags.iter().all(|&f| f) {
        let j = r.random_range(0..p);
        flags[j] = false;
    }
    ControlSubset::new(flags)
}

/// Reduced design `[Z X̃]`.
pub fn reduced_design(ds: &Dataset, phi: &ControlSubset) -> DMatrix<f64> {
    let cols = phi.included();
    let mut w = DMatrix::zeros(ds.n(), cols.len() + 1);
    w.set_column(0, ds.z());
    for (k, &j) in cols.iter().enumerate() {
        w.set_column(k + 1, &ds.x().column(j));
    }
    w
}

/// Least squares through Householder QR.
pub fn qr_ols(w: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = w.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1e-300);
    (a - b).amax() / scale
}
