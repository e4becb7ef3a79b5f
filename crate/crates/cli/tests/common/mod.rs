#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use projpost::simgen::gen_toy;
use projpost::{sample_flat_posterior, ControlSubset, Dataset, DesignGram, NoiseScale};
use projpost_cli::artifact::{Artifact, ModelInfo};
use projpost_cli::service::{router, AppState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

pub fn schema_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/schemas"))
}

/// Panics with every violation if `doc` does not match `<name>.schema.json`.
pub fn assert_schema(name: &str, doc: &Value) {
    let text = std::fs::read_to_string(schema_dir().join(format!("{name}.schema.json"))).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{doc}");
}

pub fn flat_artifact(ds: &Dataset, sigma: f64, draws: usize, seed: u64) -> Artifact {
    let gram = DesignGram::from_dataset(ds);
    let post = sample_flat_posterior(&gram, NoiseScale::Known(sigma), draws, seed).unwrap();
    Artifact::new(
        gram,
        post,
        "y",
        "z",
        ds.is_centered(),
        ModelInfo::Flat {
            sigma: Some(sigma),
            seed,
        },
    )
}

pub fn toy_artifact(seed: u64, draws: usize) -> Artifact {
    let (ds, _) = gen_toy(seed);
    flat_artifact(&ds.centered(), 1.0, draws, seed)
}

/// State-by-year panel: 47 state and 11 year dummies plus 118 correlated
/// covariates, 176 controls over 576 rows.
pub fn panel_dataset(seed: u64) -> Dataset {
    let (states, years, cont) = (48, 12, 118);
    let n = states * years;
    let p = (states - 1) + (years - 1) + cont;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let latent: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..n {
        let (s, t) = (i / years, i % years);
        if s > 0 {
            x[(i, s - 1)] = 1.0;
        }
        if t > 0 {
            x[(i, states - 1 + t - 1)] = 1.0;
        }
        for j in 0..cont {
            let e: f64 = rng.sample(StandardNormal);
            x[(i, states - 1 + years - 1 + j)] = 0.5 * latent[i] + e;
        }
    }
    let z = DVector::from_fn(n, |i, _| {
        0.3 * x[(i, p - 1)] + 0.8 * latent[i] + rng.sample::<f64, _>(StandardNormal)
    });
    let y = DVector::from_fn(n, |i, _| {
        -0.2 * z[i] + 0.5 * x[(i, p - 2)] + x[(i, 0)] + rng.sample::<f64, _>(StandardNormal)
    });
    let names = (0..p)
        .map(|j| match j {
            j if j < states - 1 => format!("state_{}", j + 2),
            j if j < states - 1 + years - 1 => format!("year_{}", j - (states - 1) + 2),
            j => format!("cov_{}", j - (states - 1 + years - 1) + 1),
        })
        .collect();
    Dataset::new(y, z, x, names).unwrap().centered()
}

/// Serves `artifact` on an ephemeral port from a background runtime.
pub struct TestServer {
    pub addr: SocketAddr,
    pub runtime: tokio::runtime::Runtime,
}

impl TestServer {
    pub fn start(artifact: Artifact) -> Self {
        Self::start_with_ui(artifact, None)
    }

    pub fn start_with_ui(artifact: Artifact, ui_dir: Option<PathBuf>) -> Self {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(Arc::new(AppState::new(artifact)), ui_dir);
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self { addr, runtime }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Controls sharing a latent factor, an exposure loading on them, and an
/// outcome depending on both.
pub fn correlated_design(seed: u64, n: usize, p: usize) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
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

/// A subset with at least one control excluded.
pub fn random_proper_subset(r: &mut ChaCha8Rng, p: usize) -> ControlSubset {
    let mut flags: Vec<bool> = (0..p).map(|_| r.random_bool(0.5)).collect();
    if p > 0 && flags.iter().all(|&f| f) {
        let j = r.random_range(0..p);
        flags[j] = false;
    }
    ControlSubset::new(flags)
}
