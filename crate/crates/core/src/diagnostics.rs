//! Per-coefficient posterior summaries with convergence diagnostics.
//!
//! ESS uses Geyer's initial monotone sequence on multi-chain
//! autocorrelations, with chains split in half as for R̂. Constant draws
//! get ESS = S and R̂ = 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{mean_sd, quantile_sorted, PosteriorDraws};

pub const MIN_DRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub ess: f64,
    pub rhat: f64,
}

/// One summary per column of ψ (τ first).
pub fn summarize_draws(draws: &PosteriorDraws) -> Result<Vec<DrawSummary>> {
    if draws.n_draws() < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            needed: MIN_DRAWS,
            have: draws.n_draws(),
        });
    }
    (0..draws.dim())
        .map(|j| summarize_chains(&draws.by_chain(j)))
        .collect()
}

/// Summary of one scalar quantity given its draws per chain.
pub fn summarize_chains(chains: &[Vec<f64>]) -> Result<DrawSummary> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    if all.len() < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            needed: MIN_DRAWS,
            have: all.len(),
        });
    }
    let (mean, sd) = mean_sd(&all);
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(DrawSummary {
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q500: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
        ess: ess(chains),
        rhat: split_rhat(chains),
    })
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let mut it = chains.iter().flatten();
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

/// Halves of every chain, truncated to a common even length.
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..n], &c[c.len() - n..]])
        .collect()
}

fn chain_mean_var(c: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_sd(c);
    (m, sd * sd)
}

/// Split-R̂.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return 1.0;
    }
    let parts = split(chains);
    let n = parts.first().map_or(0, |c| c.len());
    if n < 2 {
        return f64::NAN;
    }
    let stats: Vec<(f64, f64)> = parts.iter().map(|c| chain_mean_var(c)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let (_, sd_means) = mean_sd(&means);
    let nf = n as f64;
    let b_over_n = sd_means * sd_means;
    if w == 0.0 {
        return f64::INFINITY;
    }
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Effective sample size of the pooled draws.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let total: usize = chains.iter().map(Vec::len).sum();
    if is_constant(chains) {
        return total as f64;
    }
    let parts = split(chains);
    let n = parts.first().map_or(0, |c| c.len());
    let m = parts.len();
    if n < 4 {
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = parts.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    // Biased autocovariance of chain k at lag t.
    let acov = |k: usize, t: usize| -> f64 {
        let c = parts[k];
        let mu = means[k];
        (0..n - t)
            .map(|i| (c[i] - mu) * (c[i + t] - mu))
            .sum::<f64>()
            / nf
    };
    let acov0: Vec<f64> = (0..m).map(|k| acov(k, 0)).collect();
    let w = acov0.iter().sum::<f64>() / m as f64 * nf / (nf - 1.0);
    let mut var_plus = w * (nf - 1.0) / nf;
    if m > 1 {
        let (_, sd) = mean_sd(&means);
        var_plus += sd * sd;
    }
    if var_plus <= 0.0 {
        return total as f64;
    }
    let rho = |t: usize| -> f64 {
        let mean_acov = (0..m).map(|k| acov(k, t)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    // Initial positive, monotone sequence of paired autocorrelations.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 {
            1.0 + rho(1)
        } else {
            rho(t) + rho(t + 1)
        };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 2;
    }
    let tau_int = (-1.0 + 2.0 * sum).max(1.0 / (m as f64 * nf).log10().max(1.0));
    m as f64 * nf / tau_int
}
