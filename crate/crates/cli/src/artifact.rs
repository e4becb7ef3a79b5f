//! Single-file draw container.
//!
//! ```text
//! magic  "PROJPOST"                 8 bytes
//! version                           u32 LE
//! header length                     u64 LE
//! header                            UTF-8 JSON
//! columns tau, beta_1..beta_p, sigma_eps   S × f64 LE each
//! columns chain, iter                       S × u32 LE each
//! ```
//!
//! The header carries the design's sufficient statistics, so projections
//! never need the raw panel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use projpost::sampler::SamplerConfig;
use projpost::{DesignGram, PosteriorDraws, Provenance};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"PROJPOST";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelInfo {
    Flat {
        /// `None` when σ was sampled under the Jeffreys prior.
        sigma: Option<f64>,
        seed: u64,
    },
    HsRic {
        config: SamplerConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub outcome: String,
    pub exposure: String,
    pub centered: bool,
    pub model: ModelInfo,
    pub provenance: Provenance,
    pub n_draws: usize,
    pub columns: Vec<String>,
    pub gram: DesignGram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub header: Header,
    pub draws: PosteriorDraws,
}

/// `tau, beta_1, …, beta_p, sigma_eps`.
pub fn draw_columns(p: usize) -> Vec<String> {
    std::iter::once("tau".to_string())
        .chain((1..=p).map(|j| format!("beta_{j}")))
        .chain(std::iter::once("sigma_eps".to_string()))
        .collect()
}

impl Artifact {
    pub fn new(
        gram: DesignGram,
        draws: PosteriorDraws,
        outcome: &str,
        exposure: &str,
        centered: bool,
        model: ModelInfo,
    ) -> Self {
        let header = Header {
            outcome: outcome.to_string(),
            exposure: exposure.to_string(),
            centered,
            model,
            provenance: draws.provenance(),
            n_draws: draws.n_draws(),
            columns: draw_columns(gram.p()),
            gram,
        };
        Self { header, draws }
    }

    pub fn gram(&self) -> &DesignGram {
        &self.header.gram
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let psi = self.draws.psi();
        for col in psi.column_iter() {
            for v in col.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in self.draws.sigma_eps().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.draws.chain().iter().chain(self.draws.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, label: &str) -> Result<Self> {
        let bad = |reason: String| CliError::Artifact {
            path: label.to_string(),
            reason,
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| bad("file too short".into()))?;
        if &magic != MAGIC {
            return Err(bad("not a projpost artifact".into()));
        }
        let version =
            u32::from_le_bytes(read_array(&mut r).map_err(|_| bad("truncated header".into()))?);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len =
            u64::from_le_bytes(read_array(&mut r).map_err(|_| bad("truncated header".into()))?)
                as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)
            .map_err(|_| bad("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&buf).map_err(|e| bad(format!("header: {e}")))?;
        header.gram.validate()?;
        let p = header.gram.p();
        if header.columns != draw_columns(p) {
            return Err(bad("column list does not match the design".into()));
        }

        let s = header.n_draws;
        let mut floats = |count: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; count * 8];
            r.read_exact(&mut bytes)
                .map_err(|_| bad("truncated draw block".into()))?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let psi = DMatrix::from_vec(s, p + 1, floats(s * (p + 1))?);
        let sigma = DVector::from_vec(floats(s)?);
        let mut ints = vec![0u8; 2 * s * 4];
        r.read_exact(&mut ints)
            .map_err(|_| bad("truncated draw block".into()))?;
        let ints: Vec<u32> = ints
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (chain, iter) = ints.split_at(s);
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after draw block".into()));
        }
        let draws = PosteriorDraws::with_chains(
            psi,
            sigma,
            header.provenance,
            chain.to_vec(),
            iter.to_vec(),
        )?;
        Ok(Self { header, draws })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CliError::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Draws as CSV with header `tau,beta_1..beta_p,sigma_eps,chain,iter`.
pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, sink: W) -> Result<()> {
    let p = draws.dim() - 1;
    let mut w = csv::Writer::from_writer(sink);
    let mut head = draw_columns(p);
    head.push("chain".into());
    head.push("iter".into());
    w.write_record(&head).map_err(projpost::Error::from)?;
    let psi = draws.psi();
    for i in 0..draws.n_draws() {
        let mut rec: Vec<String> = psi.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(draws.sigma_eps()[i].to_string());
        rec.push(draws.chain()[i].to_string());
        rec.push(draws.iter()[i].to_string());
        w.write_record(&rec).map_err(projpost::Error::from)?;
    }
    w.flush()?;
    Ok(())
}
