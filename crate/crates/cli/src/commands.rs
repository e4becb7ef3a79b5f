use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use projpost::analytic::{refit_from_gram, residual_sigma, verify_appendix_identities};
use projpost::data::{default_controls, load_dataset, write_dataset};
use projpost::diagnostics::summarize_draws;
use projpost::projector::{backward_stepwise_gram, project_tau, tau_row};
use projpost::sampler::SamplerConfig;
use projpost::simgen::{gen_sim, gen_toy_n, TOY_N};
use projpost::{
    diff_mean, gibbs_ric, ric_to_standard, sample_flat_posterior, ControlSubset, Dataset,
    DesignGram, DiffMean, NoiseScale, PosteriorDraws, StopRule, TauSummary,
};

use crate::artifact::{write_draws_csv, Artifact, ModelInfo};
use crate::cli::{
    DataArgs, Design, FitArgs, ModelKind, ProjectArgs, SimulateArgs, StepwiseArgs, VerifyArgs,
};
use crate::error::{CliError, Result};
use crate::report::{CoefficientRow, FitSummary, ProjectionRow, RefitColumns, StepwiseReport};
use crate::subset_spec::SubsetSpecFile;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_dataset(path: &Path, args: &DataArgs) -> Result<Dataset> {
    let controls = if args.controls.is_empty() {
        default_controls(open(path)?, &args.outcome, &args.exposure)?
    } else {
        args.controls.clone()
    };
    Ok(load_dataset(
        open(path)?,
        &args.outcome,
        &args.exposure,
        &controls,
        !args.no_center,
    )?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn coordinate_names(gram: &DesignGram) -> Vec<String> {
    std::iter::once("tau".to_string())
        .chain(gram.control_names.iter().cloned())
        .collect()
}

fn sampler_config(args: &FitArgs) -> Result<SamplerConfig> {
    let mut cfg = match &args.config {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
        None => SamplerConfig::default(),
    };
    if let Some(v) = args.iters {
        cfg.n_iter = v;
    }
    if let Some(v) = args.burn {
        cfg.n_burn = v;
    }
    if let Some(v) = args.thin {
        cfg.thin = v;
    }
    if let Some(v) = args.chains {
        cfg.chains = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if !args.unpenalized.is_empty() {
        cfg.unpenalized_cols = args.unpenalized.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let (draws, model, gram, centered) = match args.model {
        ModelKind::Flat => {
            if args.config.is_some() || args.iters.is_some() || args.chains.is_some() {
                return Err(CliError::Config(
                    "sampler options apply to --model hs-ric only".into(),
                ));
            }
            let noise = match (args.sigma, args.sample_sigma) {
                (Some(_), true) => {
                    return Err(CliError::Config(
                        "give either --sigma or --sample-sigma, not both".into(),
                    ))
                }
                (Some(s), false) if s > 0.0 && s.is_finite() => NoiseScale::Known(s),
                (Some(s), false) => {
                    return Err(CliError::Config(format!(
                        "--sigma must be positive, got {s}"
                    )))
                }
                (None, true) => NoiseScale::Jeffreys,
                (None, false) => return Err(CliError::Config(
                    "the flat model needs a noise scale: pass --sigma <value> or --sample-sigma"
                        .into(),
                )),
            };
            let ds = read_dataset(&args.data, &args.data_args)?;
            let gram = DesignGram::from_dataset(&ds);
            let seed = args.seed.unwrap_or(0);
            let draws = sample_flat_posterior(&gram, noise, args.draws, seed)?;
            (
                draws,
                ModelInfo::Flat {
                    sigma: args.sigma,
                    seed,
                },
                gram,
                ds.is_centered(),
            )
        }
        ModelKind::HsRic => {
            if args.sigma.is_some() || args.sample_sigma {
                return Err(CliError::Config(
                    "--sigma and --sample-sigma apply to --model flat only".into(),
                ));
            }
            let cfg = sampler_config(args)?;
            let ds = read_dataset(&args.data, &args.data_args)?;
            let draws = ric_to_standard(&gibbs_ric(&ds, &cfg)?)?;
            (
                draws,
                ModelInfo::HsRic { config: cfg },
                DesignGram::from_dataset(&ds),
                ds.is_centered(),
            )
        }
    };

    let names = coordinate_names(&gram);
    let summaries = summarize_draws(&draws)?;
    let summary = FitSummary {
        model: match args.model {
            ModelKind::Flat => "flat".into(),
            ModelKind::HsRic => "hs-ric".into(),
        },
        provenance: draws.provenance(),
        n: gram.n,
        p: gram.p(),
        n_draws: draws.n_draws(),
        chains: draws.by_chain(0).len(),
        coefficients: names
            .iter()
            .zip(summaries)
            .map(|(name, summary)| CoefficientRow {
                name: name.clone(),
                summary,
            })
            .collect(),
    };
    print_fit_table(&summary);

    let artifact = Artifact::new(
        gram,
        draws,
        &args.data_args.outcome,
        &args.data_args.exposure,
        centered,
        model,
    );
    artifact.save(&args.out)?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "summary.json"));
    write_json(&summary_path, &summary)?;
    if let Some(path) = &args.draws_csv {
        write_draws_csv(&artifact.draws, BufWriter::new(File::create(path)?))?;
    }
    println!(
        "wrote {} and {}",
        args.out.display(),
        summary_path.display()
    );
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn print_fit_table(s: &FitSummary) {
    println!(
        "{:<16} {:>10} {:>9} {:>10} {:>10} {:>10} {:>8} {:>7}",
        "coefficient", "mean", "sd", "2.5%", "50%", "97.5%", "ess", "rhat"
    );
    for row in &s.coefficients {
        let d = &row.summary;
        println!(
            "{:<16} {:>10.4} {:>9.4} {:>10.4} {:>10.4} {:>10.4} {:>8.0} {:>7.3}",
            row.name, d.mean, d.sd, d.q025, d.q500, d.q975, d.ess, d.rhat
        );
    }
}

/// Treatment draws projected onto `phi`; the full set returns the
/// original draws untouched.
pub fn projected_tau(
    gram: &DesignGram,
    draws: &PosteriorDraws,
    phi: &ControlSubset,
) -> Result<Vec<f64>> {
    if phi.is_full() {
        phi.check_len(gram.p())?;
        return Ok(draws.tau());
    }
    Ok(project_tau(draws, &tau_row(gram, phi)?)?)
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    let artifact = Artifact::load(&args.artifact)?;
    let spec = SubsetSpecFile::load(&args.spec)?;
    let gram = artifact.gram();
    let subsets = spec.resolve(&gram.control_names)?;
    let original = artifact.draws.tau();
    if let Some(dir) = &args.dump_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut rows = Vec::with_capacity(subsets.len());
    for (label, phi) in &subsets {
        let tau = projected_tau(gram, &artifact.draws, phi)?;
        let s = TauSummary::from_draws(&tau);
        let refit = if args.compare_refit {
            let sigma = residual_sigma(gram, phi)?;
            let post = refit_from_gram(gram, phi, sigma)?;
            let r = TauSummary::gaussian(post.tau_mean(), post.tau_var());
            Some(RefitColumns {
                sigma_refit: sigma,
                mean: r.mean,
                sd: r.sd,
                q025: r.q025,
                q975: r.q975,
            })
        } else {
            None
        };
        if let Some(dir) = &args.dump_dir {
            write_tau_csv(
                &dir.join(format!("{}.csv", file_label(label))),
                &tau,
                &artifact.draws,
            )?;
        }
        rows.push(ProjectionRow {
            label: label.clone(),
            q: phi.q(),
            include: phi
                .included()
                .iter()
                .map(|&j| gram.control_names[j].clone())
                .collect(),
            mean: s.mean,
            sd: s.sd,
            q025: s.q025,
            q975: s.q975,
            d_m: diff_mean(&original, &tau)?,
            refit,
        });
    }

    print!(
        "{:<24} {:>4} {:>10} {:>10} {:>10} {:>11}",
        "label", "q", "mean", "2.5%", "97.5%", "d_M"
    );
    if args.compare_refit {
        print!(
            " {:>10} {:>10} {:>10} {:>8}",
            "refit", "refit 2.5%", "refit 97.5%", "sigma'"
        );
    }
    println!();
    for r in &rows {
        print!(
            "{:<24} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>11.3e}",
            r.label, r.q, r.mean, r.q025, r.q975, r.d_m
        );
        if let Some(f) = &r.refit {
            print!(
                " {:>10.4} {:>10.4} {:>10.4} {:>8.4}",
                f.mean, f.q025, f.q975, f.sigma_refit
            );
        }
        println!();
    }
    if let Some(path) = &args.out {
        write_json(path, &rows)?;
    }
    Ok(())
}

fn write_tau_csv(path: &Path, tau: &[f64], draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["tau", "chain", "iter"])
        .map_err(projpost::Error::from)?;
    for (i, t) in tau.iter().enumerate() {
        w.write_record([
            t.to_string(),
            draws.chain()[i].to_string(),
            draws.iter()[i].to_string(),
        ])
        .map_err(projpost::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `d_M > t`.
pub fn parse_stop_when(text: &str) -> Result<f64> {
    let bad = || {
        CliError::Config(format!(
            "--stop-when expects `d_M > <threshold>`, got {text:?}"
        ))
    };
    let (metric, value) = text.split_once('>').ok_or_else(bad)?;
    if metric.trim() != "d_M" {
        return Err(bad());
    }
    let t: f64 = value.trim().parse().map_err(|_| bad())?;
    if !t.is_finite() || t < 0.0 {
        return Err(bad());
    }
    Ok(t)
}

pub fn stepwise(args: &StepwiseArgs) -> Result<()> {
    let max_distance = args.stop_when.as_deref().map(parse_stop_when).transpose()?;
    let artifact = Artifact::load(&args.artifact)?;
    let gram = artifact.gram();
    if let Some(k) = args.keep {
        if k > gram.p() {
            return Err(CliError::Config(format!(
                "--keep {k} exceeds the {} controls",
                gram.p()
            )));
        }
    }
    let stop = StopRule {
        keep: args.keep,
        max_distance,
        keep_draws: args.draws_dir.is_some(),
    };
    let path = backward_stepwise_gram(gram, &artifact.draws, &DiffMean, stop)?;
    let report = StepwiseReport::from_path(&path, &gram.control_names, "d_M");

    println!(
        "{:>4} {:<16} {:>11} {:>10} {:>10} {:>10}",
        "step", "removed", "d_M", "mean", "2.5%", "97.5%"
    );
    for s in &report.steps {
        println!(
            "{:>4} {:<16} {:>11.3e} {:>10.4} {:>10.4} {:>10.4}",
            s.step, s.removed, s.d_value, s.tau_mean, s.tau_q025, s.tau_q975
        );
    }
    write_json(&args.out, &report)?;
    if let Some(plot) = &args.plot {
        report.write_plot_csv(BufWriter::new(File::create(plot)?))?;
    }
    if let Some(dir) = &args.draws_dir {
        std::fs::create_dir_all(dir)?;
        for (k, step) in path.steps.iter().enumerate() {
            if let Some(tau) = &step.draws {
                write_tau_csv(
                    &dir.join(format!("step_{:03}.csv", k + 1)),
                    tau,
                    &artifact.draws,
                )?;
            }
        }
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let n = args.n.unwrap_or(TOY_N);
    let (ds, _) = match args.design {
        Design::Toy => gen_toy_n(args.seed, n)?,
        Design::Wang => gen_sim(args.seed, n)?,
    };
    write_dataset(&ds, BufWriter::new(File::create(&args.out)?), "y", "z")?;
    println!(
        "wrote {} rows x {} controls to {}",
        ds.n(),
        ds.p(),
        args.out.display()
    );
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Result<()> {
    let ds = read_dataset(&args.data, &args.data_args)?;
    let names = ds.control_names().to_vec();
    let phi = match &args.include {
        Some(include) => ControlSubset::from_names(&names, include)?,
        None => {
            let mut phi = ControlSubset::full(ds.p());
            for name in &args.exclude {
                let j = names
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| projpost::Error::UnknownControl(name.clone()))?;
                phi = phi.without(j);
            }
            phi
        }
    };
    let report = verify_appendix_identities(&ds, &phi)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    let failures = report.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Identities(failures.len(), failures.join(", ")))
    }
}
