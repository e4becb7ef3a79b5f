use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use projpost_cli::artifact::Artifact;
use projpost_cli::cli::{Cli, Command, ServeArgs};
use projpost_cli::{commands, service, CliError, Result};

/// Worker cap from `PROJPOST_THREADS`, if set.
fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("PROJPOST_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "PROJPOST_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn serve(args: &ServeArgs, threads: Option<usize>) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| {
            CliError::Config(format!(
                "bad listen address {}:{}: {e}",
                args.host, args.port
            ))
        })?;
    let artifact = Artifact::load(&args.artifact)?;
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    rt.enable_all();
    if let Some(n) = threads {
        rt.worker_threads(n).max_blocking_threads(n);
    }
    rt.build()?
        .block_on(service::serve(artifact, addr, args.ui_dir.clone()))
}

fn run(cli: Cli) -> Result<()> {
    let threads = thread_cap()?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Project(a) => commands::project(a),
        Command::Stepwise(a) => commands::stepwise(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Serve(a) => serve(a, threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
