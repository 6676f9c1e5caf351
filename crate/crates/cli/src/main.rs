use std::path::Path;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::Parser;

mod args;
mod error;
mod job;
mod run;

use args::{Cli, Command};
use error::{CliError, ResultExt};
use job::{Manifest, VERSION};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match try_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_main(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Invalid(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .runtime()?;
    }
    let (manifest, out) = match cli.command {
        Command::Replay(r) => {
            let m = Manifest::read(&r.manifest)?;
            if m.version != VERSION {
                eprintln!(
                    "warning: manifest written by version {}, running {VERSION}",
                    m.version
                );
            }
            m.job.validate(m.seed)?;
            let out = r.out.unwrap_or_else(|| {
                r.manifest
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .unwrap_or(Path::new("."))
                    .to_path_buf()
            });
            (m, out)
        }
        cmd => job::from_cli(cmd)?,
    };
    println!("seed: {}", manifest.seed);

    let outputs = run::execute(&manifest)?;
    let strict = match &manifest.job {
        job::Job::Hurst(j) => j.output.strict,
        job::Job::Dcca(j) => j.output.strict,
        job::Job::Network(j) => j.output.strict,
        job::Job::Report(j) => j.output.strict,
        job::Job::Synth(_) => false,
    };
    outputs.write(&out)?;
    println!("wrote {} files to {}", outputs.files.len(), out.display());

    if outputs.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for f in &outputs.failures {
        eprintln!("failed: {}: {}", f.series_id, f.reason);
    }
    Ok(if strict {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}
