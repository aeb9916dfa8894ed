mod commands;
mod config;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::commands::Output;
use crate::config::Seeded;
use crate::error::CliError;

/// Certification, solver and estimate experiments for the regularized
/// p-parabolic equation.
#[derive(Parser, Debug)]
#[command(name = "pparab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify positive-definiteness of the weighted sum on kappa in [0, 1].
    Certify(Common),
    /// Scan a (p, gamma) region, sample landscapes, certify sign slices.
    Scan(Common),
    /// Grid-convergence study of one structure identity.
    IdentityCheck(Common),
    /// Run the explicit solver and write the trajectory.
    Solve(Common),
    /// Evaluate the local integral estimates on a trajectory.
    Estimate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config for the command.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Size of the worker pool. Outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Run outside the proven parameter range.
    #[arg(long)]
    override_range: bool,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    seed: Option<u64>,
    override_range: bool,
}

fn load<C: DeserializeOwned + Seeded>(common: &Common) -> Result<C, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg: C = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", common.config.display())))?;
    cfg.resolve_seed(common.seed);
    Ok(cfg)
}

/// Writes via a temp file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

fn execute<C, F>(name: &str, common: &Common, run: F) -> Result<Output, CliError>
where
    C: DeserializeOwned + Serialize + Seeded,
    F: FnOnce(&mut C) -> Result<Output, CliError>,
{
    let mut cfg: C = load(common)?;
    let mut out = run(&mut cfg)?;
    let record = RunRecord {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        seed: *cfg.seed_slot(),
        config: &cfg,
        override_range: common.override_range,
    };
    let mut run_json = serde_json::to_vec_pretty(&record).map_err(pparab_core::Error::from)?;
    run_json.push(b'\n');
    out.files.push(("run.json".into(), run_json));
    fs::create_dir_all(&common.out)?;
    for (file, bytes) in &out.files {
        write_atomic(&common.out, file, bytes)?;
    }
    Ok(out)
}

fn dispatch(cmd: &Command) -> Result<Output, CliError> {
    match cmd {
        Command::Certify(c) => execute("certify", c, |cfg| commands::certify(cfg, c.override_range)),
        Command::Scan(c) => execute("scan", c, |cfg| commands::scan(cfg)),
        Command::IdentityCheck(c) => execute("identity-check", c, |cfg| commands::identity(cfg)),
        Command::Solve(c) => execute("solve", c, |cfg| commands::solve_cmd(cfg)),
        Command::Estimate(c) => execute("estimate", c, |cfg| commands::estimate(cfg, c.override_range)),
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Certify(c)
        | Command::Scan(c)
        | Command::IdentityCheck(c)
        | Command::Solve(c)
        | Command::Estimate(c) => c,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    if let Some(n) = common(&cli.command).workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(3);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match dispatch(&cli.command) {
        Ok(out) => {
            println!("{}", out.summary);
            ExitCode::from(out.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
