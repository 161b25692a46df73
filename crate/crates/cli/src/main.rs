use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dipolesim_cli::{presets, run, write_error, CliError, RunOptions};

/// Driven dipole-coupled emitter arrays: steady states, photon statistics and
/// directional emission from a JSON scenario file.
#[derive(Parser)]
#[command(name = "simulate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write CSV tables, summary.json and manifest.json.
    Run {
        /// Scenario file; a shipped config name (e.g. fig2.json) also works.
        config: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Output directory, as a positional alternative to --out.
        #[arg(conflicts_with = "out")]
        out_dir: Option<PathBuf>,
        /// Base seed for disorder realizations (overrides disorder.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads [env: DIPOLESIM_THREADS; default: all cores].
        #[arg(long)]
        threads: Option<usize>,
        /// Override a config field, e.g. --set geometry.n=12 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the shipped figure configs, or print one.
    Presets {
        /// Print this config's JSON.
        name: Option<String>,
    },
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DIPOLESIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Override(format!("DIPOLESIM_THREADS={v}: expected a thread count"))),
        Err(_) => Ok(None),
    }
}

fn fail(err: &CliError) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Presets { name: None } => {
            for p in presets::SHIPPED {
                println!("{:<22} {}", p.file, p.description);
            }
            ExitCode::SUCCESS
        }
        Command::Presets { name: Some(name) } => match presets::find(&name) {
            Some(p) => {
                print!("{}", p.json);
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("{}", serde_json::json!({"error": {"kind": "unknown_preset", "message": format!("no shipped config `{name}`"), "exit_code": 2}}));
                ExitCode::from(2)
            }
        },
        Command::Run { config, out, out_dir, seed, threads: flag, overrides } => {
            let out = out.or(out_dir).unwrap_or_else(|| PathBuf::from("out"));
            match threads(flag) {
                Ok(Some(n)) => {
                    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                        log::warn!("thread pool: {e}");
                    }
                }
                Ok(None) => {}
                Err(e) => return fail(&e),
            }
            match run(&config, &out, &RunOptions { seed, overrides }) {
                Ok(m) => {
                    log::info!("wrote {} files to {} in {:.2} s", m.files.len() + 1, out.display(), m.wall_time_seconds);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    write_error(&out, &e);
                    fail(&e)
                }
            }
        }
    }
}
