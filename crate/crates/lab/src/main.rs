use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhic_lab::{list_tasks, render_catalog, run_config, RunOptions};

#[derive(Parser)]
#[command(
    name = "nhic",
    version,
    about = "Numerical experiments on invariant cylinders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task named in a config file.
    Run {
        config: PathBuf,
        /// Directory for report.json, CSV tables and SVG plots.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config; TOML integers cap it at 2^63 - 1.
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: Option<u64>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the available tasks.
    Tasks {
        #[arg(long)]
        json: bool,
    },
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Tasks { json } => {
            let entries = list_tasks();
            if json {
                match serde_json::to_string_pretty(&entries) {
                    Ok(s) => emit(&format!("{s}\n")),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
            } else {
                emit(&render_catalog(&entries));
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            jobs,
        } => match run_config(&config, &out, RunOptions { seed, jobs }) {
            Ok(report) => {
                let mut text = String::new();
                for c in &report.checks {
                    let verdict = if c.passed { "PASS" } else { "FAIL" };
                    text.push_str(&format!("{verdict} {}: {}\n", c.name, c.detail));
                }
                text.push_str(&format!("report: {}\n", out.join("report.json").display()));
                emit(&text);
                ExitCode::from(report.exit_code() as u8)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
