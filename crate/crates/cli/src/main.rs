use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resetlab_cli::scenarios::{self, BUNDLED};
use resetlab_cli::{load, parse, run_scenario, RunError, Scenario};

const OUTPUT_ROOT_VAR: &str = "RESETLAB_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "resetlab", version, about = "Run reset-control reproduction scenarios")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run {
        config: String,
        /// Output root; overrides RESETLAB_OUTPUT_ROOT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios, plus any .cfg files in --dir.
    List {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { config: String },
}

fn resolve(config: &str) -> Result<Scenario, RunError> {
    let path = Path::new(config);
    if path.exists() {
        return Ok(load(path)?);
    }
    match scenarios::find(config) {
        Some(b) => Ok(parse(b.text)?),
        None => Ok(load(path)?),
    }
}

fn describe(text: &str) -> String {
    match parse(text) {
        Ok(s) => format!("{:<14} {}", s.kind, s.description),
        Err(e) => format!("invalid: {e}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::List { dir } => {
            // a closed pipe (`resetlab list | head`) is not an error
            let mut out = std::io::stdout().lock();
            for b in BUNDLED {
                let _ = writeln!(out, "{:<8} {}", b.name, describe(b.text));
            }
            if let Some(dir) = dir {
                match scenarios::custom(&dir) {
                    Ok(files) => {
                        for f in files {
                            let text = std::fs::read_to_string(&f).unwrap_or_default();
                            let _ = writeln!(out, "{} {}", f.display(), describe(&text));
                        }
                    }
                    Err(e) => eprintln!("warning: cannot read {}: {e}", dir.display()),
                }
            }
            Ok(())
        }
        Command::Validate { config } => resolve(&config).map(|s| {
            println!("ok: {} scenario with {} grid points", s.kind, s.grid.len());
        }),
        Command::Run { config, out } => {
            let root = out
                .or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("resetlab-out"));
            resolve(&config).and_then(|s| run_scenario(&s, &root)).map(|files| {
                for f in files {
                    println!("{}", f.display());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
