use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use massfield_cli::{config::ExperimentConfig, exit, registry};

#[derive(Parser)]
#[command(
    name = "massfield",
    version,
    about = "Monte Carlo verification matrix for interacting Feller mass fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tests selected by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the test registry.
    ListTests,
    /// Write raw path, field and atom CSVs for plotting.
    EmitPaths {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Master seed (overrides run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (overrides run.jobs).
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(path: &Path, o: Overrides) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(exit::CONFIG as u8)
    })?;
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(d) = o.out_dir {
        cfg.out_dir = d;
    }
    match o.jobs {
        Some(0) => {
            eprintln!("config error: --jobs: must be positive");
            return Err(ExitCode::from(exit::CONFIG as u8));
        }
        Some(j) => cfg.jobs = Some(j),
        None => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListTests => {
            print!("{}", registry::listing());
            ExitCode::SUCCESS
        }
        Command::Run { config, overrides } => {
            let cfg = match load(&config, overrides) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match massfield_cli::run(&cfg) {
                Ok(outcome) => {
                    for o in &outcome.outcomes {
                        let status = match (o.passed(), o.mandatory) {
                            (true, _) => "PASS",
                            (false, true) => "FAIL",
                            (false, false) => "INFO",
                        };
                        let failed = o.reports.iter().filter(|r| r.pass == Some(false)).count();
                        println!(
                            "{status} {} ({} reports, {failed} failed)",
                            o.test,
                            o.reports.len()
                        );
                    }
                    println!("reports in {}", cfg.out_dir.display());
                    if outcome.all_mandatory_passed() {
                        ExitCode::from(exit::PASS as u8)
                    } else {
                        ExitCode::from(exit::FAIL as u8)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit::FAIL as u8)
                }
            }
        }
        Command::EmitPaths { config, overrides } => {
            let cfg = match load(&config, overrides) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match massfield_cli::emit_paths(&cfg) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit::FAIL as u8)
                }
            }
        }
    }
}
