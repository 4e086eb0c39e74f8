use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use risfair_cli::output::write_csv;
use risfair_cli::simulate::simulate;
use risfair_cli::validate::{grad_check, validate, GradientFault};
use risfair_cli::{ExperimentConfig, Overrides};

/// Max-min fair uplink allocation for RIS-aided multi-user MIMO.
///
/// Every flag can also be set through an environment variable with the
/// `RISFAIR_` prefix (`RISFAIR_SEED`, `RISFAIR_TRIALS`, ...). Flags win over
/// the environment, which wins over the config file.
#[derive(Debug, Parser)]
#[command(name = "risfair", version)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = "RISFAIR_SEED")]
    seed: Option<u64>,
    /// Monte-Carlo trials per scheme and sweep point.
    #[arg(long, global = true, env = "RISFAIR_TRIALS")]
    trials: Option<usize>,
    /// Output file (CSV for simulate/sweep, text report otherwise).
    #[arg(long, global = true, env = "RISFAIR_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, env = "RISFAIR_THREADS")]
    threads: Option<usize>,
    /// Write NA in timing columns so output depends only on config and seed.
    #[arg(long, global = true, env = "RISFAIR_NO_TIMING")]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured schemes (over the sweep, if any) and write a CSV.
    Simulate { config: PathBuf },
    /// Like simulate, but the config must define a [sweep].
    Sweep { config: PathBuf },
    /// Closed forms, large-system convergence and the gradient oracle.
    Validate {
        config: PathBuf,
        #[arg(long, hide = true)]
        inject_gradient_error: Option<f64>,
    },
    /// Analytic against finite-difference phase gradients, per instance.
    GradCheck {
        config: PathBuf,
        #[arg(long, hide = true)]
        inject_gradient_error: Option<f64>,
    },
}

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::from_path(path).map_err(|e| e.to_string())?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        trials: cli.trials,
        output: cli.out.clone(),
        threads: cli.threads,
    });
    Ok(cfg)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, String> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| format!("cannot create {}: {e}", p.display())),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn run(cli: &Cli) -> Result<bool, String> {
    match &cli.command {
        Command::Simulate { config } | Command::Sweep { config } => {
            let cfg = load(config, cli)?;
            if matches!(cli.command, Command::Sweep { .. }) && cfg.sweep.is_none() {
                return Err(format!("{}: sweep needs a [sweep] section", config.display()));
            }
            let report = simulate(&cfg);
            let mut out = sink(cfg.output.as_deref())?;
            write_csv(&mut out, &report.rows, !cli.no_timing).map_err(|e| e.to_string())?;
            out.flush().map_err(|e| e.to_string())?;
            if !cli.no_timing {
                eprint!("{}", report.runtime_text());
            }
            for row in report.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("warning: {} failed: {}", row.scheme, row.error.as_deref().unwrap_or(""));
            }
            Ok(true)
        }
        Command::Validate {
            config,
            inject_gradient_error,
        }
        | Command::GradCheck {
            config,
            inject_gradient_error,
        } => {
            let cfg = load(config, cli)?;
            let fault = GradientFault {
                relative: inject_gradient_error.unwrap_or(0.0),
            };
            let report = if matches!(cli.command, Command::Validate { .. }) {
                validate(&cfg, fault)
            } else {
                grad_check(&cfg, fault)
            };
            let mut out = sink(cli.out.as_deref())?;
            out.write_all(report.text().as_bytes()).map_err(|e| e.to_string())?;
            out.flush().map_err(|e| e.to_string())?;
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
