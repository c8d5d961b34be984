use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "lienard-lab", version, about = "Bounded and almost periodic solutions of nonautonomous Lienard-type systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long, visible_alias = "spec", value_name = "PATH")]
    pub scenario: PathBuf,
    /// Primary output (JSON report or CSV series, depending on the command).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search and verify almost periods of the coefficient signals.
    Signal {
        #[command(flatten)]
        common: Common,
    },
    /// Planar reduction of the model, optionally with the coefficient-condition grid check.
    Model {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        check_lemma1: bool,
    },
    /// Evolution matrix, Liouville and cocycle checks.
    Propagate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        to: f64,
    },
    /// Dichotomy constants, Green decay and Green almost-periodicity.
    Dichotomy {
        #[command(flatten)]
        common: Common,
    },
    /// Bounded mild solution by Picard iteration.
    Solve {
        #[command(flatten)]
        common: Common,
        /// `wholeline` or `halfline`.
        #[arg(long)]
        mode: Option<String>,
        /// Output window `a,b`.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// JSON report next to the CSV series.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Perturbation decay against the Gronwall envelope.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        offsets: Option<usize>,
    },
    /// Sine-truncated parabolic problem.
    Pde {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("LIENARD_LAB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("LIENARD_LAB_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("LIENARD_LAB_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    configure_threads()?;
    match cli.command {
        Command::Signal { common } => commands::signal(&common),
        Command::Model { common, check_lemma1 } => commands::model(&common, check_lemma1),
        Command::Propagate { common, from, to } => commands::propagate(&common, from, to),
        Command::Dichotomy { common } => commands::dichotomy(&common),
        Command::Solve {
            common,
            mode,
            window,
            report,
        } => commands::solve(&common, mode.as_deref(), window.as_deref(), report.as_deref()),
        Command::Stability { common, offsets } => commands::stability(&common, offsets),
        Command::Pde { common, window, report } => commands::pde(&common, window.as_deref(), report.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Certified) => ExitCode::SUCCESS,
        Ok(Outcome::CertificateFailed(reasons)) => {
            for r in reasons {
                eprintln!("certificate failure: {r}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            match e.downcast_ref::<lienard_core::Error>() {
                Some(lienard_core::Error::CertificateRefused(msg)) => {
                    eprintln!("certificate failure: {msg}");
                    return ExitCode::from(2);
                }
                Some(lienard_core::Error::Smallness { .. }) => {
                    eprintln!("certificate failure: {e}");
                    return ExitCode::from(2);
                }
                _ => {}
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
