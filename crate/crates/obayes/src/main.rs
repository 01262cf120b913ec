//! `obayes`: posterior model probabilities and follow-up designs for
//! two-level factorial screening experiments.

use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use obayes::commands::{self, Output};
use obayes::config::{ExperimentConfig, Overrides};
use obayes::error::{CliError, Result};
use obayes::search::thread_cap;

#[derive(Parser)]
#[command(
    name = "obayes",
    version,
    about = "Objective-Bayes screening analysis and follow-up design search",
    after_help = "\
Examples:
  obayes posterior data/reactor_screening.csv
  obayes followup data/reactor_screening.csv --order 3 --out reports
  obayes combined data/reactor_screening.csv data/reactor_followup.csv
  obayes diagnostics data/reactor_full.csv --reference-check

Set OBAYES_THREADS to cap the search threads."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model posterior and factor activity of one design
    Posterior {
        design: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank follow-up designs by model discrimination
    Followup {
        design: PathBuf,
        /// Candidate runs CSV (default: the full factorial in standard order)
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-analyze screening plus follow-up runs with a block effect
    Combined {
        screening: PathBuf,
        followup: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Heterogeneity of the posterior, plus contrast plot data for a full factorial
    Diagnostics {
        design: PathBuf,
        /// Follow-up runs; reports screening and combined heterogeneity
        followup: Option<PathBuf>,
        /// Include the robust-vs-reference predictive divergence curve
        #[arg(long)]
        reference_check: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Highest interaction order in a model (2 or 3)
    #[arg(long)]
    order: Option<usize>,
    /// Model-space prior: beta:a,b or pi:v
    #[arg(long)]
    prior: Option<String>,
    /// omd (objective analysis) or cmd (conventional analysis)
    #[arg(long)]
    criterion: Option<String>,
    /// Conventional prior scale of the model terms
    #[arg(long)]
    gamma: Option<f64>,
    /// Conventional factor activity probability
    #[arg(long)]
    pi: Option<f64>,
    /// Number of follow-up runs
    #[arg(long)]
    n_star: Option<usize>,
    /// Number of ranked designs to report
    #[arg(long)]
    top_k: Option<usize>,
    /// Drop models below this posterior probability before the search
    #[arg(long)]
    prob_floor: Option<f64>,
    /// Fit the design's block column as a common effect
    #[arg(long)]
    block: bool,
    /// Seed for the exchange search and the reference check
    #[arg(long)]
    seed: Option<u64>,
    /// Report format: csv or json
    #[arg(long)]
    format: Option<String>,
    /// Use the randomized exchange heuristic instead of exhaustive search
    #[arg(long)]
    exchange: bool,
    /// Random starts of the exchange search
    #[arg(long)]
    starts: Option<usize>,
    /// Largest design space searched exhaustively
    #[arg(long)]
    max_designs: Option<u64>,
    /// Flat TOML file of settings; flags win over it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report files (default: print the reports)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let flags = Overrides {
            order: self.order,
            prior: self.prior.clone(),
            criterion: self.criterion.clone(),
            gamma: self.gamma,
            pi: self.pi,
            n_star: self.n_star,
            top_k: self.top_k,
            prob_floor: self.prob_floor,
            block: self.block.then_some(true),
            seed: self.seed,
            format: self.format.clone(),
            exchange: self.exchange.then_some(true),
            starts: self.starts,
            max_designs: self.max_designs,
        };
        ExperimentConfig::resolve(self.config.as_deref(), &flags)
    }
}

fn emit(out: &Output, dir: Option<&PathBuf>) -> Result<()> {
    let print = |text: &str| {
        let mut stdout = std::io::stdout().lock();
        match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
            Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(CliError::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            }),
            _ => Ok(()),
        }
    };
    print(&out.summary)?;
    match dir {
        Some(d) => {
            for path in out.write_to(d)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            for (name, body) in &out.files {
                print(&format!("\n== {name}\n{body}"))?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (out, dir) = match &cli.command {
        Command::Posterior { design, common } => (commands::posterior(design, &common.resolve()?)?, &common.out),
        Command::Followup {
            design,
            candidates,
            common,
        } => {
            let cfg = common.resolve()?;
            let out = commands::followup(design, candidates.as_deref(), &cfg, thread_cap()?)?;
            (out, &common.out)
        }
        Command::Combined {
            screening,
            followup,
            common,
        } => (commands::combined(screening, followup, &common.resolve()?)?, &common.out),
        Command::Diagnostics {
            design,
            followup,
            reference_check,
            common,
        } => {
            let cfg = common.resolve()?;
            let out = commands::diagnostics(design, followup.as_deref(), &cfg, *reference_check)?;
            (out, &common.out)
        }
    };
    emit(&out, dir.as_ref())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
