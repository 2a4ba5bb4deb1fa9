//! `peerpred` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or parse errors, 2 when an input
//! fails validation (the assumption report is still written).

mod commands;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "peerpred", version, about = "Audit peer-prediction mechanisms over explicit common priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the structural assumptions on a prior.
    ValidatePrior,
    /// Draw a random latent-state prior.
    GenPrior,
    /// Expected and sampled payments per agent.
    Payout,
    /// Welfare decomposition of one profile, or the comparison table.
    Welfare,
    /// Equilibrium gaps for every agent and private signal.
    CheckEq,
    /// Solve for equilibrium predictions given the profile's signal strategies.
    SolvePredictions,
    /// Inequality audits for a profile.
    Audit,
    /// The relabeling cycle for a strategy rule.
    Impossibility,
    /// Concentration of leave-one-out predictions as n grows.
    SweepN,
    /// Run the acceptance battery.
    Suite,
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// Input file (prior for validate-prior).
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub prior: Option<PathBuf>,
    /// Profile file, or one of truth, uniform, constant:<signal>,
    /// perm:<a-b-..>, counterexample.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true)]
    pub mech: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub rule: Option<String>,
    #[arg(long, global = true)]
    pub variant: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Equilibrium tolerance for check-eq (default 1e-9); the concentration
    /// level for audit.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for independent units; results merge in a fixed order.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Number of agents; sweep-n takes a comma-separated list.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Signals for gen-prior.
    #[arg(long, global = true, default_value_t = 3)]
    pub m: usize,
    /// Latent states for gen-prior.
    #[arg(long, global = true, default_value_t = 2)]
    pub states: usize,
    /// Write gen-prior output in pairwise form.
    #[arg(long, global = true)]
    pub pairwise: bool,
    /// Monte Carlo rounds for payout (needs a latent prior).
    #[arg(long, global = true, default_value_t = 0)]
    pub trials: usize,
    /// Random signal-strategy lists per population size in sweep-n.
    #[arg(long, global = true, default_value_t = 8)]
    pub units: usize,
    /// Relabeling for impossibility, as a-b-c.
    #[arg(long, global = true)]
    pub pi: Option<String>,
    /// Use the dense direct solver in solve-predictions.
    #[arg(long, global = true)]
    pub direct: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(jobs) = cli.opts.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match commands::run(cli.command, &cli.opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let written = match &cli.opts.out {
        Some(path) => File::create(path)
            .map_err(anyhow::Error::from)
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                outcome.output.write(cli.opts.format, &mut w)?;
                w.flush()?;
                Ok(())
            }),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            outcome.output.write(cli.opts.format, &mut lock)
        }
    };
    if let Err(e) = written {
        eprintln!("error: writing output: {e:#}");
        return ExitCode::from(1);
    }
    if outcome.valid {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
