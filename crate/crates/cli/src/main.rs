//! `paircal` — budgeted matched-pair experiment simulator.
//!
//! Subcommands:
//! - `gen`: write a synthetic surrogate matched-pair dataset as CSV;
//! - `run`: Monte-Carlo replications of one design, appending JSONL records;
//! - `report`: aggregate a JSONL results file into summary CSV.
//!
//! Exit codes: 0 success, 2 input error, 3 runtime/numerical error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use paircal_core::config::SimConfig;
use paircal_core::datagen;
use paircal_core::designs::{DataSource, DesignKind, RunConfig};
use paircal_core::harness;
use paircal_core::Error;

#[derive(Parser)]
#[command(name = "paircal", about = "Matched-pair active experimental design simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic surrogate matched-pair dataset as CSV.
    Gen {
        /// Flat key/value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run Monte-Carlo replications of one design.
    Run {
        /// robustcal | conventional | regression | tau-bald | theory
        #[arg(long)]
        design: String,
        /// Label budget (labeled examples; each pair consumes two).
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.2)]
        gamma: f64,
        /// Number of replications.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Master seed; replication i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Flat key/value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Matched-pair CSV dataset (defaults to the synthetic model).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        /// JSONL results file (appended).
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a JSONL results file into summary CSV.
    Report {
        /// JSONL results file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_sim(config: &Option<PathBuf>) -> Result<SimConfig, Error> {
    match config {
        None => Ok(SimConfig::default()),
        Some(path) => SimConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Input(format!("cannot read {}: {io}", path.display())),
            other => other,
        }),
    }
}

fn load_pairs(path: &PathBuf) -> Result<paircal_core::datagen::PairDataset, Error> {
    datagen::load_pairs_csv(path).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            let sim = load_sim(&config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = datagen::generate_surrogate_pairs(&sim.synthetic, sim.match_tol, &mut rng)?;
            let f = std::fs::File::create(&out)?;
            datagen::write_pairs_csv(&ds, std::io::BufWriter::new(f))?;
            println!("wrote {} pairs to {}", ds.rows.len(), out.display());
            Ok(())
        }
        Command::Run {
            design,
            budget,
            alpha,
            gamma,
            runs,
            seed,
            config,
            data,
            parallelism,
            out,
        } => {
            let design: DesignKind = design.parse()?;
            let sim = load_sim(&config)?;
            let source = match data {
                None => DataSource::Synthetic,
                Some(path) => DataSource::Pairs(Arc::new(load_pairs(&path)?)),
            };
            let cfg = RunConfig {
                design,
                budget,
                alpha,
                gamma,
                seed,
                sim,
                source,
            };
            let (summary, records) = harness::monte_carlo(&cfg, runs, parallelism)?;
            harness::append_records(&out, &records)?;
            println!(
                "{} budget={} runs={} rejection_rate={:.3} stop_mean={:.1}",
                summary.design, summary.budget, summary.n_runs, summary.rejection_rate,
                summary.stop_mean
            );
            if let Some(tpr) = summary.tpr_mean {
                println!("tpr_mean={tpr:.3}");
            }
            Ok(())
        }
        Command::Report { input, out } => {
            harness::report_file(&input, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
