use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ptychonoise::harness::{
    compare_schemes, export, load_record, reconstruction_seed, run_experiment, ExperimentConfig,
    ReconstructionFile, RunKey, SimulationFile,
};
use ptychonoise::{Error, Result};

#[derive(Parser)]
#[command(name = "ptychonoise", version, about = "Ptychographic phase retrieval under photon and speckle noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one noisy realization and write it as JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a simulated realization with one scheme (1-20) or `adapter`.
    Reconstruct {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        scheme: RunKey,
        /// Position-ordering seed; defaults to the one the benchmark uses.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scheme over every realization and export the tables.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired comparison of two runs stored in a record.json.
    Compare {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        baseline: RunKey,
        #[arg(long)]
        candidate: RunKey,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, realization, out } => {
            let config = ExperimentConfig::load(&config)?;
            let sim = SimulationFile::generate(&config, realization)?;
            sim.save(&out)?;
            println!("{}", json!({ "written": out, "config_hash": sim.config_hash, "patterns": sim.dataset.patterns.len() }));
        }
        Command::Reconstruct { dataset, scheme, seed, out } => {
            let sim = SimulationFile::load(&dataset)?;
            let seed = seed.unwrap_or_else(|| reconstruction_seed(&sim.config));
            let result = ReconstructionFile::run(&sim, scheme, seed)?;
            result.save(&out)?;
            println!("{}", json!({ "written": out, "scheme": scheme, "sweeps": result.sweeps, "final_error": result.final_error }));
        }
        Command::Bench { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = out
                .or_else(|| config.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
            let record = run_experiment(&config)?;
            let files = export(&record, &dir)?;
            for s in &record.summaries {
                eprintln!(
                    "{:>8}  {:<16} {:<14} mu={:<5} median={:.4e} n={} failed={}",
                    s.run.to_string(),
                    s.rule,
                    s.functional,
                    s.mu,
                    s.stats.median,
                    s.stats.n,
                    s.failures
                );
            }
            println!("{}", json!({ "written": files, "config_hash": record.config_hash }));
        }
        Command::Compare { record, baseline, candidate } => {
            let record = load_record(&record)?;
            let cmp = compare_schemes(&record, baseline, candidate)?;
            println!("{}", serde_json::to_string(&cmp).expect("comparison serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
