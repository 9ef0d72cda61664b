use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cmoforge_cli::config::ProblemEntry;
use cmoforge_cli::{cmd_compare, cmd_front, cmd_list_problems, cmd_replay_verify, cmd_run, ExperimentConfig, RunEnv};
use cmoforge_core::model::FeAccounting;

#[derive(Parser)]
#[command(name = "cmoforge", version, about = "Constrained multiobjective search with LLM-generated offspring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every problem x algorithm x seed in the experiment.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs per problem/algorithm pair.
        #[arg(long)]
        seeds: Option<usize>,
        /// live | replay:PATH | surrogate | oracle[:v1,v2,...]
        #[arg(long)]
        backend: Option<String>,
        /// Parallel runs (0 = one per core).
        #[arg(long)]
        jobs: Option<usize>,
        /// per_eval | per_generation_n
        #[arg(long)]
        fe_accounting: Option<FeAccounting>,
        /// Comma-separated problems, each `ID` or `ID:n`.
        #[arg(long, value_delimiter = ',')]
        problems: Option<Vec<ProblemEntry>>,
    },
    /// IGD/HV tables and Friedman ranks over a finished output tree.
    Compare {
        runs: PathBuf,
        #[arg(long)]
        baseline: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Defaults to `<runs>/compare`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Final feasible objectives against the analytic front (CSV, SVG for m = 2).
    Front {
        run_dir: PathBuf,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the problem catalog.
    ListProblems {
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Re-run a stored run from its ledger and compare the artifacts byte for byte.
    ReplayVerify { run_dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, seeds, backend, jobs, fe_accounting, problems } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(v) = out {
                cfg.out = v;
            }
            if let Some(v) = seeds {
                cfg.runs = v;
            }
            if let Some(v) = backend {
                cfg.backend = v;
            }
            if let Some(v) = jobs {
                cfg.jobs = v;
            }
            if let Some(v) = fe_accounting {
                cfg.engine.fe_accounting = v;
            }
            if let Some(v) = problems {
                cfg.problems = v;
            }
            let summaries = cmd_run(&cfg, &RunEnv::from_process())?;
            let live: u64 = summaries.iter().map(|s| s.live_calls).sum();
            println!("{} runs written to {} ({live} live LLM calls)", summaries.len(), cfg.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { runs, baseline, alpha, out } => {
            let out = out.unwrap_or_else(|| runs.join("compare"));
            let (comparison, files) = cmd_compare(&runs, &baseline, alpha, &out)?;
            print!("{}", comparison.igd.to_markdown());
            println!();
            print!("{}", comparison.hv.to_markdown());
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Front { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.clone());
            let result = cmd_front(&run_dir, &out)?;
            for notice in &result.notices {
                eprintln!("note: {notice}");
            }
            println!("wrote {}", result.csv.display());
            if let Some(svg) = result.svg {
                println!("wrote {}", svg.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListProblems { n } => {
            print!("{}", cmd_list_problems(n)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ReplayVerify { run_dir } => {
            let report = cmd_replay_verify(&run_dir).with_context(|| format!("verifying {}", run_dir.display()))?;
            println!("population: {}", if report.population_match { "identical" } else { "DIFFERS" });
            println!("history: {}", if report.history_match { "identical" } else { "DIFFERS" });
            for name in &report.tampered {
                println!("checksum mismatch: {name}");
            }
            println!("{} ledger calls replayed", report.replayed_calls);
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
