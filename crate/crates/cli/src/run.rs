//! Batch execution: problems x algorithms x runs, one directory per run.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use cmoforge_core::engine::{Engine, EngineConfig, RunManifest};
use cmoforge_core::llm::backend::LlmBackend;
use cmoforge_core::llm::live::{HttpResponse, UreqTransport, API_KEY_ENV, ENDPOINT_ENV};
use cmoforge_core::llm::{ledger_load, HttpTransport, Ledger, LiveBackend, OracleBackend, ReplayBackend, SurrogateBackend};
use cmoforge_core::problems::{cpf_preimage, make_problem, tric6_preimage, TricId, TricSpec};
use cmoforge_core::report::{history_csv, population_csv};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{run_seed, AlgorithmEntry, BackendSpec, ExperimentConfig, ProblemEntry};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const POPULATION_FILE: &str = "final_population.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const EXPERIMENT_FILE: &str = "experiment.toml";

/// Process-level inputs that do not belong in the config file.
#[derive(Clone)]
pub struct RunEnv {
    pub api_key: Option<String>,
    pub endpoint: Option<String>,
    pub transport: Arc<dyn HttpTransport>,
}

impl RunEnv {
    pub fn from_process() -> Self {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.is_empty());
        Self {
            api_key: var(API_KEY_ENV),
            endpoint: var(ENDPOINT_ENV),
            transport: Arc::new(UreqTransport),
        }
    }

    /// No key and a transport that refuses every request.
    pub fn offline() -> Self {
        Self {
            api_key: None,
            endpoint: None,
            transport: Arc::new(Offline),
        }
    }
}

struct Offline;

impl HttpTransport for Offline {
    fn post_json(&self, url: &str, _: &str, _: &Value, _: Duration) -> Result<HttpResponse, String> {
        Err(format!("network disabled (POST {url})"))
    }
}

struct SharedTransport(Arc<dyn HttpTransport>);

impl HttpTransport for SharedTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpResponse, String> {
        self.0.post_json(url, bearer, body, timeout)
    }
}

/// Everything written to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliManifest {
    pub problem: TricId,
    pub n: usize,
    pub problem_parameters: Vec<(String, f64)>,
    pub witness: Vec<f64>,
    pub algorithm: String,
    pub run_index: usize,
    pub seed_base: u64,
    pub seed_key: String,
    pub backend_spec: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// sha256 of each artifact written next to the manifest.
    pub artifacts: Vec<(String, String)>,
    pub run: RunManifest,
}

impl CliManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn engine_config(&self) -> &EngineConfig {
        &self.run.config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunJob {
    pub problem: ProblemEntry,
    pub algorithm: AlgorithmEntry,
    pub run_index: usize,
    pub seed: u64,
    pub engine: EngineConfig,
    /// `None` when the algorithm makes no LLM offspring.
    pub backend: Option<BackendSpec>,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub problem: TricId,
    pub algorithm: String,
    pub run_index: usize,
    pub generations: u64,
    pub igd: Option<f64>,
    pub hv: Option<f64>,
    pub llm_calls: usize,
    pub live_calls: u64,
}

pub fn run_dir(out: &Path, problem: TricId, algorithm: &str, run_index: usize) -> PathBuf {
    out.join(problem.to_string()).join(algorithm).join(format!("run-{run_index}"))
}

/// Expands the config into jobs and checks everything that could fail
/// before any file is written.
pub fn plan(config: &ExperimentConfig, env: &RunEnv) -> Result<Vec<RunJob>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for problem in &config.problems {
        for alg in &config.algorithms {
            let engine_base = config.engine_for(alg);
            let backend = if engine_base.n_llm() > 0 {
                Some(config.backend_for(alg)?)
            } else {
                None
            };
            if backend == Some(BackendSpec::Live) && env.api_key.is_none() {
                bail!("algorithm `{}` uses the live backend but {API_KEY_ENV} is not set", alg.name);
            }
            if let Some(BackendSpec::Oracle(v)) = &backend {
                oracle_vector(problem, v.as_deref()).with_context(|| format!("algorithm `{}`", alg.name))?;
            }
            for run_index in 0..config.runs {
                let seed = run_seed(config.seed_base, problem, alg.seed_key(), run_index);
                if let Some(BackendSpec::Replay(path)) = &backend {
                    let ledger = replay_ledger_path(path, problem.id, &alg.name, run_index);
                    if !ledger.is_file() {
                        bail!("replay ledger {} does not exist", ledger.display());
                    }
                }
                jobs.push(RunJob {
                    problem: problem.clone(),
                    algorithm: alg.clone(),
                    run_index,
                    seed,
                    engine: EngineConfig {
                        seed,
                        ..engine_base.clone()
                    },
                    backend: backend.clone(),
                    dir: run_dir(&config.out, problem.id, &alg.name, run_index),
                });
            }
        }
    }
    Ok(jobs)
}

/// A ledger file is used as is; a directory is read as an earlier output tree.
fn replay_ledger_path(path: &Path, problem: TricId, algorithm: &str, run_index: usize) -> PathBuf {
    if path.is_dir() {
        run_dir(path, problem, algorithm, run_index).join(LEDGER_FILE)
    } else {
        path.to_path_buf()
    }
}

fn oracle_vector(problem: &ProblemEntry, given: Option<&[f64]>) -> Result<Vec<f64>> {
    match given {
        Some(v) if v.len() == problem.n => Ok(v.to_vec()),
        Some(v) => bail!("oracle vector has {} values, {} needs {}", v.len(), problem.id, problem.n),
        None => {
            let x = if problem.id == TricId::Tric6 {
                let c = 1.0 / 3f64.sqrt();
                tric6_preimage(problem.n, [c, c, c])
            } else {
                cpf_preimage(problem.id, problem.n, 0.5)
            };
            x.with_context(|| format!("no front pre-image for {} at n = {}", problem.id, problem.n))
        }
    }
}

fn build_backend(job: &RunJob, config: &ExperimentConfig, env: &RunEnv) -> Result<Option<Box<dyn LlmBackend>>> {
    let Some(spec) = &job.backend else {
        return Ok(None);
    };
    let backend: Box<dyn LlmBackend> = match spec {
        BackendSpec::Surrogate => Box::new(SurrogateBackend::new(job.seed)),
        BackendSpec::Oracle(v) => Box::new(OracleBackend::new(oracle_vector(&job.problem, v.as_deref())?)),
        BackendSpec::Replay(path) => {
            let file = replay_ledger_path(path, job.problem.id, &job.algorithm.name, job.run_index);
            let loaded = ledger_load(&file).with_context(|| format!("loading {}", file.display()))?;
            if loaded.skipped > 0 {
                log::warn!("{}: skipped {} unreadable ledger lines", file.display(), loaded.skipped);
            }
            Box::new(ReplayBackend::from_records(&loaded.records, file.display().to_string()))
        }
        BackendSpec::Live => {
            let key = env.api_key.clone().with_context(|| format!("{API_KEY_ENV} is not set"))?;
            let mut live = config.live.clone();
            if let Some(endpoint) = &env.endpoint {
                live.endpoint = endpoint.clone();
            }
            Box::new(LiveBackend::new(live, key, Box::new(SharedTransport(env.transport.clone()))))
        }
    };
    Ok(Some(backend))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs one job and writes its directory.
pub fn execute(job: &RunJob, config: &ExperimentConfig, env: &RunEnv) -> Result<RunSummary> {
    let started = now_ms();
    let problem = make_problem(job.problem.id, job.problem.n)?;
    let spec = TricSpec::new(job.problem.id, job.problem.n)?;
    let backend = build_backend(job, config, env)?;
    fs::create_dir_all(&job.dir).with_context(|| format!("creating {}", job.dir.display()))?;
    let ledger_path = job.dir.join(LEDGER_FILE);
    let ledger = Ledger::create(&ledger_path).with_context(|| format!("creating {}", ledger_path.display()))?;
    let engine = Engine::new(&problem, &job.engine, backend.as_deref())?;
    let result = engine
        .run_with_ledger(ledger, &mut |_| {})
        .with_context(|| format!("{} / {} / run {}", job.problem.id, job.algorithm.name, job.run_index))?;

    let population = population_csv(result.population.members(), problem.n(), problem.m());
    let history = history_csv(&result.history);
    fs::write(job.dir.join(POPULATION_FILE), &population)?;
    fs::write(job.dir.join(HISTORY_FILE), &history)?;
    let ledger_bytes = fs::read(&ledger_path)?;
    let manifest = CliManifest {
        problem: job.problem.id,
        n: job.problem.n,
        problem_parameters: spec.parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        witness: spec.witness,
        algorithm: job.algorithm.name.clone(),
        run_index: job.run_index,
        seed_base: config.seed_base,
        seed_key: job.algorithm.seed_key().to_string(),
        backend_spec: job.backend.as_ref().map_or_else(|| "none".into(), ToString::to_string),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        artifacts: vec![
            (POPULATION_FILE.into(), sha256_hex(population.as_bytes())),
            (HISTORY_FILE.into(), sha256_hex(history.as_bytes())),
            (LEDGER_FILE.into(), sha256_hex(&ledger_bytes)),
        ],
        run: result.manifest.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(job.dir.join(MANIFEST_FILE), json + "\n")?;
    log::info!(
        "{} {} run {}: {} generations, {} LLM calls",
        job.problem.id,
        job.algorithm.name,
        job.run_index,
        result.manifest.generations,
        result.manifest.llm_calls
    );
    Ok(RunSummary {
        dir: job.dir.clone(),
        problem: job.problem.id,
        algorithm: job.algorithm.name.clone(),
        run_index: job.run_index,
        generations: result.manifest.generations,
        igd: result.final_metrics.as_ref().map(|m| m.igd),
        hv: result.final_metrics.as_ref().map(|m| m.hv),
        llm_calls: result.manifest.llm_calls,
        live_calls: result.manifest.live_calls,
    })
}

/// Plans, runs every job (in parallel up to `config.jobs`) and writes the
/// resolved config at the top of the output tree.
pub fn cmd_run(config: &ExperimentConfig, env: &RunEnv) -> Result<Vec<RunSummary>> {
    let jobs = plan(config, env)?;
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    fs::write(config.out.join(EXPERIMENT_FILE), config.to_toml())
        .with_context(|| format!("writing into {}", config.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build()?;
    let results: Vec<Result<RunSummary>> = pool.install(|| jobs.par_iter().map(|job| execute(job, config, env)).collect());
    results.into_iter().collect()
}
