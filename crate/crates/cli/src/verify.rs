//! Re-running a stored run from its manifest and ledger.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cmoforge_core::engine::Engine;
use cmoforge_core::llm::backend::LlmBackend;
use cmoforge_core::llm::{ledger_load, Ledger, ReplayBackend};
use cmoforge_core::problems::make_problem;
use cmoforge_core::report::{history_csv, population_csv};
use sha2::{Digest, Sha256};

use crate::run::{CliManifest, HISTORY_FILE, LEDGER_FILE, POPULATION_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub population_match: bool,
    pub history_match: bool,
    /// Artifacts whose bytes no longer match the manifest checksum.
    pub tampered: Vec<String>,
    pub replayed_calls: usize,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.population_match && self.history_match && self.tampered.is_empty()
    }
}

pub fn cmd_replay_verify(run_dir: &Path) -> Result<VerifyReport> {
    let manifest = CliManifest::load(run_dir)?;
    let read = |name: &str| {
        let p = run_dir.join(name);
        fs::read(&p).with_context(|| format!("reading {}", p.display()))
    };
    let mut tampered = Vec::new();
    for (name, digest) in &manifest.artifacts {
        if hex::encode(Sha256::digest(read(name)?)) != *digest {
            tampered.push(name.clone());
        }
    }

    let ledger_path = run_dir.join(LEDGER_FILE);
    let loaded = ledger_load(&ledger_path).with_context(|| format!("loading {}", ledger_path.display()))?;
    let replay = ReplayBackend::from_records(&loaded.records, ledger_path.display().to_string());
    let config = manifest.engine_config();
    let backend: Option<&dyn LlmBackend> = (config.n_llm() > 0).then_some(&replay);
    let problem = make_problem(manifest.problem, manifest.n)?;
    let result = Engine::new(&problem, config, backend)?
        .run_with_ledger(Ledger::new(), &mut |_| {})
        .context("replaying run")?;

    let population = population_csv(result.population.members(), problem.n(), problem.m());
    let history = history_csv(&result.history);
    Ok(VerifyReport {
        population_match: population.as_bytes() == read(POPULATION_FILE)?.as_slice(),
        history_match: history.as_bytes() == read(HISTORY_FILE)?.as_slice(),
        tampered,
        replayed_calls: result.ledger.len(),
    })
}
