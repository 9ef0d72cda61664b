//! Experiment configuration, read from TOML.
//!
//! ```toml
//! runs = 10
//! seed_base = 0
//! backend = "surrogate"          # live | replay:PATH | surrogate | oracle[:v1,v2,...]
//! out = "out"
//!
//! [[problems]]
//! id = "TRIC2"
//! n = 5
//!
//! [[algorithms]]
//! name = "ccmo"
//! llm_offspring_fraction = 0.0
//!
//! [[algorithms]]
//! name = "ccmo-llm"
//!
//! [engine]                        # defaults shared by every algorithm
//! fe_max = 10000
//! fe_accounting = "per_eval"
//! metrics = { cadence = "final" }
//!
//! [live]
//! model = "gpt-3.5-turbo"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use cmoforge_core::engine::EngineConfig;
use cmoforge_core::llm::LiveConfig;
use cmoforge_core::problems::TricId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_N: usize = 10;
pub const DEFAULT_RUNS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEntry {
    pub id: TricId,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_n() -> usize {
    DEFAULT_N
}

impl FromStr for ProblemEntry {
    type Err = anyhow::Error;

    /// `TRIC3` or `TRIC3:10`.
    fn from_str(s: &str) -> Result<Self> {
        let (id, n) = match s.split_once(':') {
            Some((id, n)) => (id, n.trim().parse().with_context(|| format!("bad dimension in `{s}`"))?),
            None => (s, DEFAULT_N),
        };
        Ok(Self { id: id.parse()?, n })
    }
}

/// A named variant of the shared engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_offspring_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_input_fraction: Option<f64>,
    /// Overrides the experiment-wide backend for this algorithm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    /// Algorithms with the same key get the same run seeds, so their runs
    /// start from identical populations. Defaults to a shared key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_key: Option<String>,
}

impl AlgorithmEntry {
    pub fn named(name: &str, llm_offspring_fraction: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            llm_offspring_fraction,
            llm_input_fraction: None,
            backend: None,
            seed_key: None,
        }
    }

    pub fn seed_key(&self) -> &str {
        self.seed_key.as_deref().unwrap_or("shared")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problems: Vec<ProblemEntry>,
    pub algorithms: Vec<AlgorithmEntry>,
    pub runs: usize,
    pub seed_base: u64,
    pub backend: String,
    pub out: PathBuf,
    /// Parallel runs; 0 means one per core.
    pub jobs: usize,
    pub engine: EngineConfig,
    pub live: LiveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problems: TricId::ALL.iter().map(|&id| ProblemEntry { id, n: DEFAULT_N }).collect(),
            algorithms: vec![AlgorithmEntry::named("ccmo", Some(0.0)), AlgorithmEntry::named("ccmo-llm", None)],
            runs: DEFAULT_RUNS,
            seed_base: 0,
            backend: "surrogate".into(),
            out: PathBuf::from("out"),
            jobs: 0,
            engine: EngineConfig::default(),
            live: LiveConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    /// Engine settings for one algorithm before the run seed is filled in.
    pub fn engine_for(&self, alg: &AlgorithmEntry) -> EngineConfig {
        let mut cfg = self.engine.clone();
        if let Some(f) = alg.llm_offspring_fraction {
            cfg.llm_offspring_fraction = f;
        }
        if let Some(f) = alg.llm_input_fraction {
            cfg.llm_input_fraction = f;
        }
        cfg
    }

    pub fn backend_for(&self, alg: &AlgorithmEntry) -> Result<BackendSpec> {
        alg.backend.as_deref().unwrap_or(&self.backend).parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() {
            bail!("no problems configured");
        }
        if self.algorithms.is_empty() {
            bail!("no algorithms configured");
        }
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        let mut names: Vec<&str> = self.algorithms.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            bail!("algorithm name `{}` is used twice", w[0]);
        }
        for alg in &self.algorithms {
            if alg.name.is_empty() || alg.name.contains(['/', '\\']) || alg.name.starts_with('.') {
                bail!("algorithm name `{}` cannot be used as a directory name", alg.name);
            }
            self.engine_for(alg)
                .validate()
                .with_context(|| format!("algorithm `{}`", alg.name))?;
            self.backend_for(alg)
                .with_context(|| format!("algorithm `{}`", alg.name))?;
        }
        for p in &self.problems {
            if p.n < p.id.min_n() {
                bail!("{} needs n >= {}, got {}", p.id, p.id.min_n(), p.n);
            }
        }
        Ok(())
    }
}

/// Which LLM stands behind the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Live,
    /// A ledger file, or a previous output tree whose run directories hold one.
    Replay(PathBuf),
    Surrogate,
    /// `None` answers with the problem's own front pre-image.
    Oracle(Option<Vec<f64>>),
}

impl FromStr for BackendSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head.trim(), rest) {
            ("live", None) => Ok(BackendSpec::Live),
            ("surrogate", None) => Ok(BackendSpec::Surrogate),
            ("replay", Some(path)) if !path.is_empty() => Ok(BackendSpec::Replay(PathBuf::from(path))),
            ("oracle", None) => Ok(BackendSpec::Oracle(None)),
            ("oracle", Some(v)) => {
                let vector = v
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad oracle value `{t}`")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(BackendSpec::Oracle(Some(vector)))
            }
            _ => bail!("unknown backend `{s}` (expected live, replay:PATH, surrogate or oracle[:v1,v2,...])"),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Live => f.write_str("live"),
            BackendSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            BackendSpec::Surrogate => f.write_str("surrogate"),
            BackendSpec::Oracle(None) => f.write_str("oracle"),
            BackendSpec::Oracle(Some(v)) => {
                let parts: Vec<String> = v.iter().map(f64::to_string).collect();
                write!(f, "oracle:{}", parts.join(","))
            }
        }
    }
}

/// Seed for one run, from the experiment seed base, problem, algorithm seed
/// key and run index.
pub fn run_seed(seed_base: u64, problem: &ProblemEntry, seed_key: &str, run: usize) -> u64 {
    let digest = Sha256::digest(format!("{seed_base}/{}/{}/{seed_key}/{run}", problem.id, problem.n));
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_names() {
        assert_eq!("live".parse::<BackendSpec>().unwrap(), BackendSpec::Live);
        assert_eq!("replay:a/b.jsonl".parse::<BackendSpec>().unwrap(), BackendSpec::Replay("a/b.jsonl".into()));
        assert_eq!("oracle:0.5, 1".parse::<BackendSpec>().unwrap(), BackendSpec::Oracle(Some(vec![0.5, 1.0])));
        assert!("replay:".parse::<BackendSpec>().is_err());
        assert!("gpt".parse::<BackendSpec>().is_err());
        for s in ["live", "surrogate", "oracle", "oracle:0.25,1", "replay:x"] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            runs = 3
            backend = "oracle"
            [[problems]]
            id = "TRIC2"
            n = 5
            [[algorithms]]
            name = "ccmo"
            llm_offspring_fraction = 0.0
            [engine]
            fe_max = 2000
            fe_accounting = "per_generation_n"
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.problems, vec![ProblemEntry { id: TricId::Tric2, n: 5 }]);
        assert_eq!(cfg.engine.fe_max, 2000);
        assert_eq!(cfg.engine.population_size, 100);
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let p = ProblemEntry { id: TricId::Tric1, n: 10 };
        let q = ProblemEntry { id: TricId::Tric2, n: 10 };
        assert_eq!(run_seed(0, &p, "shared", 0), run_seed(0, &p, "shared", 0));
        let seeds = [
            run_seed(0, &p, "shared", 0),
            run_seed(0, &p, "shared", 1),
            run_seed(1, &p, "shared", 0),
            run_seed(0, &q, "shared", 0),
            run_seed(0, &p, "other", 0),
        ];
        for (i, a) in seeds.iter().enumerate() {
            assert!(seeds[i + 1..].iter().all(|b| a != b));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::default();
        cfg.algorithms.push(AlgorithmEntry::named("ccmo", None));
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            problems: vec![ProblemEntry { id: TricId::Tric3, n: 2 }],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
