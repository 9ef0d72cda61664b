//! Aggregation of finished runs into comparison tables and Friedman ranks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmoforge_core::metrics::evaluate_metrics;
use cmoforge_core::problems::{make_problem, sample_cpf, TricId};
use cmoforge_core::report::parse_population_csv;
use cmoforge_core::stats::{friedman_ranks, Direction, FriedmanResult, ResultsTable};
use rayon::prelude::*;
use serde::Serialize;

use crate::run::{CliManifest, MANIFEST_FILE, POPULATION_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub problem: TricId,
    pub n: usize,
    pub algorithm: String,
    pub run_index: usize,
    pub igd: f64,
    pub hv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanReport {
    pub algorithms: Vec<String>,
    pub igd: Option<FriedmanResult>,
    pub hv: Option<FriedmanResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub igd: ResultsTable,
    pub hv: ResultsTable,
    pub friedman: FriedmanReport,
}

/// Every `<problem>/<algorithm>/run-*` directory holding a manifest.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let subdirs = |p: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(p)
            .with_context(|| format!("reading {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        v.sort();
        Ok(v)
    };
    let mut runs = Vec::new();
    for problem in subdirs(root)? {
        for alg in subdirs(&problem)? {
            for run in subdirs(&alg)? {
                if run.join(MANIFEST_FILE).is_file() {
                    runs.push(run);
                }
            }
        }
    }
    Ok(runs)
}

/// Recomputes IGD and HV from the stored final population.
pub fn run_metrics(run_dir: &Path) -> Result<RunMetrics> {
    let manifest = CliManifest::load(run_dir)?;
    let path = run_dir.join(POPULATION_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let (_, _, members) = parse_population_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    let problem = make_problem(manifest.problem, manifest.n)?;
    let settings = manifest.engine_config().metrics;
    let front = sample_cpf(&problem, settings.reference_points)?;
    let report = evaluate_metrics(&members, &front, settings.monte_carlo)
        .with_context(|| format!("metrics for {}", run_dir.display()))?;
    Ok(RunMetrics {
        problem: manifest.problem,
        n: manifest.n,
        algorithm: manifest.algorithm,
        run_index: manifest.run_index,
        igd: report.igd,
        hv: report.hv,
    })
}

fn mean_or_nan(v: &[f64]) -> f64 {
    let valid: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if valid.is_empty() {
        f64::NAN
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    }
}

/// Builds the IGD and HV tables with `baseline` as the reference column.
pub fn compare(runs: &[RunMetrics], baseline: &str, alpha: f64) -> Result<Comparison> {
    let problems: BTreeSet<(TricId, usize)> = runs.iter().map(|r| (r.problem, r.n)).collect();
    let algorithms: Vec<String> = runs
        .iter()
        .map(|r| r.algorithm.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if algorithms.len() < 2 {
        bail!("need at least 2 algorithms to compare, found {:?}", algorithms);
    }
    let base = algorithms
        .iter()
        .position(|a| a == baseline)
        .with_context(|| format!("baseline `{baseline}` not among {:?}", algorithms))?;

    let mut grid: BTreeMap<((TricId, usize), &str), Vec<&RunMetrics>> = BTreeMap::new();
    for r in runs {
        grid.entry(((r.problem, r.n), r.algorithm.as_str())).or_default().push(r);
    }
    let mut igd = Vec::new();
    let mut hv = Vec::new();
    let mut expected_runs = None;
    for &p in &problems {
        let mut row_igd = Vec::new();
        let mut row_hv = Vec::new();
        for alg in &algorithms {
            let Some(cell) = grid.get_mut(&(p, alg.as_str())) else {
                bail!("algorithm `{alg}` has no runs for {} (n = {})", p.0, p.1);
            };
            cell.sort_by_key(|r| r.run_index);
            match expected_runs {
                None => expected_runs = Some(cell.len()),
                Some(k) if k != cell.len() => {
                    bail!("mismatched run matrices: `{alg}` has {} runs on {}, expected {k}", cell.len(), p.0)
                }
                _ => {}
            }
            row_igd.push(cell.iter().map(|r| r.igd).collect::<Vec<_>>());
            row_hv.push(cell.iter().map(|r| r.hv).collect::<Vec<_>>());
        }
        igd.push(row_igd);
        hv.push(row_hv);
    }

    let problem_names: Vec<String> = problems
        .iter()
        .map(|(id, n)| {
            let same_id = problems.iter().filter(|(j, _)| j == id).count();
            if same_id > 1 {
                format!("{id} (n={n})")
            } else {
                id.to_string()
            }
        })
        .collect();
    let table = |metric: &str, direction, samples: &[Vec<Vec<f64>>]| {
        ResultsTable::build(metric, problem_names.clone(), algorithms.clone(), base, direction, alpha, samples)
    };
    let friedman = |direction, samples: &[Vec<Vec<f64>>]| {
        // values[algorithm][problem] from per-cell means
        let values: Vec<Vec<f64>> = (0..algorithms.len())
            .map(|a| samples.iter().map(|row| mean_or_nan(&row[a])).collect())
            .collect();
        match friedman_ranks(&values, direction) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("Friedman ranks skipped: {e}");
                None
            }
        }
    };
    Ok(Comparison {
        igd: table("IGD", Direction::SmallerIsBetter, &igd),
        hv: table("HV", Direction::LargerIsBetter, &hv),
        friedman: FriedmanReport {
            algorithms: algorithms.clone(),
            igd: friedman(Direction::SmallerIsBetter, &igd),
            hv: friedman(Direction::LargerIsBetter, &hv),
        },
    })
}

fn friedman_csv(report: &FriedmanReport) -> String {
    let rank = |r: &Option<FriedmanResult>, i: usize| r.as_ref().map(|r| r.mean_ranks[i].to_string()).unwrap_or_default();
    let mut out = String::from("algorithm,igd_mean_rank,hv_mean_rank\n");
    for (i, a) in report.algorithms.iter().enumerate() {
        out.push_str(&format!("{a},{},{}\n", rank(&report.igd, i), rank(&report.hv, i)));
    }
    out
}

/// Reads every run under `root`, writes tables and ranks to `out`, and
/// returns the paths written. Output depends only on the run directories.
pub fn cmd_compare(root: &Path, baseline: &str, alpha: f64, out: &Path) -> Result<(Comparison, Vec<PathBuf>)> {
    let dirs = find_runs(root)?;
    if dirs.is_empty() {
        bail!("no run directories under {}", root.display());
    }
    let runs: Vec<RunMetrics> = dirs.par_iter().map(|d| run_metrics(d)).collect::<Result<_>>()?;
    let comparison = compare(&runs, baseline, alpha)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let files: HashMap<&str, String> = HashMap::from([
        ("igd.csv", comparison.igd.to_csv()),
        ("igd.md", comparison.igd.to_markdown()),
        ("hv.csv", comparison.hv.to_csv()),
        ("hv.md", comparison.hv.to_markdown()),
        ("friedman.json", serde_json::to_string_pretty(&comparison.friedman)? + "\n"),
        ("friedman.csv", friedman_csv(&comparison.friedman)),
    ]);
    let mut written = Vec::new();
    let mut names: Vec<&&str> = files.keys().collect();
    names.sort();
    for name in names {
        let path = out.join(name);
        fs::write(&path, &files[*name]).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok((comparison, written))
}
