//! Two-population coevolution with LLM-assisted offspring.
//!
//! `pop1` respects the constraints and `pop2` ignores them; each produces
//! its own offspring and both selections see the offspring of both.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{llm_generate, GenerateContext, Ledger, LedgerRecord, LlmBackend, LlmError, LlmSettings, PROMPT_VERSION};
use crate::metrics::{evaluate_metrics, MetricError, MetricReport, MonteCarlo};
use crate::model::{evaluate, BudgetCounter, EvalError, FeAccounting, Population, ProblemDefinition, Provenance, Solution};
use crate::operators::{binary_tournament, polynomial_mutation, sbx_crossover, OperatorError, OperatorParams};
use crate::rng::{RandomSource, Stream};
use crate::selection::{environmental_selection, spea2_fitness, SelectionError, SelectionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsCadence {
    #[default]
    EveryGeneration,
    /// Only the last generation before the budget runs out.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSettings {
    pub cadence: MetricsCadence,
    /// Points sampled from the analytic front for IGD and normalization.
    pub reference_points: usize,
    pub monte_carlo: MonteCarlo,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            cadence: MetricsCadence::EveryGeneration,
            reference_points: 1000,
            monte_carlo: MonteCarlo::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub population_size: usize,
    pub fe_max: u64,
    pub llm_offspring_fraction: f64,
    pub llm_input_fraction: f64,
    pub operators: OperatorParams,
    pub seed: u64,
    pub fe_accounting: FeAccounting,
    pub llm: LlmSettings,
    pub metrics: MetricsSettings,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            fe_max: 10_000,
            llm_offspring_fraction: 0.05,
            llm_input_fraction: 0.10,
            operators: OperatorParams::default(),
            seed: 0,
            fe_accounting: FeAccounting::PerEval,
            llm: LlmSettings::default(),
            metrics: MetricsSettings::default(),
        }
    }
}

impl EngineConfig {
    /// LLM offspring per population, rounded half up.
    pub fn n_llm(&self) -> usize {
        (self.llm_offspring_fraction * self.population_size as f64 + 0.5).floor() as usize
    }

    pub fn n_ga(&self) -> usize {
        self.population_size - self.n_llm()
    }

    /// LLM input pool size per population, rounded up.
    pub fn pool_size(&self) -> usize {
        // the tolerance keeps 0.1 * 100 from ceiling to 11
        (self.llm_input_fraction * self.population_size as f64 - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        let n = self.population_size;
        if n < 2 {
            return bad(format!("population size {n} is below 2"));
        }
        for (name, f) in [
            ("llm_offspring_fraction", self.llm_offspring_fraction),
            ("llm_input_fraction", self.llm_input_fraction),
        ] {
            if !(0.0..=0.5).contains(&f) {
                return bad(format!("{name} = {f} is outside [0, 0.5]"));
            }
        }
        if self.n_llm() > 0 && self.pool_size() < 2 {
            return bad(format!("LLM input pool of {} cannot supply two parents", self.pool_size()));
        }
        if self.fe_accounting == FeAccounting::PerEval && self.fe_max < 2 * n as u64 {
            return bad(format!("fe_max {} cannot pay for initialization ({})", self.fe_max, 2 * n));
        }
        self.operators.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("LLM offspring requested but no backend was supplied")]
    NoBackend,
}

/// One completed generation. `igd`/`hv` are `None` when not computed at
/// this generation and NaN when computed without a feasible member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub fe: u64,
    pub feasible_count: usize,
    pub best_cv: f64,
    pub igd: Option<f64>,
    pub hv: Option<f64>,
}

/// What the observer sees after each generation.
#[derive(Debug, Clone, Copy)]
pub struct GenerationView<'a> {
    pub record: &'a GenerationRecord,
    pub pop1: &'a Population,
    pub pop2: &'a Population,
}

#[derive(Debug)]
pub struct EngineState {
    pub pop1: Population,
    pub pop2: Population,
    fitness1: Vec<f64>,
    fitness2: Vec<f64>,
    pub budget: BudgetCounter,
    pub generation: u64,
    pub history: Vec<GenerationRecord>,
    pub ledger: Ledger,
    rng: RandomSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub problem: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub backend: String,
    pub prompt_version: u32,
    pub generations: u64,
    pub fe: u64,
    pub evaluator_calls: u64,
    pub llm_calls: usize,
    pub live_calls: u64,
    pub config: EngineConfig,
    pub engine_version: String,
}

#[derive(Debug)]
pub struct RunResult {
    /// The reported (constraint-aware) population.
    pub population: Population,
    pub pop2: Population,
    pub history: Vec<GenerationRecord>,
    pub ledger: Vec<LedgerRecord>,
    pub final_metrics: Option<MetricReport>,
    pub manifest: RunManifest,
}

/// Whether a generation ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationOutcome {
    Completed,
    /// Budget ran out mid-generation; offspring were discarded.
    BudgetExhausted,
}

pub struct Engine<'a> {
    problem: &'a ProblemDefinition,
    config: &'a EngineConfig,
    backend: Option<&'a dyn LlmBackend>,
    reference: Option<Vec<Vec<f64>>>,
}

struct Offspring {
    decs: Vec<f64>,
    provenance: Provenance,
}

impl<'a> Engine<'a> {
    pub fn new(
        problem: &'a ProblemDefinition,
        config: &'a EngineConfig,
        backend: Option<&'a dyn LlmBackend>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if config.n_llm() > 0 && backend.is_none() {
            return Err(EngineError::NoBackend);
        }
        let reference = problem.sample_cpf(config.metrics.reference_points);
        Ok(Self {
            problem,
            config,
            backend,
            reference,
        })
    }

    pub fn reference_front(&self) -> Option<&[Vec<f64>]> {
        self.reference.as_deref()
    }

    /// Uniform random initialization of both populations.
    pub fn init_state(&self, ledger: Ledger) -> Result<EngineState, EngineError> {
        let n = self.config.population_size;
        let mut rng = RandomSource::new(self.config.seed);
        let mut budget = BudgetCounter::with_mode(self.config.fe_max, self.config.fe_accounting);
        let (lower, upper) = (self.problem.lower(), self.problem.upper());
        let mut populations = Vec::with_capacity(2);
        for _ in 0..2 {
            let members = (0..n)
                .map(|_| {
                    let init = rng.stream(Stream::Init);
                    let decs: Vec<f64> = lower.iter().zip(upper).map(|(&l, &u)| init.random_range(l..=u)).collect();
                    evaluate(self.problem, decs, &mut budget, Provenance::Init)
                })
                .collect::<Result<Vec<_>, _>>()?;
            populations.push(Population::new(members, n));
        }
        let pop2 = populations.pop().expect("two populations");
        let pop1 = populations.pop().expect("two populations");
        Ok(EngineState {
            fitness1: spea2_fitness(pop1.members(), SelectionMode::Constrained),
            fitness2: spea2_fitness(pop2.members(), SelectionMode::Unconstrained),
            pop1,
            pop2,
            budget,
            generation: 0,
            history: Vec::new(),
            ledger,
            rng,
        })
    }

    fn ga_offspring(&self, pop: &Population, fitness: &[f64], rng: &mut RandomSource) -> Result<Vec<Offspring>, EngineError> {
        let count = self.config.n_ga();
        let pairs = count.div_ceil(2);
        let parents = binary_tournament(fitness, 2 * pairs, rng.stream(Stream::Mating))?;
        let (lower, upper) = (self.problem.lower(), self.problem.upper());
        let ops = &self.config.operators;
        let mut out = Vec::with_capacity(2 * pairs);
        for pair in parents.chunks(2) {
            let (p1, p2) = (pop.members()[pair[0]].decs(), pop.members()[pair[1]].decs());
            let (c1, c2) = sbx_crossover(p1, p2, ops, lower, upper, rng.stream(Stream::Sbx));
            for child in [c1, c2] {
                out.push(Offspring {
                    decs: polynomial_mutation(&child, ops, lower, upper, rng.stream(Stream::Mutation)),
                    provenance: Provenance::Ga,
                });
            }
        }
        out.truncate(count);
        Ok(out)
    }

    fn llm_offspring(&self, state: &mut EngineState, which: Which) -> Result<Vec<Offspring>, EngineError> {
        let count = self.config.n_llm();
        if count == 0 {
            return Ok(Vec::new());
        }
        let backend = self.backend.ok_or(EngineError::NoBackend)?;
        let pop = match which {
            Which::Pop1 => &state.pop1,
            Which::Pop2 => &state.pop2,
        };
        let picks = index::sample(state.rng.stream(Stream::LlmSampling), pop.len(), self.config.pool_size());
        let pool: Vec<Solution> = picks.iter().map(|i| pop.members()[i].clone()).collect();
        let ctx = GenerateContext {
            generation: state.generation + 1,
            population: which.tag(),
            lower: self.problem.lower(),
            upper: self.problem.upper(),
        };
        let produced = llm_generate(
            &pool,
            count,
            backend,
            &self.config.llm,
            &ctx,
            &self.config.operators,
            state.rng.stream(Stream::LlmFallback),
            &mut state.ledger,
        )?;
        Ok(produced
            .into_iter()
            .map(|o| Offspring {
                decs: o.decs,
                provenance: o.provenance,
            })
            .collect())
    }

    fn offspring(&self, state: &mut EngineState, which: Which) -> Result<Vec<Offspring>, EngineError> {
        let mut out = match which {
            Which::Pop1 => self.ga_offspring(&state.pop1, &state.fitness1, &mut state.rng)?,
            Which::Pop2 => self.ga_offspring(&state.pop2, &state.fitness2, &mut state.rng)?,
        };
        out.extend(self.llm_offspring(state, which)?);
        Ok(out)
    }

    fn metrics_due(&self, state: &EngineState) -> bool {
        match self.config.metrics.cadence {
            MetricsCadence::EveryGeneration => true,
            MetricsCadence::Final => self.budget_spent(&state.budget),
        }
    }

    /// True when another full generation cannot be paid for.
    fn budget_spent(&self, budget: &BudgetCounter) -> bool {
        match budget.mode() {
            FeAccounting::PerEval => budget.remaining() < 2 * self.config.population_size as u64,
            FeAccounting::PerGenerationN => budget.is_exhausted(),
        }
    }

    fn metrics_for(&self, pop: &Population) -> Result<Option<MetricReport>, EngineError> {
        match &self.reference {
            Some(front) => Ok(Some(evaluate_metrics(pop.members(), front, self.config.metrics.monte_carlo)?)),
            None => Ok(None),
        }
    }

    /// One full generation. On budget exhaustion the state is left as it
    /// was before the generation (apart from the spent budget and ledger).
    pub fn run_generation(&self, state: &mut EngineState) -> Result<GenerationOutcome, EngineError> {
        let n = self.config.population_size;
        let o1 = self.offspring(state, Which::Pop1)?;
        let o2 = self.offspring(state, Which::Pop2)?;
        let mut evaluated = Vec::with_capacity(o1.len() + o2.len());
        for o in o1.into_iter().chain(o2) {
            match evaluate(self.problem, o.decs, &mut state.budget, o.provenance) {
                Ok(s) => evaluated.push(s),
                Err(EvalError::BudgetExhausted { .. }) => return Ok(GenerationOutcome::BudgetExhausted),
                Err(e) => return Err(e.into()),
            }
        }
        let union1: Vec<Solution> = state.pop1.members().iter().cloned().chain(evaluated.iter().cloned()).collect();
        let union2: Vec<Solution> = state.pop2.members().iter().cloned().chain(evaluated).collect();
        let (pop1, fit1) = environmental_selection(union1, n, SelectionMode::Constrained)?;
        let (pop2, fit2) = environmental_selection(union2, n, SelectionMode::Unconstrained)?;
        state.pop1 = pop1;
        state.pop2 = pop2;
        state.fitness1 = fit1;
        state.fitness2 = fit2;
        state.generation += 1;
        state.budget.charge_generation(n as u64);
        let report = if self.metrics_due(state) { self.metrics_for(&state.pop1)? } else { None };
        state.history.push(GenerationRecord {
            generation: state.generation,
            fe: state.budget.fe(),
            feasible_count: state.pop1.feasible_count(),
            best_cv: state.pop1.best_cv(),
            igd: report.as_ref().map(|r| r.igd),
            hv: report.as_ref().map(|r| r.hv),
        });
        Ok(GenerationOutcome::Completed)
    }

    pub fn run_with_ledger(
        &self,
        ledger: Ledger,
        observer: &mut dyn FnMut(&GenerationView<'_>),
    ) -> Result<RunResult, EngineError> {
        let mut state = self.init_state(ledger)?;
        while !state.budget.is_exhausted() {
            if self.run_generation(&mut state)? == GenerationOutcome::BudgetExhausted {
                break;
            }
            let record = state.history.last().expect("generation recorded");
            observer(&GenerationView {
                record,
                pop1: &state.pop1,
                pop2: &state.pop2,
            });
        }
        state.ledger.flush().map_err(LlmError::from)?;
        let final_metrics = self.metrics_for(&state.pop1)?;
        let manifest = RunManifest {
            problem: self.problem.name().to_string(),
            n: self.problem.n(),
            m: self.problem.m(),
            seed: self.config.seed,
            backend: self.backend.map_or_else(|| "none".to_string(), |b| b.identity()),
            prompt_version: PROMPT_VERSION,
            generations: state.generation,
            fe: state.budget.fe(),
            evaluator_calls: state.budget.evaluator_calls(),
            llm_calls: state.ledger.len(),
            live_calls: self.backend.map_or(0, |b| b.live_calls()),
            config: self.config.clone(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        Ok(RunResult {
            population: state.pop1,
            pop2: state.pop2,
            history: state.history,
            ledger: state.ledger.into_records(),
            final_metrics,
            manifest,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Which {
    Pop1,
    Pop2,
}

impl Which {
    fn tag(self) -> &'static str {
        match self {
            Which::Pop1 => "pop1",
            Which::Pop2 => "pop2",
        }
    }
}

/// Runs to budget exhaustion with an in-memory ledger.
pub fn run(
    problem: &ProblemDefinition,
    config: &EngineConfig,
    backend: Option<&dyn LlmBackend>,
    observer: &mut dyn FnMut(&GenerationView<'_>),
) -> Result<RunResult, EngineError> {
    Engine::new(problem, config, backend)?.run_with_ledger(Ledger::new(), observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendError, Completion, LlmCall, OracleBackend, SurrogateBackend};
    use crate::problems::{cpf_preimage, make_problem, TricId};
    use std::sync::atomic::{AtomicU64, Ordering};

    fn small(fe_max: u64, fraction: f64) -> EngineConfig {
        EngineConfig {
            population_size: 20,
            fe_max,
            llm_offspring_fraction: fraction,
            llm_input_fraction: 0.2,
            seed: 7,
            metrics: MetricsSettings {
                reference_points: 100,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    struct Counting(AtomicU64);

    impl LlmBackend for Counting {
        fn complete(&self, _c: &LlmCall<'_>) -> Result<Completion, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transport("offline".into()))
        }
        fn identity(&self) -> String {
            "counting".into()
        }
    }

    #[test]
    fn quotas() {
        let c = EngineConfig::default();
        assert_eq!((c.n_ga(), c.n_llm(), c.pool_size()), (95, 5, 10));
        let c = EngineConfig { population_size: 30, ..Default::default() };
        // 1.5 rounds half up, 3.0 stays 3
        assert_eq!((c.n_llm(), c.pool_size()), (2, 3));
        let c = EngineConfig { llm_input_fraction: 0.01, population_size: 50, ..Default::default() };
        assert!(matches!(c.validate(), Err(EngineError::Config(_))));
        let c = EngineConfig { llm_offspring_fraction: 0.6, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn generation_count_matches_budget_arithmetic() {
        let p = make_problem(TricId::Tric2, 5).unwrap();
        let config = EngineConfig {
            llm_offspring_fraction: 0.0,
            metrics: MetricsSettings { cadence: MetricsCadence::Final, ..Default::default() },
            ..Default::default()
        };
        let mut seen = 0;
        let r = run(&p, &config, None, &mut |_| seen += 1).unwrap();
        assert_eq!(r.manifest.generations, 49);
        assert_eq!(seen, 49);
        assert_eq!(r.history.len(), 49);
        assert_eq!(r.manifest.evaluator_calls, 10_000);
        assert!(r.history[..48].iter().all(|h| h.igd.is_none()));
        assert!(r.history[48].igd.is_some());
    }

    #[test]
    fn partial_generation_is_discarded() {
        let p = make_problem(TricId::Tric2, 5).unwrap();
        let config = small(40 + 40 * 3 + 10, 0.0);
        let r = run(&p, &config, None, &mut |_| {}).unwrap();
        assert_eq!(r.manifest.generations, 3);
        assert_eq!(r.manifest.evaluator_calls, 170);
        assert_eq!(r.population.len(), 20);
    }

    #[test]
    fn per_generation_accounting() {
        let p = make_problem(TricId::Tric2, 5).unwrap();
        let config = EngineConfig { fe_accounting: FeAccounting::PerGenerationN, ..small(200, 0.0) };
        let r = run(&p, &config, None, &mut |_| {}).unwrap();
        assert_eq!(r.manifest.generations, 10);
        assert_eq!(r.manifest.fe, 200);
        assert_eq!(r.manifest.evaluator_calls, 40 + 10 * 40);
    }

    #[test]
    fn ablation_makes_no_calls() {
        let p = make_problem(TricId::Tric1, 5).unwrap();
        let backend = Counting(AtomicU64::new(0));
        let r = run(&p, &small(400, 0.0), Some(&backend), &mut |_| {}).unwrap();
        assert_eq!(backend.0.load(Ordering::SeqCst), 0);
        assert!(r.ledger.is_empty());
    }

    #[test]
    fn failing_backend_degrades_to_fallback() {
        let p = make_problem(TricId::Tric1, 5).unwrap();
        let backend = Counting(AtomicU64::new(0));
        let config = small(40 + 40 * 2, 0.1);
        let r = run(&p, &config, Some(&backend), &mut |_| {}).unwrap();
        // 2 generations x 2 populations x 2 offspring x 3 attempts
        assert_eq!(backend.0.load(Ordering::SeqCst), 24);
        assert_eq!(r.ledger.len(), 24);
        assert_eq!(r.manifest.generations, 2);
    }

    #[test]
    fn sizes_and_provenance_hold_every_generation() {
        let p = make_problem(TricId::Tric4, 6).unwrap();
        let backend = SurrogateBackend::new(1);
        let mut checked = 0;
        run(&p, &small(40 + 40 * 5, 0.1), Some(&backend), &mut |v| {
            assert_eq!(v.pop1.len(), 20);
            assert_eq!(v.pop2.len(), 20);
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, 5);
    }

    #[test]
    fn same_seed_same_result() {
        let p = make_problem(TricId::Tric3, 6).unwrap();
        let backend = SurrogateBackend::new(4);
        let a = run(&p, &small(400, 0.1), Some(&backend), &mut |_| {}).unwrap();
        let b = run(&p, &small(400, 0.1), Some(&backend), &mut |_| {}).unwrap();
        assert_eq!(a.population, b.population);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn oracle_preimage_enters_pop1() {
        let p = make_problem(TricId::Tric3, 10).unwrap();
        let target = cpf_preimage(TricId::Tric3, 10, 0.5).unwrap();
        let backend = OracleBackend::new(target.clone());
        let mut found = false;
        let config = EngineConfig { fe_max: 400, ..Default::default() };
        run(&p, &config, Some(&backend), &mut |v| {
            if v.record.generation == 1 {
                found = v.pop1.members().iter().any(|s| s.provenance() == Provenance::Llm && s.decs() == target.as_slice());
            }
        })
        .unwrap();
        assert!(found);
    }

    #[test]
    fn missing_backend_is_an_error() {
        let p = make_problem(TricId::Tric1, 5).unwrap();
        assert!(matches!(run(&p, &small(400, 0.1), None, &mut |_| {}), Err(EngineError::NoBackend)));
    }
}
