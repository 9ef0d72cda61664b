//! Problem model, solutions, constraint violation and dominance comparators.
//!
//! A constrained multiobjective problem minimizes `m` objectives subject to
//! `q` inequality constraints `g_i(x) <= 0` followed by `l - q` equality
//! constraints `h_i(x) = 0`. Equalities are relaxed to `|h_i(x)| <= delta`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relaxation applied to equality constraints.
pub const DEFAULT_DELTA: f64 = 1e-4;

/// Output of a single evaluator call.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objs: Vec<f64>,
    pub cons: Vec<f64>,
}

pub type EvaluatorFn = dyn Fn(&[f64]) -> Evaluation + Send + Sync;
pub type CpfSamplerFn = dyn Fn(usize) -> Vec<Vec<f64>> + Send + Sync;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("problem needs at least one decision variable")]
    NoVariables,
    #[error("problem needs at least two objectives, got {0}")]
    TooFewObjectives(usize),
    #[error("inequality count {q} exceeds constraint count {l}")]
    ConstraintCounts { q: usize, l: usize },
    #[error("bounds have length {lower}/{upper}, expected {n}")]
    BoundsLength { n: usize, lower: usize, upper: usize },
    #[error("bound {index} is empty: lower {lower} >= upper {upper}")]
    EmptyBound { index: usize, lower: f64, upper: f64 },
    #[error("delta must be finite and nonnegative, got {0}")]
    BadDelta(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("evaluation budget exhausted ({used}/{max})")]
    BudgetExhausted { used: u64, max: u64 },
    #[error("decision vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("decision variable {index} = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("evaluator returned {objs} objectives and {cons} constraints, expected {m} and {l}")]
    EvaluatorArity {
        m: usize,
        l: usize,
        objs: usize,
        cons: usize,
    },
}

/// A constraint value was NaN or infinite.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("constraint {index} is not finite ({value})")]
pub struct NonFiniteConstraint {
    pub index: usize,
    pub value: f64,
}

/// Immutable description of a constrained multiobjective problem.
#[derive(Clone)]
pub struct ProblemDefinition {
    name: String,
    m: usize,
    q: usize,
    l: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    delta: f64,
    evaluator: Arc<EvaluatorFn>,
    cpf_sampler: Option<Arc<CpfSamplerFn>>,
}

impl fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("m", &self.m)
            .field("q", &self.q)
            .field("l", &self.l)
            .field("delta", &self.delta)
            .field("has_cpf_sampler", &self.cpf_sampler.is_some())
            .finish()
    }
}

impl ProblemDefinition {
    pub fn new<F>(
        name: impl Into<String>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        m: usize,
        q: usize,
        l: usize,
        evaluator: F,
    ) -> Result<Self, ModelError>
    where
        F: Fn(&[f64]) -> Evaluation + Send + Sync + 'static,
    {
        let n = lower.len();
        if n == 0 {
            return Err(ModelError::NoVariables);
        }
        if upper.len() != n {
            return Err(ModelError::BoundsLength {
                n,
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        if m < 2 {
            return Err(ModelError::TooFewObjectives(m));
        }
        if q > l {
            return Err(ModelError::ConstraintCounts { q, l });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) {
                return Err(ModelError::EmptyBound {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            m,
            q,
            l,
            lower,
            upper,
            delta: DEFAULT_DELTA,
            evaluator: Arc::new(evaluator),
            cpf_sampler: None,
        })
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self, ModelError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(ModelError::BadDelta(delta));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn with_cpf_sampler<S>(mut self, sampler: S) -> Self
    where
        S: Fn(usize) -> Vec<Vec<f64>> + Send + Sync + 'static,
    {
        self.cpf_sampler = Some(Arc::new(sampler));
        self
    }

    /// The same problem with every constraint dropped.
    pub fn without_constraints(&self) -> Self {
        let inner = Arc::clone(&self.evaluator);
        Self {
            name: format!("{}-unconstrained", self.name),
            q: 0,
            l: 0,
            evaluator: Arc::new(move |x: &[f64]| Evaluation {
                objs: inner(x).objs,
                cons: Vec::new(),
            }),
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n(&self) -> usize {
        self.lower.len()
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn has_cpf_sampler(&self) -> bool {
        self.cpf_sampler.is_some()
    }

    /// Calls the raw evaluator without any budget accounting.
    pub fn raw_evaluate(&self, decs: &[f64]) -> Evaluation {
        (self.evaluator)(decs)
    }

    pub fn sample_cpf(&self, k: usize) -> Option<Vec<Vec<f64>>> {
        self.cpf_sampler.as_ref().map(|s| s(k))
    }

    pub fn contains(&self, decs: &[f64]) -> bool {
        decs.len() == self.n()
            && decs
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    pub fn clamp(&self, decs: &mut [f64]) {
        for (x, (&lo, &hi)) in decs.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(lo, hi);
        }
    }

    /// Builds a solution without touching a budget. Used for analysis
    /// (feasibility sampling, witnesses) that must not consume run evaluations.
    pub fn solution_unbudgeted(&self, decs: Vec<f64>, provenance: Provenance) -> Result<Solution, EvalError> {
        self.check_decs(&decs)?;
        self.build_solution(decs, provenance)
    }

    fn check_decs(&self, decs: &[f64]) -> Result<(), EvalError> {
        if decs.len() != self.n() {
            return Err(EvalError::DimensionMismatch {
                expected: self.n(),
                got: decs.len(),
            });
        }
        for (index, (&value, (&lower, &upper))) in
            decs.iter().zip(self.lower.iter().zip(&self.upper)).enumerate()
        {
            if !(value >= lower && value <= upper) {
                return Err(EvalError::OutOfBounds {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    fn build_solution(&self, decs: Vec<f64>, provenance: Provenance) -> Result<Solution, EvalError> {
        let Evaluation { objs, cons } = self.raw_evaluate(&decs);
        if objs.len() != self.m || cons.len() != self.l {
            return Err(EvalError::EvaluatorArity {
                m: self.m,
                l: self.l,
                objs: objs.len(),
                cons: cons.len(),
            });
        }
        let cv = match constraint_violation(&cons, self.q, self.delta) {
            Ok(cv) if objs.iter().all(|f| f.is_finite()) => cv,
            Ok(_) => {
                log::warn!("{}: non-finite objective at {:?}; solution poisoned", self.name, decs);
                f64::INFINITY
            }
            Err(e) => {
                log::warn!("{}: {} at {:?}; solution poisoned", self.name, e, decs);
                f64::INFINITY
            }
        };
        let objs = if cv.is_infinite() {
            vec![f64::INFINITY; self.m]
        } else {
            objs
        };
        Ok(Solution {
            decs,
            objs,
            cons,
            cv,
            provenance,
        })
    }
}

/// Where a solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Init,
    Ga,
    Llm,
    Fallback,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Init => "init",
            Provenance::Ga => "ga",
            Provenance::Llm => "llm",
            Provenance::Fallback => "fallback",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "init" => Ok(Provenance::Init),
            "ga" => Ok(Provenance::Ga),
            "llm" => Ok(Provenance::Llm),
            "fallback" => Ok(Provenance::Fallback),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// An evaluated decision vector.
///
/// `cv` is cached from the raw constraint values; feasibility is derived
/// from it and never stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    decs: Vec<f64>,
    objs: Vec<f64>,
    cons: Vec<f64>,
    cv: f64,
    provenance: Provenance,
}

impl Solution {
    /// Reassembles a solution from persisted data where the raw constraint
    /// values are not available (e.g. a final-population CSV).
    pub fn from_record(decs: Vec<f64>, objs: Vec<f64>, cv: f64, provenance: Provenance) -> Self {
        assert!(cv >= 0.0, "constraint violation must be nonnegative");
        Self {
            decs,
            objs,
            cons: Vec::new(),
            cv,
            provenance,
        }
    }

    pub fn decs(&self) -> &[f64] {
        &self.decs
    }
    pub fn objs(&self) -> &[f64] {
        &self.objs
    }
    pub fn cons(&self) -> &[f64] {
        &self.cons
    }
    pub fn cv(&self) -> f64 {
        self.cv
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn is_feasible(&self) -> bool {
        self.cv == 0.0
    }
}

/// Ordered multiset of solutions with a nominal capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    members: Vec<Solution>,
    capacity: usize,
}

impl Population {
    pub fn new(members: Vec<Solution>, capacity: usize) -> Self {
        Self { members, capacity }
    }
    pub fn members(&self) -> &[Solution] {
        &self.members
    }
    pub fn into_members(self) -> Vec<Solution> {
        self.members
    }
    pub fn capacity(&self) -> usize {
        self.capacity
    }
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn feasible_count(&self) -> usize {
        self.members.iter().filter(|s| s.is_feasible()).count()
    }
    pub fn best_cv(&self) -> f64 {
        self.members.iter().map(Solution::cv).fold(f64::INFINITY, f64::min)
    }
}

/// How evaluations are charged against the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeAccounting {
    /// Every evaluator call costs one evaluation.
    #[default]
    PerEval,
    /// Each completed generation costs `N`; initialization is free.
    PerGenerationN,
}

impl std::str::FromStr for FeAccounting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_eval" | "per-eval" => Ok(FeAccounting::PerEval),
            "per_generation_N" | "per_generation_n" | "per-generation-n" => {
                Ok(FeAccounting::PerGenerationN)
            }
            other => Err(format!("unknown fe accounting mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetCounter {
    fe: u64,
    fe_max: u64,
    mode: FeAccounting,
    evaluator_calls: u64,
}

impl BudgetCounter {
    pub fn new(fe_max: u64) -> Self {
        Self::with_mode(fe_max, FeAccounting::PerEval)
    }

    pub fn with_mode(fe_max: u64, mode: FeAccounting) -> Self {
        Self {
            fe: 0,
            fe_max,
            mode,
            evaluator_calls: 0,
        }
    }

    pub fn fe(&self) -> u64 {
        self.fe
    }
    pub fn fe_max(&self) -> u64 {
        self.fe_max
    }
    pub fn mode(&self) -> FeAccounting {
        self.mode
    }
    /// Raw evaluator invocations, independent of the accounting mode.
    pub fn evaluator_calls(&self) -> u64 {
        self.evaluator_calls
    }
    pub fn remaining(&self) -> u64 {
        self.fe_max.saturating_sub(self.fe)
    }
    pub fn is_exhausted(&self) -> bool {
        self.fe >= self.fe_max
    }

    fn charge_eval(&mut self) -> Result<(), EvalError> {
        if self.mode == FeAccounting::PerEval {
            if self.is_exhausted() {
                return Err(EvalError::BudgetExhausted {
                    used: self.fe,
                    max: self.fe_max,
                });
            }
            self.fe += 1;
        }
        self.evaluator_calls += 1;
        Ok(())
    }

    /// Charges a completed generation under `PerGenerationN`; a no-op otherwise.
    pub fn charge_generation(&mut self, n: u64) {
        if self.mode == FeAccounting::PerGenerationN {
            self.fe += n;
        }
    }
}

/// Aggregate constraint violation.
///
/// Sums `max(0, g_i)` over the first `q` values and `max(0, |h_i| - delta)`
/// over the rest, accumulating left to right.
pub fn constraint_violation(cons: &[f64], q: usize, delta: f64) -> Result<f64, NonFiniteConstraint> {
    let mut total = 0.0;
    for (index, &value) in cons.iter().enumerate() {
        if !value.is_finite() {
            return Err(NonFiniteConstraint { index, value });
        }
        let excess = if index < q { value } else { value.abs() - delta };
        if excess > 0.0 {
            total += excess;
        }
    }
    Ok(total)
}

/// The equality term exactly as typeset in the source formula,
/// `max(0, |h - delta|)`. It flags every equality as violated, which is
/// why the production path uses `|h| - delta`.
#[cfg(test)]
pub(crate) fn constraint_violation_as_printed(cons: &[f64], q: usize, delta: f64) -> f64 {
    cons.iter()
        .enumerate()
        .map(|(i, &v)| if i < q { v.max(0.0) } else { (v - delta).abs().max(0.0) })
        .fold(0.0, |acc, x| acc + x)
}

/// Strict Pareto dominance under minimization.
pub fn pareto_dominates(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(a.len(), b.len(), "objective vectors differ in length");
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdpOrdering {
    ABetter,
    BBetter,
    Tie,
}

/// Constrained dominance: feasible beats infeasible, lower violation beats
/// higher, Pareto dominance decides between two feasible solutions.
pub fn cdp_compare(a: &Solution, b: &Solution) -> CdpOrdering {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => CdpOrdering::ABetter,
        (false, true) => CdpOrdering::BBetter,
        (false, false) => {
            if a.cv < b.cv {
                CdpOrdering::ABetter
            } else if b.cv < a.cv {
                CdpOrdering::BBetter
            } else {
                CdpOrdering::Tie
            }
        }
        (true, true) => {
            if pareto_dominates(&a.objs, &b.objs) {
                CdpOrdering::ABetter
            } else if pareto_dominates(&b.objs, &a.objs) {
                CdpOrdering::BBetter
            } else {
                CdpOrdering::Tie
            }
        }
    }
}

/// Evaluates `decs`, charging one evaluation to `budget`.
pub fn evaluate(
    problem: &ProblemDefinition,
    decs: Vec<f64>,
    budget: &mut BudgetCounter,
    provenance: Provenance,
) -> Result<Solution, EvalError> {
    problem.check_decs(&decs)?;
    budget.charge_eval()?;
    problem.build_solution(decs, provenance)
}
