//! The TRIC benchmark suite.
//!
//! Seven constrained problems on `[0, 1]^n` built from three constraint
//! archetypes, each with an analytically known constrained Pareto front:
//!
//! * Type I (diversity): `b - sin(a*pi*f1) <= 0` cuts the front into five arcs.
//! * Type II (feasibility): `sum_{i>=2} (x_i - 0.5)^2 - rho <= 0` shrinks the
//!   feasible share of the search space.
//! * Type III (convergence): `e - sum(f) <= 0` pushes the attainable front
//!   away from the unconstrained one.
//!
//! Bi-objective members share `g(x) = 1 + sum_{i>=2} (x_i - 0.5)^2`,
//! `f1 = x1` and `f2 = g * (1 - sqrt(f1 / g))`. Constraint values are
//! ordered inequalities first, equalities last.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{constraint_violation, Evaluation, ProblemDefinition, DEFAULT_DELTA};

pub const TYPE1_A: f64 = 10.0;
pub const TYPE1_B: f64 = 0.5;
pub const TYPE2_RHO_PER_DIM: f64 = 0.0025;
pub const TYPE3_E: f64 = 1.2;
pub const TRIC6_E: f64 = 1.3;
pub const TRIC7_RADIUS_SQ: f64 = 0.1;

pub const DEFAULT_N: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (expected TRIC1..TRIC7)")]
    UnknownId(String),
    #[error("{id} needs n >= {min}, got {n}")]
    DimensionTooSmall { id: TricId, n: usize, min: usize },
    #[error("problem `{0}` has no constrained Pareto front sampler")]
    NoCpfSampler(String),
    #[error("need at least 2 reference points, got {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TricId {
    #[serde(rename = "TRIC1")]
    Tric1,
    #[serde(rename = "TRIC2")]
    Tric2,
    #[serde(rename = "TRIC3")]
    Tric3,
    #[serde(rename = "TRIC4")]
    Tric4,
    #[serde(rename = "TRIC5")]
    Tric5,
    #[serde(rename = "TRIC6")]
    Tric6,
    #[serde(rename = "TRIC7")]
    Tric7,
}

impl TricId {
    pub const ALL: [TricId; 7] = [
        TricId::Tric1,
        TricId::Tric2,
        TricId::Tric3,
        TricId::Tric4,
        TricId::Tric5,
        TricId::Tric6,
        TricId::Tric7,
    ];

    /// Smallest dimension at which every front point has an in-box pre-image.
    pub fn min_n(self) -> usize {
        match self {
            TricId::Tric3 | TricId::Tric5 | TricId::Tric6 => 4,
            _ => 2,
        }
    }

    pub fn m(self) -> usize {
        match self {
            TricId::Tric6 => 3,
            _ => 2,
        }
    }

    fn has_type1(self) -> bool {
        matches!(self, TricId::Tric1 | TricId::Tric4 | TricId::Tric5)
    }
    fn has_type2(self) -> bool {
        matches!(self, TricId::Tric2 | TricId::Tric4)
    }
    fn has_type3(self) -> bool {
        matches!(self, TricId::Tric3 | TricId::Tric5)
    }

    /// (inequalities, total constraints)
    pub fn constraint_counts(self) -> (usize, usize) {
        match self {
            TricId::Tric4 | TricId::Tric5 => (2, 2),
            TricId::Tric7 => (0, 1),
            _ => (1, 1),
        }
    }

    pub fn archetype(self) -> &'static str {
        match self {
            TricId::Tric1 => "Type I (diversity)",
            TricId::Tric2 => "Type II (feasibility)",
            TricId::Tric3 => "Type III (convergence)",
            TricId::Tric4 => "Type I + Type II",
            TricId::Tric5 => "Type I + Type III",
            TricId::Tric6 => "Type III, tri-objective",
            TricId::Tric7 => "Type II as equality",
        }
    }
}

impl fmt::Display for TricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = TricId::ALL.iter().position(|x| x == self).unwrap() + 1;
        write!(f, "TRIC{k}")
    }
}

impl FromStr for TricId {
    type Err = ProblemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        TricId::ALL
            .iter()
            .copied()
            .find(|id| id.to_string() == upper)
            .ok_or_else(|| ProblemError::UnknownId(s.to_string()))
    }
}

/// Catalog entry describing one instantiated problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TricSpec {
    pub id: TricId,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub l: usize,
    pub archetype: &'static str,
    pub parameters: Vec<(&'static str, f64)>,
    pub witness: Vec<f64>,
}

impl TricSpec {
    pub fn new(id: TricId, n: usize) -> Result<Self, ProblemError> {
        check_n(id, n)?;
        let (q, l) = id.constraint_counts();
        let mut parameters = Vec::new();
        if id.has_type1() {
            parameters.push(("a", TYPE1_A));
            parameters.push(("b", TYPE1_B));
        }
        if id.has_type2() {
            parameters.push(("rho", rho(n)));
        }
        if id.has_type3() {
            parameters.push(("e", TYPE3_E));
        }
        if id == TricId::Tric6 {
            parameters.push(("e", TRIC6_E));
        }
        if id == TricId::Tric7 {
            parameters.push(("r2", TRIC7_RADIUS_SQ));
        }
        parameters.push(("delta", DEFAULT_DELTA));
        Ok(Self {
            id,
            n,
            m: id.m(),
            q,
            l,
            archetype: id.archetype(),
            parameters,
            witness: witness(id, n)?,
        })
    }
}

fn check_n(id: TricId, n: usize) -> Result<(), ProblemError> {
    if n < id.min_n() {
        return Err(ProblemError::DimensionTooSmall {
            id,
            n,
            min: id.min_n(),
        });
    }
    Ok(())
}

pub fn rho(n: usize) -> f64 {
    TYPE2_RHO_PER_DIM * (n as f64 - 1.0)
}

fn spread(x: &[f64], from: usize) -> f64 {
    x[from..].iter().map(|&v| (v - 0.5) * (v - 0.5)).sum()
}

/// (f1, f2, sum_{i>=2} (x_i - 0.5)^2)
fn biobjective(x: &[f64]) -> (f64, f64, f64) {
    let s = spread(x, 1);
    let g = 1.0 + s;
    let f1 = x[0];
    let f2 = g * (1.0 - (f1 / g).sqrt());
    (f1, f2, s)
}

fn type1(f1: f64) -> f64 {
    TYPE1_B - (TYPE1_A * PI * f1).sin()
}

/// Builds the problem definition for `id` with `n` decision variables.
pub fn make_problem(id: TricId, n: usize) -> Result<ProblemDefinition, ProblemError> {
    check_n(id, n)?;
    let (q, l) = id.constraint_counts();
    let m = id.m();
    let rho = rho(n);
    let evaluator = move |x: &[f64]| -> Evaluation {
        if id == TricId::Tric6 {
            let g = 1.0 + spread(x, 2);
            let (a1, a2) = (0.5 * PI * x[0], 0.5 * PI * x[1]);
            let objs = vec![g * a1.cos() * a2.cos(), g * a1.cos() * a2.sin(), g * a1.sin()];
            let cons = vec![TRIC6_E - objs.iter().sum::<f64>()];
            return Evaluation { objs, cons };
        }
        let (f1, f2, s) = biobjective(x);
        let mut cons = Vec::with_capacity(2);
        if id.has_type1() {
            cons.push(type1(f1));
        }
        if id.has_type2() {
            cons.push(s - rho);
        }
        if id.has_type3() {
            cons.push(TYPE3_E - (f1 + f2));
        }
        if id == TricId::Tric7 {
            cons.push(s - TRIC7_RADIUS_SQ);
        }
        Evaluation {
            objs: vec![f1, f2],
            cons,
        }
    };
    let problem = ProblemDefinition::new(id.to_string(), vec![0.0; n], vec![1.0; n], m, q, l, evaluator)
        .expect("TRIC definitions are well formed")
        .with_cpf_sampler(move |k| cpf_segments(id, k).into_iter().flatten().collect());
    Ok(problem)
}

/// `K` points on the analytic constrained Pareto front.
pub fn sample_cpf(problem: &ProblemDefinition, k: usize) -> Result<Vec<Vec<f64>>, ProblemError> {
    if k < 2 {
        return Err(ProblemError::TooFewPoints(k));
    }
    problem
        .sample_cpf(k)
        .ok_or_else(|| ProblemError::NoCpfSampler(problem.name().to_string()))
}

/// Intervals of `t = f1` where `sin(10*pi*t) >= 0.5`.
pub fn type1_bands() -> Vec<(f64, f64)> {
    (0..5)
        .map(|k| {
            let k = k as f64;
            (k / 5.0 + 1.0 / 60.0, k / 5.0 + 1.0 / 12.0)
        })
        .collect()
}

fn front_f2(id: TricId, t: f64) -> f64 {
    match id {
        TricId::Tric1 | TricId::Tric2 | TricId::Tric4 => 1.0 - t.sqrt(),
        TricId::Tric3 | TricId::Tric5 => TYPE3_E - t,
        TricId::Tric7 => {
            let g = 1.0 + TRIC7_RADIUS_SQ;
            g - (g * t).sqrt()
        }
        TricId::Tric6 => unreachable!("tri-objective front is not parameterized by f1"),
    }
}

fn arc_length(id: TricId, a: f64, b: f64) -> f64 {
    // Dense chord sum; the sqrt front has an infinite slope at t = 0, which
    // rules out derivative-based quadrature there.
    let steps = 2000;
    let point = |i: usize| {
        let t = a + (b - a) * i as f64 / steps as f64;
        (t, front_f2(id, t))
    };
    (1..=steps)
        .map(|i| {
            let (p, q) = (point(i - 1), point(i));
            (q.0 - p.0).hypot(q.1 - p.1)
        })
        .sum()
}

/// Splits `k` into integer counts proportional to `weights` using the
/// largest-remainder rule (ties go to the earlier index).
pub fn largest_remainder(weights: &[f64], k: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / total * k as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (quotas[i] - quotas[i].floor(), quotas[j] - quotas[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().take(k - assigned) {
        counts[i] += 1;
    }
    counts
}

fn grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        c => (0..c).map(|j| a + (b - a) * j as f64 / (c - 1) as f64).collect(),
    }
}

/// The front as a list of connected pieces, `k` points in total.
pub fn cpf_segments(id: TricId, k: usize) -> Vec<Vec<Vec<f64>>> {
    if id == TricId::Tric6 {
        return vec![tric6_front(k)];
    }
    let bands = if id.has_type1() {
        type1_bands()
    } else {
        vec![(0.0, 1.0)]
    };
    let lengths: Vec<f64> = bands.iter().map(|&(a, b)| arc_length(id, a, b)).collect();
    let counts = largest_remainder(&lengths, k);
    bands
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(&(a, b), c)| grid(a, b, c).into_iter().map(|t| vec![t, front_f2(id, t)]).collect())
        .collect()
}

fn tric6_front(k: usize) -> Vec<Vec<f64>> {
    // Area-uniform spiral over the positive octant of the unit sphere, then
    // pushed out onto the plane sum(f) = e wherever the sphere is infeasible.
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    (0..k)
        .map(|i| {
            let z = (i as f64 + 0.5) / k as f64;
            let phi = 0.5 * PI * ((i as f64 * golden).fract());
            let rxy = (1.0 - z * z).sqrt();
            let d = [rxy * phi.cos(), rxy * phi.sin(), z];
            let r = (TRIC6_E / (d[0] + d[1] + d[2])).max(1.0);
            d.iter().map(|c| c * r).collect()
        })
        .collect()
}

fn with_spread(n: usize, first: &[f64], from: usize, excess: f64) -> Vec<f64> {
    let mut x = first.to_vec();
    let off = 0.5 + (excess.max(0.0) / (n - from) as f64).sqrt();
    x.resize(n, off);
    x
}

/// Decision vector mapping to the front point with parameter `t = f1`
/// (bi-objective) whose evaluation is feasible, or `None` when it cannot be
/// built inside the box at this dimension.
pub fn cpf_preimage(id: TricId, n: usize, t: f64) -> Option<Vec<f64>> {
    if id == TricId::Tric6 || !(0.0..=1.0).contains(&t) {
        return None;
    }
    let problem = make_problem(id, n).ok()?;
    let target_g = match id {
        TricId::Tric3 | TricId::Tric5 => {
            let s = 0.5 * (t.sqrt() + (4.0 * TYPE3_E - 3.0 * t).sqrt());
            s * s
        }
        TricId::Tric7 => 1.0 + TRIC7_RADIUS_SQ,
        _ => 1.0,
    };
    feasible_near(&problem, |bump| with_spread(n, &[t], 1, target_g - 1.0 + bump))
}

/// Pre-image of the TRIC6 front point in unit direction `d`.
pub fn tric6_preimage(n: usize, d: [f64; 3]) -> Option<Vec<f64>> {
    let problem = make_problem(TricId::Tric6, n).ok()?;
    let r = (TRIC6_E / (d[0] + d[1] + d[2])).max(1.0);
    let x1 = d[2].clamp(-1.0, 1.0).asin() / (0.5 * PI);
    let x2 = d[1].atan2(d[0]) / (0.5 * PI);
    feasible_near(&problem, |bump| with_spread(n, &[x1, x2], 2, r - 1.0 + bump))
}

// The analytic pre-image sits exactly on the constraint boundary; rounding
// can leave it a few ulps infeasible, so nudge the spread outward until the
// evaluator agrees.
fn feasible_near(problem: &ProblemDefinition, build: impl Fn(f64) -> Vec<f64>) -> Option<Vec<f64>> {
    let mut bump = 0.0;
    for _ in 0..60 {
        let x = build(bump);
        if problem.contains(&x) {
            let ev = problem.raw_evaluate(&x);
            if constraint_violation(&ev.cons, problem.q(), problem.delta()) == Ok(0.0) {
                return Some(x);
            }
        } else {
            return None;
        }
        bump = if bump == 0.0 { 1e-15 } else { bump * 2.0 };
    }
    None
}

/// A documented feasible point for each problem.
pub fn witness(id: TricId, n: usize) -> Result<Vec<f64>, ProblemError> {
    check_n(id, n)?;
    let w = match id {
        TricId::Tric1 | TricId::Tric4 => with_spread(n, &[0.05], 1, 0.0),
        TricId::Tric2 => vec![0.5; n],
        TricId::Tric3 => cpf_preimage(id, n, 0.5).unwrap_or_else(|| vec![0.0; n]),
        TricId::Tric5 => cpf_preimage(id, n, 0.05).unwrap_or_else(|| vec![0.0; n]),
        TricId::Tric6 => vec![0.5; n],
        TricId::Tric7 => with_spread(n, &[0.5], 1, TRIC7_RADIUS_SQ),
    };
    Ok(w)
}

/// Monte Carlo share of uniform in-bounds points with zero violation.
/// Evaluations here are not charged to any run budget.
pub fn feasible_ratio_estimate<R: Rng + ?Sized>(problem: &ProblemDefinition, samples: usize, rng: &mut R) -> f64 {
    assert!(samples >= 1, "need at least one sample");
    let mut x = vec![0.0; problem.n()];
    let mut feasible = 0usize;
    for _ in 0..samples {
        for (v, (&lo, &hi)) in x.iter_mut().zip(problem.lower().iter().zip(problem.upper())) {
            *v = rng.random_range(lo..=hi);
        }
        let ev = problem.raw_evaluate(&x);
        if constraint_violation(&ev.cons, problem.q(), problem.delta()) == Ok(0.0) {
            feasible += 1;
        }
    }
    feasible as f64 / samples as f64
}
