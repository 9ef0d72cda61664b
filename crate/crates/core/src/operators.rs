//! Real-coded variation: simulated binary crossover, polynomial mutation and
//! binary tournament mating selection.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("tournament needs at least two candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("invalid operator parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorParams {
    /// Probability that a parent pair is recombined at all.
    pub pc: f64,
    pub eta_c: f64,
    /// Per-variable mutation probability; `None` means `1/n`.
    pub pm: Option<f64>,
    pub eta_m: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            pc: 1.0,
            eta_c: 20.0,
            pm: None,
            eta_m: 20.0,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.pc) {
            return Err(OperatorError::InvalidParam(format!("pc = {}", self.pc)));
        }
        if let Some(pm) = self.pm {
            if !unit(pm) {
                return Err(OperatorError::InvalidParam(format!("pm = {pm}")));
            }
        }
        if !(self.eta_c > 0.0) || !(self.eta_m > 0.0) {
            return Err(OperatorError::InvalidParam(format!(
                "eta_c = {}, eta_m = {}",
                self.eta_c, self.eta_m
            )));
        }
        Ok(())
    }

    pub fn mutation_probability(&self, n: usize) -> f64 {
        self.pm.unwrap_or(1.0 / n as f64)
    }
}

/// SBX spread factor for a uniform draw `u`.
pub fn spread_factor(u: f64, eta_c: f64) -> f64 {
    let e = 1.0 / (eta_c + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    }
}

/// Recombines one variable with spread factor `beta`; `c1 + c2 = p1 + p2`.
pub fn sbx_children(p1: f64, p2: f64, beta: f64) -> (f64, f64) {
    (
        0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2),
        0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2),
    )
}

/// Polynomial mutation step (as a fraction of the variable range).
pub fn mutation_delta(u: f64, eta_m: f64) -> f64 {
    let e = 1.0 / (eta_m + 1.0);
    if u < 0.5 {
        (2.0 * u).powf(e) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(e)
    }
}

pub fn sbx_crossover<R: Rng + ?Sized>(
    p1: &[f64],
    p2: &[f64],
    params: &OperatorParams,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(p1.len(), p2.len(), "parents differ in length");
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.random::<f64>() >= params.pc {
        return (c1, c2);
    }
    for i in 0..p1.len() {
        if rng.random_bool(0.5) {
            let beta = spread_factor(rng.random::<f64>(), params.eta_c);
            let (a, b) = sbx_children(p1[i], p2[i], beta);
            c1[i] = a.clamp(lower[i], upper[i]);
            c2[i] = b.clamp(lower[i], upper[i]);
        }
    }
    (c1, c2)
}

pub fn polynomial_mutation<R: Rng + ?Sized>(
    decs: &[f64],
    params: &OperatorParams,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let pm = params.mutation_probability(decs.len());
    decs.iter()
        .enumerate()
        .map(|(i, &x)| {
            if rng.random::<f64>() < pm {
                let delta = mutation_delta(rng.random::<f64>(), params.eta_m);
                (x + delta * (upper[i] - lower[i])).clamp(lower[i], upper[i])
            } else {
                x
            }
        })
        .collect()
}

/// Runs `k` independent binary tournaments over `fitness` (smaller wins) and
/// returns the winners' indices.
pub fn binary_tournament<R: Rng + ?Sized>(fitness: &[f64], k: usize, rng: &mut R) -> Result<Vec<usize>, OperatorError> {
    let len = fitness.len();
    if len < 2 {
        return Err(OperatorError::TooFewCandidates(len));
    }
    Ok((0..k)
        .map(|_| {
            let a = rng.random_range(0..len);
            let mut b = rng.random_range(0..len - 1);
            if b >= a {
                b += 1;
            }
            match fitness[a].total_cmp(&fitness[b]) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if rng.random_bool(0.5) {
                        a
                    } else {
                        b
                    }
                }
            }
        })
        .collect())
}
