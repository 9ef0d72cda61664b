//! IGD and hypervolume over the feasible part of a population.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Solution;

pub const HV_REFERENCE_COORD: f64 = 1.1;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("reference set is empty")]
    EmptyReference,
    #[error("objective vector has {found} components, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("normalization is degenerate in component {index} (ideal {ideal}, nadir {nadir})")]
    Degenerate { index: usize, ideal: f64, nadir: f64 },
}

fn check_dims<'a>(m: usize, points: impl IntoIterator<Item = &'a [f64]>) -> Result<(), MetricError> {
    for p in points {
        if p.len() != m {
            return Err(MetricError::DimensionMismatch {
                expected: m,
                found: p.len(),
            });
        }
    }
    Ok(())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance from each reference point to its nearest member of
/// `points`; NaN for an empty `points`.
pub fn igd_points(reference: &[Vec<f64>], points: &[&[f64]]) -> Result<f64, MetricError> {
    let m = reference.first().ok_or(MetricError::EmptyReference)?.len();
    check_dims(m, reference.iter().map(Vec::as_slice))?;
    check_dims(m, points.iter().copied())?;
    if points.is_empty() {
        return Ok(f64::NAN);
    }
    let total: f64 = reference
        .iter()
        .map(|r| points.iter().map(|p| euclid(r, p)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / reference.len() as f64)
}

/// IGD of the feasible members of `pop`, on raw objectives.
pub fn igd(reference: &[Vec<f64>], pop: &[Solution]) -> Result<f64, MetricError> {
    let feasible: Vec<&[f64]> = pop.iter().filter(|s| s.is_feasible()).map(Solution::objs).collect();
    igd_points(reference, &feasible)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub ideal: Vec<f64>,
    pub nadir: Vec<f64>,
}

impl Normalization {
    pub fn new(ideal: Vec<f64>, nadir: Vec<f64>) -> Result<Self, MetricError> {
        check_dims(ideal.len(), [nadir.as_slice()])?;
        for (index, (&lo, &hi)) in ideal.iter().zip(&nadir).enumerate() {
            if !(hi > lo) {
                return Err(MetricError::Degenerate {
                    index,
                    ideal: lo,
                    nadir: hi,
                });
            }
        }
        Ok(Self { ideal, nadir })
    }

    /// Componentwise extremes of a reference front.
    pub fn from_front(front: &[Vec<f64>]) -> Result<Self, MetricError> {
        let m = front.first().ok_or(MetricError::EmptyReference)?.len();
        check_dims(m, front.iter().map(Vec::as_slice))?;
        let mut ideal = vec![f64::INFINITY; m];
        let mut nadir = vec![f64::NEG_INFINITY; m];
        for p in front {
            for j in 0..m {
                ideal[j] = ideal[j].min(p[j]);
                nadir[j] = nadir[j].max(p[j]);
            }
        }
        Self::new(ideal, nadir)
    }

    pub fn m(&self) -> usize {
        self.ideal.len()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>, MetricError> {
        check_dims(self.m(), [f])?;
        Ok(f.iter()
            .zip(self.ideal.iter().zip(&self.nadir))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect())
    }

    pub fn reference_point(&self) -> Vec<f64> {
        vec![HV_REFERENCE_COORD; self.m()]
    }
}

pub fn normalize(objs: &[f64], ideal: &[f64], nadir: &[f64]) -> Result<Vec<f64>, MetricError> {
    Normalization::new(ideal.to_vec(), nadir.to_vec())?.apply(objs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvEstimate {
    pub value: f64,
    /// Zero for the exact (m <= 3) paths.
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

fn hv2(points: &mut [[f64; 2]], r: [f64; 2]) -> f64 {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut floor = r[1];
    let mut area = 0.0;
    for p in points.iter() {
        if p[1] < floor {
            area += (r[0] - p[0]) * (floor - p[1]);
            floor = p[1];
        }
    }
    area
}

fn hv3(points: &[&[f64]], r: &[f64]) -> f64 {
    let mut sorted: Vec<&[f64]> = points.to_vec();
    sorted.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    let mut slice: Vec<[f64; 2]> = Vec::with_capacity(sorted.len());
    for (i, p) in sorted.iter().enumerate() {
        slice.push([p[0], p[1]]);
        let top = sorted.get(i + 1).map_or(r[2], |q| q[2]);
        if top > p[2] {
            volume += hv2(&mut slice, [r[0], r[1]]) * (top - p[2]);
        }
    }
    volume
}

fn hv_monte_carlo(points: &[&[f64]], r: &[f64], mc: MonteCarlo) -> HvEstimate {
    let m = r.len();
    let lower: Vec<f64> = (0..m)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let box_volume: f64 = (0..m).map(|j| r[j] - lower[j]).product();
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let mut sample = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..mc.samples {
        for j in 0..m {
            sample[j] = lower[j] + (r[j] - lower[j]) * rng.random::<f64>();
        }
        if points.iter().any(|p| p.iter().zip(&sample).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / mc.samples as f64;
    HvEstimate {
        value: frac * box_volume,
        std_error: box_volume * (frac * (1.0 - frac) / mc.samples as f64).sqrt(),
    }
}

/// Volume dominated by `points` and bounded by `reference`. Points that do
/// not strictly dominate the reference point contribute nothing. Exact for
/// two and three objectives, Monte Carlo beyond.
pub fn hypervolume_points(points: &[&[f64]], reference: &[f64], mc: MonteCarlo) -> Result<HvEstimate, MetricError> {
    let m = reference.len();
    check_dims(m, points.iter().copied())?;
    let inside: Vec<&[f64]> = points
        .iter()
        .copied()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a < r))
        .collect();
    // Only the nondominated set (one copy of duplicates) enters the exact
    // sweeps, so dominated points cannot perturb the floating-point sums.
    let weakly = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x <= y);
    let inside: Vec<&[f64]> = inside
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            !inside
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && weakly(q, p) && (q != p || j < i))
        })
        .map(|(_, p)| *p)
        .collect();
    let exact = |value| HvEstimate { value, std_error: 0.0 };
    Ok(match (m, inside.is_empty()) {
        (_, true) => exact(0.0),
        (1, _) => exact(reference[0] - inside.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min)),
        (2, _) => {
            let mut pts: Vec<[f64; 2]> = inside.iter().map(|p| [p[0], p[1]]).collect();
            exact(hv2(&mut pts, [reference[0], reference[1]]))
        }
        (3, _) => exact(hv3(&inside, reference)),
        _ => hv_monte_carlo(&inside, reference, mc),
    })
}

/// HV of the feasible members of `pop` after normalization; NaN value when
/// none is feasible.
pub fn hypervolume(
    pop: &[Solution],
    normalization: &Normalization,
    reference: &[f64],
    mc: MonteCarlo,
) -> Result<HvEstimate, MetricError> {
    let normalized = pop
        .iter()
        .filter(|s| s.is_feasible())
        .map(|s| normalization.apply(s.objs()))
        .collect::<Result<Vec<_>, _>>()?;
    if normalized.is_empty() {
        return Ok(HvEstimate {
            value: f64::NAN,
            std_error: f64::NAN,
        });
    }
    let refs: Vec<&[f64]> = normalized.iter().map(Vec::as_slice).collect();
    hypervolume_points(&refs, reference, mc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub igd: f64,
    pub hv: f64,
    pub hv_std_error: f64,
    pub feasible_count: usize,
    pub normalization: Normalization,
    pub reference_point: Vec<f64>,
}

/// Both indicators against a sampled reference front.
pub fn evaluate_metrics(pop: &[Solution], front: &[Vec<f64>], mc: MonteCarlo) -> Result<MetricReport, MetricError> {
    let normalization = Normalization::from_front(front)?;
    let reference_point = normalization.reference_point();
    let hv = hypervolume(pop, &normalization, &reference_point, mc)?;
    Ok(MetricReport {
        igd: igd(front, pop)?,
        hv: hv.value,
        hv_std_error: hv.std_error,
        feasible_count: pop.iter().filter(|s| s.is_feasible()).count(),
        normalization,
        reference_point,
    })
}
