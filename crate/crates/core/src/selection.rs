//! SPEA2-style fitness assignment and environmental selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cdp_compare, pareto_dominates, CdpOrdering, Population, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Dominance under the constrained dominance principle.
    Constrained,
    /// Plain Pareto dominance on objectives; constraints ignored.
    Unconstrained,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("cannot select {wanted} from a union of {available}")]
    UnionTooSmall { wanted: usize, available: usize },
}

fn dominates(a: &Solution, b: &Solution, mode: SelectionMode) -> bool {
    match mode {
        SelectionMode::Constrained => cdp_compare(a, b) == CdpOrdering::ABetter,
        SelectionMode::Unconstrained => pareto_dominates(a.objs(), b.objs()),
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    // inf - inf between two poisoned solutions
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

fn distance_matrix(union: &[Solution]) -> Vec<Vec<f64>> {
    let n = union.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = distance(union[i].objs(), union[j].objs());
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Strength-based raw fitness plus k-th-nearest-neighbor density.
///
/// Values below 1 mark exactly the nondominated members; smaller is better.
pub fn spea2_fitness(union: &[Solution], mode: SelectionMode) -> Vec<f64> {
    let n = union.len();
    if n == 0 {
        return Vec::new();
    }
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut strength = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&union[i], &union[j], mode) {
                strength[i] += 1;
                dominated_by[j].push(i);
            }
        }
    }
    let k = (n as f64).sqrt().floor() as usize;
    let dist = distance_matrix(union);
    (0..n)
        .map(|i| {
            let raw: usize = dominated_by[i].iter().map(|&j| strength[j]).sum();
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i][j]).collect();
            // no k-th neighbor (singleton union) counts as distance 0
            let sigma = if row.len() >= k && k > 0 {
                row.select_nth_unstable_by(k - 1, f64::total_cmp);
                row[k - 1]
            } else {
                0.0
            };
            raw as f64 + 1.0 / (sigma + 2.0)
        })
        .collect()
}

/// Picks `n` members of `union`, returning them in union order together
/// with their fitness values computed over the whole union.
pub fn environmental_selection(
    union: Vec<Solution>,
    n: usize,
    mode: SelectionMode,
) -> Result<(Population, Vec<f64>), SelectionError> {
    if union.len() < n {
        return Err(SelectionError::UnionTooSmall {
            wanted: n,
            available: union.len(),
        });
    }
    let fitness = spea2_fitness(&union, mode);
    let mut chosen: Vec<usize> = (0..union.len()).filter(|&i| fitness[i] < 1.0).collect();
    if chosen.len() < n {
        let mut order: Vec<usize> = (0..union.len()).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
        chosen = order[..n].to_vec();
        chosen.sort_unstable();
    } else if chosen.len() > n {
        chosen = truncate(&union, chosen, n);
    }
    let kept_fitness = chosen.iter().map(|&i| fitness[i]).collect();
    let mut slots: Vec<Option<Solution>> = union.into_iter().map(Some).collect();
    let members = chosen.iter().map(|&i| slots[i].take().unwrap()).collect();
    Ok((Population::new(members, n), kept_fitness))
}

/// Repeatedly drops the member whose sorted distances to the remaining
/// members are lexicographically smallest (lowest index on full ties).
fn truncate(union: &[Solution], mut alive: Vec<usize>, n: usize) -> Vec<usize> {
    let dist = distance_matrix(union);
    while alive.len() > n {
        let nearest: Vec<f64> = alive
            .iter()
            .map(|&i| {
                alive
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| dist[i][j])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let min = nearest.iter().copied().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..alive.len()).filter(|&p| nearest[p] == min).collect();
        let victim = if tied.len() == 1 {
            tied[0]
        } else {
            let sorted_row = |p: usize| {
                let i = alive[p];
                let mut row: Vec<f64> = alive.iter().filter(|&&j| j != i).map(|&j| dist[i][j]).collect();
                row.sort_by(f64::total_cmp);
                row
            };
            let rows: Vec<(usize, Vec<f64>)> = tied.iter().map(|&p| (p, sorted_row(p))).collect();
            rows.iter()
                .min_by(|(pa, ra), (pb, rb)| lexicographic(ra, rb).then(alive[*pa].cmp(&alive[*pb])))
                .map(|(p, _)| *p)
                .unwrap()
        };
        alive.remove(victim);
    }
    alive
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}
