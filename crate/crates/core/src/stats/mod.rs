//! Rank-based comparison of algorithms across independent runs.

mod table;

pub use table::{format_mean_std, format_sci, ComparisonCell, ResultsTable, NAN_FOOTNOTE};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Largest combined sample size handled by exact enumeration.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    SmallerIsBetter,
    LargerIsBetter,
}

impl Direction {
    /// Sort key where smaller is always better and NaN is worst.
    pub fn key(self, v: f64) -> f64 {
        match (v.is_nan(), self) {
            (true, _) => f64::INFINITY,
            (false, Direction::SmallerIsBetter) => v,
            (false, Direction::LargerIsBetter) => -v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    #[serde(rename = "+")]
    Better,
    #[serde(rename = "-")]
    Worse,
    #[serde(rename = "=")]
    Similar,
}

impl Mark {
    pub fn symbol(self) -> char {
        match self {
            Mark::Better => '+',
            Mark::Worse => '-',
            Mark::Similar => '=',
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Mark::Better => Mark::Worse,
            Mark::Worse => Mark::Better,
            Mark::Similar => Mark::Similar,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("need at least 2 algorithms, got {0}")]
    TooFewAlgorithms(usize),
    #[error("need at least 2 problems, got {0}")]
    TooFewProblems(usize),
    #[error("algorithm {index} has {found} values, expected {expected}")]
    Ragged { index: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// From `a`'s point of view: `Better` means `a` wins.
    pub mark: Mark,
    pub p: f64,
    /// Rank sum of `a`.
    pub w: f64,
    pub exact: bool,
}

/// Average 1-based ranks with ties sharing their mean rank.
pub fn midranks(keys: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]));
    let mut ranks = vec![0.0; keys.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && keys[order[j + 1]] == keys[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        // the two middle keys may both be +inf (NaN runs)
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// Exact two-sided p-value: the fraction of size-`n1` subsets of the pooled
/// (doubled, hence integer) ranks whose sum lies at least as far from the
/// mean as the observed one.
fn exact_p(doubled: &[u64], n1: usize, observed: u64) -> f64 {
    let total: u64 = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled-rank sum s
    let mut counts = vec![vec![0u64; total as usize + 1]; n1 + 1];
    counts[0][0] = 1;
    for &r in doubled {
        for k in (1..=n1).rev() {
            for s in (r as usize..=total as usize).rev() {
                counts[k][s] += counts[k - 1][s - r as usize];
            }
        }
    }
    let n = doubled.len() as u64;
    // mean of the doubled-rank sum
    let centre = n1 as u64 * (n + 1);
    let dev = |s: u64| s.abs_diff(centre);
    let observed_dev = dev(observed);
    let all: u64 = counts[n1].iter().sum();
    let extreme: u64 = counts[n1]
        .iter()
        .enumerate()
        .filter(|&(s, _)| dev(s as u64) >= observed_dev)
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / all as f64
}

fn normal_p(ranks: &[f64], n1: usize, w: f64) -> f64 {
    let n = ranks.len() as f64;
    let (n1f, n2f) = (n1 as f64, n - n1 as f64);
    let mean = n1f * (n + 1.0) / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n1f * n2f / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided Wilcoxon rank-sum test. NaN samples count as the worst value.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], alpha: f64, direction: Direction) -> Result<RankSumResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let keys: Vec<f64> = a.iter().chain(b).map(|&v| direction.key(v)).collect();
    let ranks = midranks(&keys);
    let n1 = a.len();
    let w: f64 = ranks[..n1].iter().sum();
    let exact = keys.len() <= EXACT_LIMIT;
    let p = if exact {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        exact_p(&doubled, n1, (2.0 * w).round() as u64)
    } else {
        normal_p(&ranks, n1, w)
    };
    let mark = if p >= alpha {
        Mark::Similar
    } else {
        let (ma, mb) = (median(keys[..n1].to_vec()), median(keys[n1..].to_vec()));
        let a_better = if ma != mb {
            ma < mb
        } else {
            w < n1 as f64 * (keys.len() as f64 + 1.0) / 2.0
        };
        if a_better {
            Mark::Better
        } else {
            Mark::Worse
        }
    };
    Ok(RankSumResult { mark, p, w, exact })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub mean_ranks: Vec<f64>,
    pub chi_square: f64,
    pub p_value: f64,
}

/// Mean per-problem rank of each algorithm (`values[algorithm][problem]`).
pub fn friedman_ranks(values: &[Vec<f64>], direction: Direction) -> Result<FriedmanResult, StatsError> {
    let k = values.len();
    if k < 2 {
        return Err(StatsError::TooFewAlgorithms(k));
    }
    let n = values[0].len();
    if n < 2 {
        return Err(StatsError::TooFewProblems(n));
    }
    for (index, row) in values.iter().enumerate() {
        if row.len() != n {
            return Err(StatsError::Ragged {
                index,
                expected: n,
                found: row.len(),
            });
        }
    }
    let mut sums = vec![0.0; k];
    for j in 0..n {
        let keys: Vec<f64> = values.iter().map(|row| direction.key(row[j])).collect();
        for (s, r) in sums.iter_mut().zip(midranks(&keys)) {
            *s += r;
        }
    }
    let mean_ranks: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let (kf, nf) = (k as f64, n as f64);
    let chi_square =
        12.0 * nf / (kf * (kf + 1.0)) * mean_ranks.iter().map(|r| r * r).sum::<f64>() - 3.0 * nf * (kf + 1.0);
    let chi_square = chi_square.max(0.0);
    let dist = ChiSquared::new(kf - 1.0).expect("k >= 2");
    Ok(FriedmanResult {
        mean_ranks,
        chi_square,
        p_value: dist.sf(chi_square),
    })
}
