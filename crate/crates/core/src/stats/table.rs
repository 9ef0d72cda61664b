//! Mean (std) mark tables in CSV and aligned Markdown.

use serde::Serialize;

use super::{wilcoxon_rank_sum, Direction, Mark};

pub const NAN_FOOTNOTE: &str = "NaN: no feasible solution was found in any run. Runs without a feasible \
solution rank worst in the tests and are left out of mean and std.";

/// `{:.d e}` with an explicit exponent sign: 7.3863e-1, 1.2000e+0.
pub fn format_sci(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else { v.to_string() };
    }
    let s = format!("{:.*e}", digits, v);
    match s.split_once('e') {
        Some((mantissa, exp)) if !exp.starts_with('-') => format!("{mantissa}e+{exp}"),
        _ => s,
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    if mean.is_nan() {
        "NaN (NaN)".to_string()
    } else {
        format!("{} ({})", format_sci(mean, 4), format_sci(std, 2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub mean: f64,
    pub std: f64,
    /// Present only when compared against a baseline.
    pub mark: Option<Mark>,
    pub is_nan: bool,
    pub valid_runs: usize,
}

impl ComparisonCell {
    /// Mean and sample std over the non-NaN runs.
    pub fn from_samples(samples: &[f64], mark: Option<Mark>) -> Self {
        let valid: Vec<f64> = samples.iter().copied().filter(|v| !v.is_nan()).collect();
        let n = valid.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                mark,
                is_nan: true,
                valid_runs: 0,
            };
        }
        let mean = valid.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (valid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            mark,
            is_nan: false,
            valid_runs: n,
        }
    }

    pub fn render(&self) -> String {
        let body = format_mean_std(if self.is_nan { f64::NAN } else { self.mean }, self.std);
        match self.mark {
            Some(m) => format!("{body} {}", m.symbol()),
            None => body,
        }
    }
}

/// Rows are problems, columns algorithms; one column is the baseline the
/// others are tested against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsTable {
    pub metric: String,
    pub problems: Vec<String>,
    pub algorithms: Vec<String>,
    pub baseline: usize,
    pub direction: Direction,
    pub cells: Vec<Vec<ComparisonCell>>,
}

impl ResultsTable {
    /// `samples[problem][algorithm]` holds the per-run values.
    pub fn build(
        metric: impl Into<String>,
        problems: Vec<String>,
        algorithms: Vec<String>,
        baseline: usize,
        direction: Direction,
        alpha: f64,
        samples: &[Vec<Vec<f64>>],
    ) -> Self {
        let cells = samples
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(a, runs)| {
                        let mark = if a == baseline || runs.is_empty() || row[baseline].is_empty() {
                            None
                        } else {
                            wilcoxon_rank_sum(runs, &row[baseline], alpha, direction).ok().map(|r| r.mark)
                        };
                        ComparisonCell::from_samples(runs, mark)
                    })
                    .collect()
            })
            .collect();
        Self {
            metric: metric.into(),
            problems,
            algorithms,
            baseline,
            direction,
            cells,
        }
    }

    /// Column index with the best mean in `row`, if any mean is finite.
    pub fn best_in_row(&self, row: usize) -> Option<usize> {
        self.cells[row]
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_nan)
            .min_by(|(i, a), (j, b)| {
                self.direction
                    .key(a.mean)
                    .total_cmp(&self.direction.key(b.mean))
                    .then(i.cmp(j))
            })
            .map(|(i, _)| i)
    }

    /// `+/-/=` counts per column; the baseline column shows dashes.
    pub fn summary(&self) -> Vec<String> {
        (0..self.algorithms.len())
            .map(|a| {
                if a == self.baseline {
                    return "----".to_string();
                }
                let count = |m: Mark| self.cells.iter().filter(|row| row[a].mark == Some(m)).count();
                format!("{}/{}/{}", count(Mark::Better), count(Mark::Worse), count(Mark::Similar))
            })
            .collect()
    }

    fn header(&self) -> Vec<String> {
        std::iter::once("Problem".to_string()).chain(self.algorithms.iter().cloned()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut lines = vec![self.header().join(",")];
        for (problem, row) in self.problems.iter().zip(&self.cells) {
            let cells: Vec<String> = row.iter().map(ComparisonCell::render).collect();
            lines.push(format!("{problem},{}", cells.join(",")));
        }
        lines.push(format!("+/-/=,{}", self.summary().join(",")));
        lines.join("\n") + "\n"
    }

    /// Column-aligned Markdown with the best cell of each row in bold.
    pub fn to_markdown(&self) -> String {
        let mut rows: Vec<Vec<String>> = vec![self.header()];
        for (r, (problem, row)) in self.problems.iter().zip(&self.cells).enumerate() {
            let best = self.best_in_row(r);
            let mut line = vec![problem.clone()];
            line.extend(row.iter().enumerate().map(|(a, c)| {
                if Some(a) == best {
                    format!("**{}**", c.render())
                } else {
                    c.render()
                }
            }));
            rows.push(line);
        }
        rows.push(std::iter::once("+/-/=".to_string()).chain(self.summary()).collect());
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0).max(3))
            .collect();
        let fmt = |r: &[String]| {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            format!("| {} |", cells.join(" | "))
        };
        let mut out = vec![fmt(&rows[0])];
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push(format!("| {} |", rule.join(" | ")));
        out.extend(rows[1..].iter().map(|r| fmt(r)));
        let any_nan = self.cells.iter().flatten().any(|c| c.is_nan);
        let mut text = out.join("\n") + "\n";
        if any_nan {
            text.push('\n');
            text.push_str(NAN_FOOTNOTE);
            text.push('\n');
        }
        text
    }
}
