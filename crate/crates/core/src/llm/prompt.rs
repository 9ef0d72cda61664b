//! Canonical four-part offspring prompt.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::Solution;

/// Bumped whenever the rendered wording changes; recorded in run manifests
/// so stale replays fail loudly instead of silently missing.
pub const PROMPT_VERSION: u32 = 1;

pub const DEFAULT_PRECISION: usize = 6;

const TASK_DESCRIPTION: &str = "You are given solutions of a constrained multiobjective optimization problem. \
Each solution has decision variables (decs), objective values (objs), and a constraint violation degree (CV). \
A solution with CV = 0 is feasible. A solution with smaller CV is better; among solutions with equal CV, \
smaller objective values are better.";

const OUTPUT_FORMAT: &str = "Output only the new decision variables, separated by commas, placed between \
<start> and <end> tags. Do not include any additional explanation.";

const OUTPUT_FORMAT_BATCH: &str = "Output only the new decision variables, one solution per line, separated by \
commas, each solution placed between its own <start> and <end> tags. Do not include any additional explanation.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("cannot build a prompt from an empty pool")]
    EmptyPool,
    #[error("bounds have length {lower}/{upper}, expected {n}")]
    BoundsMismatch { n: usize, lower: usize, upper: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSections {
    pub task_description: String,
    pub input_information: String,
    pub operational_steps: String,
    pub output_format: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptMeta {
    pub problem: String,
    pub generation: u64,
    pub population: String,
    /// SHA-256 of the rendered input section.
    pub pool_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub sections: PromptSections,
    pub rendered: String,
    pub meta: PromptMeta,
}

impl PromptBundle {
    pub fn hash(&self) -> String {
        prompt_hash(&self.rendered)
    }
}

pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Formats like C's `%.{digits}g`, with exponents written as `e-5`/`e12`.
pub fn format_significant(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn render_vector(v: &[f64], precision: usize) -> String {
    let parts: Vec<String> = v.iter().map(|&x| format_significant(x, precision)).collect();
    format!("[{}]", parts.join(", "))
}

/// `decs: [..], objs: [..], CV: v`
pub fn solution_line(s: &Solution, precision: usize) -> String {
    format!(
        "decs: {}, objs: {}, CV: {}",
        render_vector(s.decs(), precision),
        render_vector(s.objs(), precision),
        format_significant(s.cv(), precision)
    )
}

fn solution_block(list: &[Solution], precision: usize) -> String {
    if list.is_empty() {
        "none".to_string()
    } else {
        list.iter()
            .map(|s| solution_line(s, precision))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn bounds_clause(lower: &[f64], upper: &[f64], precision: usize) -> String {
    lower
        .iter()
        .zip(upper)
        .enumerate()
        .map(|(i, (&lo, &hi))| {
            format!(
                "value {} must lie within [{}, {}]",
                i + 1,
                format_significant(lo, precision),
                format_significant(hi, precision)
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders the canonical prompt asking for `count` new solutions (one unless
/// batching).
pub fn build_prompt_for(
    feasible: &[Solution],
    infeasible: &[Solution],
    lower: &[f64],
    upper: &[f64],
    precision: usize,
    count: usize,
) -> Result<PromptBundle, PromptError> {
    if feasible.is_empty() && infeasible.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    let n = lower.len();
    if upper.len() != n {
        return Err(PromptError::BoundsMismatch {
            n,
            lower: lower.len(),
            upper: upper.len(),
        });
    }
    let input_information = format!(
        "Feasible solutions:\n{}\nInfeasible solutions:\n{}",
        solution_block(feasible, precision),
        solution_block(infeasible, precision)
    );
    let bounds = bounds_clause(lower, upper, precision);
    let (operational_steps, output_format) = if count <= 1 {
        (
            format!(
                "Select two solutions from those provided above and generate one completely new solution from them. \
                 The new solution must contain exactly {n} values; {bounds}."
            ),
            OUTPUT_FORMAT.to_string(),
        )
    } else {
        (
            format!(
                "Select two solutions from those provided above and generate {count} completely new solutions from them. \
                 Each new solution must contain exactly {n} values; {bounds}."
            ),
            OUTPUT_FORMAT_BATCH.to_string(),
        )
    };
    let sections = PromptSections {
        task_description: TASK_DESCRIPTION.to_string(),
        input_information,
        operational_steps,
        output_format,
    };
    let rendered = [
        sections.task_description.as_str(),
        sections.input_information.as_str(),
        sections.operational_steps.as_str(),
        sections.output_format.as_str(),
    ]
    .join("\n\n");
    let meta = PromptMeta {
        pool_digest: prompt_hash(&sections.input_information),
        ..PromptMeta::default()
    };
    Ok(PromptBundle {
        sections,
        rendered,
        meta,
    })
}

/// Single-solution prompt; feasible solutions are listed first.
pub fn build_prompt(
    feasible: &[Solution],
    infeasible: &[Solution],
    lower: &[f64],
    upper: &[f64],
    precision: usize,
) -> Result<PromptBundle, PromptError> {
    build_prompt_for(feasible, infeasible, lower, upper, precision, 1)
}

/// One solution line read back out of a rendered prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSolution {
    pub decs: Vec<f64>,
    pub objs: Vec<f64>,
    pub cv: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptFormatError {
    #[error("prompt lacks the `{0}` header")]
    MissingHeader(&'static str),
    #[error("malformed solution line: {0}")]
    BadLine(String),
    #[error("prompt lists {0} solutions, need at least two")]
    TooFewSolutions(usize),
}

fn parse_bracketed(s: &str) -> Option<(Vec<f64>, &str)> {
    let s = s.trim_start().strip_prefix('[')?;
    let end = s.find(']')?;
    let values = s[..end]
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()?;
    Some((values, &s[end + 1..]))
}

fn parse_line(line: &str) -> Option<PromptSolution> {
    let rest = line.strip_prefix("decs:")?;
    let (decs, rest) = parse_bracketed(rest)?;
    let rest = rest.trim_start().strip_prefix(',')?.trim_start().strip_prefix("objs:")?;
    let (objs, rest) = parse_bracketed(rest)?;
    let rest = rest.trim_start().strip_prefix(',')?.trim_start().strip_prefix("CV:")?;
    let cv = rest.trim().parse::<f64>().ok()?;
    Some(PromptSolution { decs, objs, cv })
}

/// Reads the solution lines of a canonical prompt, in order.
pub fn parse_prompt_solutions(prompt: &str) -> Result<Vec<PromptSolution>, PromptFormatError> {
    for header in ["Feasible solutions:", "Infeasible solutions:"] {
        if !prompt.lines().any(|l| l.trim() == header) {
            return Err(PromptFormatError::MissingHeader(header));
        }
    }
    let mut out = Vec::new();
    for line in prompt.lines().map(str::trim).filter(|l| l.starts_with("decs:")) {
        out.push(parse_line(line).ok_or_else(|| PromptFormatError::BadLine(line.to_string()))?);
    }
    if out.len() < 2 {
        return Err(PromptFormatError::TooFewSolutions(out.len()));
    }
    Ok(out)
}
