//! Extraction of decision vectors from model responses.

use thiserror::Error;

pub const START_TAG: &str = "<start>";
pub const END_TAG: &str = "<end>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("response has no <start> tag")]
    MissingStartTag,
    #[error("response has no <end> tag after <start>")]
    MissingEndTag,
    #[error("expected {expected} values, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("token `{0}` is not a number")]
    NonNumeric(String),
    #[error("value {index} is not finite")]
    NonFinite { index: usize },
}

impl ParseError {
    /// Short stable name recorded in the call ledger.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MissingStartTag => "missing_start_tag",
            ParseError::MissingEndTag => "missing_end_tag",
            ParseError::WrongCount { .. } => "wrong_count",
            ParseError::NonNumeric(_) => "non_numeric",
            ParseError::NonFinite { .. } => "non_finite",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub decs: Vec<f64>,
    /// At least one value was clamped into bounds.
    pub repaired: bool,
}

fn tagged_payload(text: &str) -> Result<(&str, &str), ParseError> {
    let start = text.find(START_TAG).ok_or(ParseError::MissingStartTag)?;
    let after = &text[start + START_TAG.len()..];
    let end = after.find(END_TAG).ok_or(ParseError::MissingEndTag)?;
    Ok((&after[..end], &after[end + END_TAG.len()..]))
}

fn parse_payload(payload: &str, lower: &[f64], upper: &[f64]) -> Result<ParsedResponse, ParseError> {
    let mut body = payload.trim();
    // a single enclosing bracket pair is tolerated: <start>[0.1, 0.2]<end>
    for (open, close) in [('[', ']'), ('(', ')')] {
        if body.starts_with(open) && body.ends_with(close) {
            body = body[1..body.len() - 1].trim();
            break;
        }
    }
    let tokens: Vec<&str> = body
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    let n = lower.len();
    if tokens.len() != n {
        return Err(ParseError::WrongCount {
            expected: n,
            found: tokens.len(),
        });
    }
    let mut repaired = false;
    let mut decs = Vec::with_capacity(n);
    for (index, token) in tokens.iter().enumerate() {
        let value: f64 = token
            .parse()
            .map_err(|_| ParseError::NonNumeric((*token).to_string()))?;
        if !value.is_finite() {
            return Err(ParseError::NonFinite { index });
        }
        let clamped = value.clamp(lower[index], upper[index]);
        repaired |= clamped != value;
        decs.push(clamped);
    }
    Ok(ParsedResponse { decs, repaired })
}

/// Reads the vector between the first `<start>` and the following `<end>`.
/// Out-of-bounds values are clamped and the result flagged as repaired.
pub fn parse_response(text: &str, lower: &[f64], upper: &[f64]) -> Result<ParsedResponse, ParseError> {
    let (payload, _) = tagged_payload(text)?;
    parse_payload(payload, lower, upper)
}

/// Every tagged block in order, each parsed independently.
pub fn parse_all_responses(text: &str, lower: &[f64], upper: &[f64]) -> Vec<Result<ParsedResponse, ParseError>> {
    let mut out = Vec::new();
    let mut rest = text;
    loop {
        match tagged_payload(rest) {
            Ok((payload, tail)) => {
                out.push(parse_payload(payload, lower, upper));
                rest = tail;
            }
            Err(e) => {
                if out.is_empty() {
                    out.push(Err(e));
                }
                return out;
            }
        }
    }
}
