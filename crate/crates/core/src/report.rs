//! CSV renderings of run artifacts. Floats are written with `Display`, which
//! round-trips exactly.

use std::fmt::Write as _;

use thiserror::Error;

use crate::engine::GenerationRecord;
use crate::model::{Provenance, Solution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("CSV is empty")]
    Empty,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
}

pub fn population_header(n: usize, m: usize) -> String {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    cols.extend((1..=m).map(|j| format!("f{j}")));
    cols.push("cv".into());
    cols.push("provenance".into());
    cols.join(",")
}

pub fn population_csv(members: &[Solution], n: usize, m: usize) -> String {
    let mut out = population_header(n, m);
    out.push('\n');
    for s in members {
        let cv = s.cv();
        let values = s.decs().iter().chain(s.objs()).chain(std::iter::once(&cv));
        for v in values {
            write!(out, "{v},").expect("write to String");
        }
        out.push_str(s.provenance().as_str());
        out.push('\n');
    }
    out
}

/// Reads a population CSV back; returns (n, m, members).
pub fn parse_population_csv(text: &str) -> Result<(usize, usize, Vec<Solution>), ReportError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(ReportError::Empty)?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let m = cols.iter().filter(|c| c.starts_with('f')).count();
    if header != population_header(n, m) {
        return Err(ReportError::BadHeader(header.to_string()));
    }
    let mut members = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| ReportError::BadRow { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + m + 2 {
            return Err(bad(format!("{} fields, expected {}", fields.len(), n + m + 2)));
        }
        let nums = fields[..n + m + 1]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let provenance: Provenance = fields[n + m + 1].parse().map_err(bad)?;
        let cv = nums[n + m];
        if !(cv >= 0.0) {
            return Err(bad(format!("negative cv {cv}")));
        }
        members.push(Solution::from_record(nums[..n].to_vec(), nums[n..n + m].to_vec(), cv, provenance));
    }
    Ok((n, m, members))
}

pub const HISTORY_HEADER: &str = "generation,fe,feasible_count,best_cv,igd,hv";

/// Metrics not computed at a generation are left empty.
pub fn history_csv(records: &[GenerationRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.generation,
            r.fe,
            r.feasible_count,
            r.best_cv,
            opt(r.igd),
            opt(r.hv)
        )
        .expect("write to String");
    }
    out
}
