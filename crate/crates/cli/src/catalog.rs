//! Text listing of the built-in problem suite.

use std::fmt::Write as _;

use anyhow::Result;
use cmoforge_core::problems::{TricId, TricSpec};

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// One block per problem at dimension `n` (raised to the problem's minimum).
pub fn cmd_list_problems(n: usize) -> Result<String> {
    let mut out = String::new();
    for id in TricId::ALL {
        let spec = TricSpec::new(id, n.max(id.min_n()))?;
        let params: Vec<String> = spec.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "{id}: {}", spec.archetype)?;
        writeln!(out, "  n={} m={} q={} l={}", spec.n, spec.m, spec.q, spec.l)?;
        writeln!(out, "  parameters: {}", params.join(", "))?;
        writeln!(out, "  witness: {}", fmt_vec(&spec.witness))?;
    }
    Ok(out)
}
