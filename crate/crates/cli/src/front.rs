//! Final feasible objectives against the analytic front, as CSV and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cmoforge_core::problems::cpf_segments;
use cmoforge_core::report::parse_population_csv;

use crate::run::{CliManifest, POPULATION_FILE};

pub const FRONT_CSV: &str = "front.csv";
pub const FRONT_SVG: &str = "front.svg";
const CPF_POINTS: usize = 500;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontOutput {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    pub feasible: usize,
    pub notices: Vec<String>,
}

/// `source,f1,..,fm` rows: the analytic front, then feasible members.
pub fn front_csv(cpf: &[Vec<f64>], population: &[Vec<f64>], m: usize) -> String {
    let mut out = String::from("source");
    for j in 1..=m {
        write!(out, ",f{j}").expect("write to String");
    }
    out.push('\n');
    for (source, points) in [("cpf", cpf), ("population", population)] {
        for p in points {
            out.push_str(source);
            for v in p {
                write!(out, ",{v}").expect("write to String");
            }
            out.push('\n');
        }
    }
    out
}

/// Scatter of `points` over the front polylines (bi-objective only).
pub fn front_svg(title: &str, segments: &[Vec<Vec<f64>>], points: &[Vec<f64>], warning: Option<&str>) -> String {
    let all = segments.iter().flatten().chain(points);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for j in 0..2 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    for j in 0..2 {
        if !(hi[j] > lo[j]) {
            lo[j] = if lo[j].is_finite() { lo[j] - 0.5 } else { 0.0 };
            hi[j] = lo[j] + 1.0;
        }
    }
    let sx = |x: f64| MARGIN + (x - lo[0]) / (hi[0] - lo[0]) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - lo[1]) / (hi[1] - lo[1]) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    writeln!(w, r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#).unwrap();
    let label = |w: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        writeln!(w, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{text}</text>"#).unwrap();
    };
    label(w, x0, y0 + 16.0, "middle", &format!("{:.3}", lo[0]));
    label(w, x1, y0 + 16.0, "middle", &format!("{:.3}", hi[0]));
    label(w, x0 - 6.0, y0, "end", &format!("{:.3}", lo[1]));
    label(w, x0 - 6.0, y1 + 4.0, "end", &format!("{:.3}", hi[1]));
    label(w, WIDTH / 2.0, HEIGHT - 12.0, "middle", "f1");
    label(w, 14.0, HEIGHT / 2.0, "middle", "f2");

    for seg in segments {
        let pts: Vec<String> = seg.iter().map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1]))).collect();
        writeln!(w, r##"<polyline class="cpf" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##, pts.join(" ")).unwrap();
    }
    for p in points {
        writeln!(w, r##"<circle class="population" cx="{:.2}" cy="{:.2}" r="3" fill="#d62728" fill-opacity="0.8"/>"##, sx(p[0]), sy(p[1])).unwrap();
    }
    if let Some(text) = warning {
        writeln!(w, r##"<text class="warning" x="{}" y="44" text-anchor="middle" font-family="sans-serif" font-size="12" fill="#b00">{}</text>"##, WIDTH / 2.0, escape(text)).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `front.csv` (always) and `front.svg` (bi-objective runs) to `out`.
pub fn cmd_front(run_dir: &Path, out: &Path) -> Result<FrontOutput> {
    let manifest = CliManifest::load(run_dir)?;
    let path = run_dir.join(POPULATION_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let (_, m, members) = parse_population_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    let feasible: Vec<Vec<f64>> = members.iter().filter(|s| s.is_feasible()).map(|s| s.objs().to_vec()).collect();
    let segments = cpf_segments(manifest.problem, CPF_POINTS);
    let cpf: Vec<Vec<f64>> = segments.iter().flatten().cloned().collect();

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv = out.join(FRONT_CSV);
    fs::write(&csv, front_csv(&cpf, &feasible, m))?;
    let mut notices = Vec::new();
    let warning = feasible.is_empty().then_some("no feasible solution in the final population");
    if let Some(w) = warning {
        notices.push(w.to_string());
    }
    let svg = if m == 2 {
        let title = format!("{} / {} / run {}", manifest.problem, manifest.algorithm, manifest.run_index);
        let path = out.join(FRONT_SVG);
        fs::write(&path, front_svg(&title, &segments, &feasible, warning))?;
        Some(path)
    } else {
        notices.push(format!("{m} objectives: SVG skipped, CSV only"));
        None
    };
    Ok(FrontOutput {
        csv,
        svg,
        feasible: feasible.len(),
        notices,
    })
}
