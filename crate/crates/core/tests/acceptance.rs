//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p cmoforge-core --test acceptance` runs everything;
//! append `-- --calibrate` to recompute the AC-4 IGD threshold instead.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cmoforge_core::engine::{run, EngineConfig, MetricsCadence, MetricsSettings};
use cmoforge_core::llm::backend::{BackendError, Completion, LlmBackend, LlmCall};
use cmoforge_core::llm::{
    llm_generate, parse_response, GenerateContext, Ledger, LlmSettings, OracleBackend, ParseError, ReplayBackend,
    SurrogateBackend,
};
use cmoforge_core::metrics::{hypervolume_points, igd, igd_points, MonteCarlo};
use cmoforge_core::model::{constraint_violation, pareto_dominates, Provenance, Solution};
use cmoforge_core::operators::OperatorParams;
use cmoforge_core::problems::{
    cpf_preimage, feasible_ratio_estimate, make_problem, sample_cpf, tric6_preimage, type1_bands, TricId,
};
use cmoforge_core::report::{history_csv, population_csv};
use cmoforge_core::stats::{friedman_ranks, wilcoxon_rank_sum, ComparisonCell, Direction, Mark, ResultsTable};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Median final IGD of 30 pure-CCMO runs on TRIC2 (n=5), seeds 1000..1029,
/// times 1.2. Regenerate with `--calibrate`.
const AC4_IGD_THRESHOLD: f64 = 4.996_576_012_043_693e-3;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    // NaN (no feasible member) counts as the worst value
    for x in &mut v {
        if x.is_nan() {
            *x = f64::INFINITY;
        }
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `f(seed)` on one thread per seed.
fn par_seeds<T: Send>(seeds: impl IntoIterator<Item = u64>, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let seeds: Vec<u64> = seeds.into_iter().collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = seeds.iter().map(|&seed| s.spawn(move || f(seed))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

// ---------------------------------------------------------------- AC-1

fn brute_force_cv(g: &[f64], h: &[f64], delta: f64) -> f64 {
    let mut total = 0.0;
    for &gi in g {
        if gi > 0.0 {
            total += gi;
        }
    }
    for &hj in h {
        let excess = hj.abs() - delta;
        if excess > 0.0 {
            total += excess;
        }
    }
    total
}

fn ac1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..1000 {
        let q = rng.random_range(0..6);
        let l = rng.random_range(0..6);
        let delta = [0.0, 1e-4, rng.random_range(0.0..0.5)][case % 3];
        let pick = |rng: &mut ChaCha8Rng| match rng.random_range(0..6) {
            0 => 0.0,
            1 => delta,
            2 => -delta,
            _ => rng.random_range(-2.0..2.0),
        };
        let g: Vec<f64> = (0..q).map(|_| pick(&mut rng)).collect();
        let h: Vec<f64> = (0..l).map(|_| pick(&mut rng)).collect();
        let cons: Vec<f64> = g.iter().chain(&h).copied().collect();
        let got = constraint_violation(&cons, q, delta).map_err(|e| format!("case {case}: {e}"))?;
        let want = brute_force_cv(&g, &h, delta);
        ensure(got.to_bits() == want.to_bits(), || format!("case {case}: {got} != {want}"))?;
    }
    Ok("1000 tuples bit-identical".into())
}

// ---------------------------------------------------------------- AC-2

/// Uniform samples over [0, r]; returns (estimate, standard error).
fn mc_oracle(points: &[Vec<f64>], r: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let volume: f64 = r.iter().product();
    let mut z = vec![0.0; r.len()];
    let mut hits = 0u64;
    for _ in 0..samples {
        for (zj, rj) in z.iter_mut().zip(r) {
            *zj = rng.random_range(0.0..*rj);
        }
        if points.iter().any(|p| p.iter().zip(&z).all(|(a, b)| a <= b)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    (frac * volume, volume * (frac * (1.0 - frac) / samples as f64).sqrt())
}

fn ac2() -> Check {
    let exact = |pts: &[Vec<f64>], r: &[f64]| {
        let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        hypervolume_points(&refs, r, MonteCarlo::default()).map(|e| e.value).map_err(|e| e.to_string())
    };
    let worked = exact(&[vec![0.25, 0.75], vec![0.75, 0.25]], &[1.0, 1.0])?;
    ensure(worked == 0.3125, || format!("two-point example gave {worked}"))?;

    let results = par_seeds(0..100u64, |case| -> Result<f64, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + case);
        let m = if case % 2 == 0 { 2 } else { 3 };
        let k = rng.random_range(1..=15);
        let pts: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..1.2)).collect())
            .collect();
        let r = vec![1.1; m];
        let got = exact(&pts, &r)?;
        let (est, se) = mc_oracle(&pts, &r, 1_000_000, &mut rng);
        let z = if se > 0.0 { (got - est).abs() / se } else { (got - est).abs() * f64::INFINITY };
        if !(z <= 3.0) && got != est {
            return Err(format!("front {case} (m={m}, k={k}): exact {got} vs MC {est} +- {se}"));
        }
        Ok(if se > 0.0 { z } else { 0.0 })
    });
    let mut worst: f64 = 0.0;
    for r in results {
        worst = worst.max(r?);
    }
    Ok(format!("0.3125 exact; 100 fronts within 3 sigma (max |z| = {worst:.2})"))
}

// ---------------------------------------------------------------- AC-3

fn feasible(objs: Vec<f64>) -> Solution {
    Solution::from_record(vec![0.0], objs, 0.0, Provenance::Init)
}

fn ac3() -> Check {
    let refs = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let same: Vec<Solution> = refs.iter().cloned().map(feasible).collect();
    let zero = igd(&refs, &same).map_err(|e| e.to_string())?;
    ensure(zero.abs() <= 1e-12, || format!("identical sets gave {zero}"))?;
    let half = igd(&refs, &[feasible(vec![0.0, 1.0])]).map_err(|e| e.to_string())?;
    ensure((half - 2f64.sqrt() / 2.0).abs() <= 1e-12, || format!("one-point example gave {half}"))?;
    let infeasible = Solution::from_record(vec![0.0], vec![0.0, 1.0], 0.5, Provenance::Init);
    let nan = igd(&refs, &[infeasible]).map_err(|e| e.to_string())?;
    ensure(nan.is_nan(), || format!("no feasible member gave {nan}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..1000 {
        let m = rng.random_range(2..=4);
        let mut reference: Vec<Vec<f64>> = (0..rng.random_range(1..30))
            .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let mut pop: Vec<Vec<f64>> = (0..rng.random_range(1..30))
            .map(|_| (0..m).map(|_| rng.random_range(-0.5..1.5)).collect())
            .collect();
        let score = |reference: &[Vec<f64>], pop: &[Vec<f64>]| {
            let p: Vec<&[f64]> = pop.iter().map(Vec::as_slice).collect();
            igd_points(reference, &p).expect("dimensions agree")
        };
        let base = score(&reference, &pop);

        // a superset can only shrink each nearest distance
        let mut grown = pop.clone();
        grown.push((0..m).map(|_| rng.random_range(-0.5..1.5)).collect());
        let after = score(&reference, &grown);
        ensure(after <= base, || format!("case {case}: adding a member raised IGD {base} -> {after}"))?;

        pop.shuffle(&mut rng);
        reference.shuffle(&mut rng);
        let shuffled = score(&reference, &pop);
        ensure((shuffled - base).abs() <= 1e-12 * base.max(1.0), || {
            format!("case {case}: permutation changed IGD {base} -> {shuffled}")
        })?;
    }
    Ok("worked examples to 1e-12; 1000 fuzz cases".into())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- AC-4

fn baseline_config(seed: u64, fe_max: u64) -> EngineConfig {
    EngineConfig {
        population_size: 100,
        fe_max,
        llm_offspring_fraction: 0.0,
        seed,
        metrics: MetricsSettings {
            cadence: MetricsCadence::Final,
            ..MetricsSettings::default()
        },
        ..EngineConfig::default()
    }
}

/// (feasible count, final IGD) of one pure-CCMO run on TRIC2, n = 5.
fn tric2_baseline(seed: u64) -> (usize, f64) {
    let problem = make_problem(TricId::Tric2, 5).expect("valid dimension");
    let result = run(&problem, &baseline_config(seed, 10_000), None, &mut |_| {}).expect("run completes");
    let front = sample_cpf(&problem, 1000).expect("front");
    let value = igd(&front, result.population.members()).expect("dimensions agree");
    (result.population.feasible_count(), value)
}

fn calibrate_ac4() {
    let igds: Vec<f64> = par_seeds(1000..1030, tric2_baseline).into_iter().map(|(_, v)| v).collect();
    let med = median(igds.clone());
    println!("calibration IGDs: {igds:?}");
    println!("median {med:e}; threshold (x1.2) {:e}", med * 1.2);
}

fn ac4() -> Check {
    ensure(AC4_IGD_THRESHOLD.is_finite(), || "threshold not calibrated".into())?;
    let runs = par_seeds(0..10, tric2_baseline);
    for (seed, (count, _)) in runs.iter().enumerate() {
        ensure(*count >= 1, || format!("seed {seed} ended without a feasible solution"))?;
    }
    let med = median(runs.iter().map(|r| r.1).collect());
    ensure(med <= AC4_IGD_THRESHOLD, || format!("median IGD {med:e} > threshold {AC4_IGD_THRESHOLD:e}"))?;
    Ok(format!("all 10 runs feasible; median IGD {med:.4e} <= {AC4_IGD_THRESHOLD:.4e}"))
}

// ---------------------------------------------------------------- AC-5

fn ac5() -> Check {
    let n = 10;
    let problem = make_problem(TricId::Tric3, n).expect("valid dimension");
    let front = sample_cpf(&problem, 1000).expect("front");
    let target = cpf_preimage(TricId::Tric3, n, 0.5).ok_or("no pre-image")?;
    // initialization plus five generations of 2N evaluations
    let fe_max = 200 + 5 * 200;

    let gen5 = |seed: u64, backend: Option<&dyn LlmBackend>, fraction: f64| -> Result<(f64, bool), String> {
        let config = EngineConfig {
            llm_offspring_fraction: fraction,
            ..baseline_config(seed, fe_max)
        };
        let mut igd5 = None;
        let mut injected = false;
        let mut observe = |view: &cmoforge_core::engine::GenerationView<'_>| {
            if view.record.generation == 1 {
                injected = view
                    .pop1
                    .members()
                    .iter()
                    .any(|s| s.provenance() == Provenance::Llm && s.decs() == target.as_slice());
            }
            if view.record.generation == 5 {
                igd5 = Some(igd(&front, view.pop1.members()).expect("dimensions agree"));
            }
        };
        run(&problem, &config, backend, &mut observe).map_err(|e| e.to_string())?;
        Ok((igd5.ok_or("run stopped before generation 5")?, injected))
    };

    let oracle = OracleBackend::new(target.clone());
    let with = par_seeds(0..10, |seed| gen5(seed, Some(&oracle), 0.05));
    let without = par_seeds(0..10, |seed| gen5(seed, None, 0.0));
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (seed, (w, wo)) in with.into_iter().zip(without).enumerate() {
        let (igd_llm, injected) = w?;
        ensure(injected, || format!("seed {seed}: injected pre-image missing from pop1 after generation 1"))?;
        a.push(igd_llm);
        b.push(wo?.0);
    }
    let (ma, mb) = (median(a), median(b));
    ensure(ma <= mb, || format!("median IGD at generation 5: oracle {ma:e} > baseline {mb:e}"))?;
    Ok(format!("injected survives in 10/10; gen-5 median IGD {ma:.4e} <= {mb:.4e}"))
}

// ---------------------------------------------------------------- AC-6

fn ac6() -> Check {
    let problem = make_problem(TricId::Tric1, 10).expect("valid dimension");
    let config = EngineConfig {
        fe_max: 3000,
        seed: 6,
        ..EngineConfig::default()
    };
    let recorder = ReplayBackend::from_records(&[], "ac6").with_fallback(Box::new(SurrogateBackend::new(17)));
    let recorded = run(&problem, &config, Some(&recorder), &mut |_| {}).map_err(|e| e.to_string())?;
    ensure(!recorded.ledger.is_empty(), || "recording made no calls".into())?;
    let (n, m) = (problem.n(), problem.m());
    let pop_a = population_csv(recorded.population.members(), n, m);
    let hist_a = history_csv(&recorded.history);

    for in_flight in [1, 4] {
        let replay = ReplayBackend::from_records(&recorded.ledger, "ac6");
        let config = EngineConfig {
            llm: LlmSettings {
                in_flight,
                ..config.llm
            },
            ..config.clone()
        };
        let replayed = run(&problem, &config, Some(&replay), &mut |_| {}).map_err(|e| e.to_string())?;
        ensure(population_csv(replayed.population.members(), n, m) == pop_a, || {
            format!("final population differs on replay (in_flight {in_flight})")
        })?;
        ensure(history_csv(&replayed.history) == hist_a, || format!("history differs on replay (in_flight {in_flight})"))?;
        ensure(replayed.manifest.live_calls == 0, || "replay reached a live service".into())?;
    }
    Ok(format!("{} recorded calls; CSVs byte-identical on replay", recorded.ledger.len()))
}

// ---------------------------------------------------------------- AC-7

struct AlwaysFails;

impl LlmBackend for AlwaysFails {
    fn complete(&self, _: &LlmCall<'_>) -> Result<Completion, BackendError> {
        Err(BackendError::Transport("connection refused".into()))
    }
    fn identity(&self) -> String {
        "always-fails".into()
    }
}

fn ac7() -> Check {
    let (lo, hi) = (vec![0.0; 3], vec![1.0; 3]);
    let v = [0.1, 0.2, 0.3];
    let good: [(&str, [f64; 3], bool); 20] = [
        ("<start>0.1, 0.2, 0.3<end>", v, false),
        ("<start>0.1 0.2 0.3<end>", v, false),
        ("<start>0.1,0.2,0.3<end>", v, false),
        ("<start>[0.1, 0.2, 0.3]<end>", v, false),
        ("<start>(0.1, 0.2, 0.3)<end>", v, false),
        ("Here is the new solution: <start>0.1, 0.2, 0.3<end>", v, false),
        ("<start>0.1, 0.2, 0.3<end> It blends the two best points.", v, false),
        ("<start>\n0.1,\n0.2,\n0.3\n<end>", v, false),
        ("<start>\t0.1\t0.2\t0.3\t<end>", v, false),
        ("<start>  0.1 ,  0.2 ,  0.3  <end>", v, false),
        ("<start>1e-1, 2E-1, 3.0e-1<end>", v, false),
        ("<start>+0.1, +0.2, +0.3<end>", v, false),
        ("<start>.1, .2, .3<end>", v, false),
        ("<start>0.1, 0.2, 0.3,<end>", v, false),
        ("Sure!\n\n<start>0.1, 0.2, 0.3<end>\n\nLet me know if you need more.", v, false),
        ("<start>0.1, 0.2, 0.3<end><start>0.9, 0.9, 0.9<end>", v, false),
        ("```\n<start>0.1, 0.2, 0.3<end>\n```", v, false),
        ("<start>[ 0.1 0.2 0.3 ]<end>", v, false),
        ("<start>1.7, 0.2, 0.3<end>", [1.0, 0.2, 0.3], true),
        ("<start>-0.5, 0.2, 2<end>", [0.0, 0.2, 1.0], true),
    ];
    for (i, (text, want, repaired)) in good.iter().enumerate() {
        let got = parse_response(text, &lo, &hi).map_err(|e| format!("good shape {i} {text:?}: {e}"))?;
        ensure(got.decs == want && got.repaired == *repaired, || {
            format!("good shape {i} {text:?}: got {:?} (repaired {})", got.decs, got.repaired)
        })?;
    }

    let bad: [(&str, &str); 10] = [
        ("0.1, 0.2, 0.3", "missing_start_tag"),
        ("", "missing_start_tag"),
        ("<START>0.1, 0.2, 0.3<END>", "missing_start_tag"),
        ("<start>0.1, 0.2, 0.3", "missing_end_tag"),
        ("<start>0.1, 0.2<end>", "wrong_count"),
        ("<start><end>", "wrong_count"),
        ("<start>0.1, 0.2, 0.3, 0.4<end>", "wrong_count"),
        ("<start>0.1, zero, 0.3<end>", "non_numeric"),
        ("<start>0.1; 0.2; 0.3<end>", "non_numeric"),
        ("<start>0.1, inf, 0.3<end>", "non_finite"),
    ];
    for (i, (text, kind)) in bad.iter().enumerate() {
        match parse_response(text, &lo, &hi) {
            Err(e) => ensure(e.kind() == *kind, || format!("malformed shape {i} {text:?}: {} not {kind}", e.kind()))?,
            Ok(p) => return Err(format!("malformed shape {i} {text:?} parsed as {:?}", p.decs)),
        }
    }
    ensure(matches!(parse_response("<start>NaN, 0.2, 0.3<end>", &lo, &hi), Err(ParseError::NonFinite { index: 0 })), || {
        "NaN token not classified as non-finite".into()
    })?;

    let problem = make_problem(TricId::Tric1, 3).expect("valid dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool: Vec<Solution> = (0..10)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            problem.solution_unbudgeted(x, Provenance::Init).expect("finite evaluation")
        })
        .collect();
    let settings = LlmSettings::default();
    let ctx = GenerateContext {
        generation: 1,
        population: "pop1",
        lower: problem.lower(),
        upper: problem.upper(),
    };
    for count in [1, 5, 12] {
        let mut ledger = Ledger::new();
        let out = llm_generate(&pool, count, &AlwaysFails, &settings, &ctx, &OperatorParams::default(), &mut rng, &mut ledger)
            .map_err(|e| e.to_string())?;
        ensure(out.len() == count, || format!("asked for {count}, got {}", out.len()))?;
        ensure(out.iter().all(|o| problem.contains(&o.decs) && o.provenance == Provenance::Fallback), || {
            "fallback offspring out of bounds or mislabelled".into()
        })?;
        let calls = count * (1 + settings.retry_limit as usize);
        ensure(ledger.len() == calls, || format!("{} ledger records, expected {calls}", ledger.len()))?;
    }
    Ok("20/20 shapes recovered; 10/10 malformed classified; fallback fills every slot".into())
}

// ---------------------------------------------------------------- AC-8

/// Two-sided p from enumerating every split of the pooled sample.
fn enumeration_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let rank = |x: f64| {
        let less = pooled.iter().filter(|&&y| y < x).count() as f64;
        let equal = pooled.iter().filter(|&&y| y == x).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = pooled.iter().map(|&x| rank(x)).collect();
    let n1 = a.len();
    let centre = n1 as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..n1].iter().sum::<f64>() - centre).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        total += 1;
        if (w - centre).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn ac8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut compared = 0;
    for n1 in 1..12usize {
        for n2 in 1..=(12 - n1) {
            for trial in 0..4 {
                // coarse values on some trials to force ties
                let levels = if trial % 2 == 0 { 4.0 } else { 1e6 };
                let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| (rng.random_range(0.0..1.0f64) * levels).floor()).collect() };
                let (a, b) = (draw(n1), draw(n2));
                let r = wilcoxon_rank_sum(&a, &b, 0.05, Direction::SmallerIsBetter).map_err(|e| e.to_string())?;
                let want = enumeration_p(&a, &b);
                ensure(r.exact, || format!("{n1}+{n2} did not use the exact distribution"))?;
                ensure((r.p - want).abs() <= 1e-12, || format!("a={a:?} b={b:?}: p {} vs enumeration {want}", r.p))?;
                compared += 1;
            }
        }
    }
    let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0], 0.05, Direction::SmallerIsBetter)
        .map_err(|e| e.to_string())?;
    ensure((r.p - 2.0 / 70.0).abs() <= 1e-12 && r.mark == Mark::Better, || format!("2/70 case gave {r:?}"))?;
    let f = friedman_ranks(&[vec![0.1, 0.2], vec![0.2, 0.3], vec![0.3, 0.1]], Direction::SmallerIsBetter)
        .map_err(|e| e.to_string())?;
    ensure(f.mean_ranks == [1.5, 2.5, 2.0], || format!("Friedman ranks {:?}", f.mean_ranks))?;
    Ok(format!("{compared} samples match enumeration; p = 2/70; ranks (1.5, 2.5, 2.0)"))
}

// ---------------------------------------------------------------- AC-9

fn ac9() -> Check {
    let cell = ComparisonCell {
        mean: 0.73863,
        std: 0.0372,
        mark: Some(Mark::Similar),
        is_nan: false,
        valid_runs: 30,
    };
    let table = ResultsTable {
        metric: "IGD".into(),
        problems: vec!["P1".into(), "P2".into()],
        algorithms: vec!["A".into(), "Base".into()],
        baseline: 1,
        direction: Direction::SmallerIsBetter,
        cells: vec![
            vec![cell.clone(), ComparisonCell::from_samples(&[0.7, 0.8], None)],
            vec![ComparisonCell::from_samples(&[f64::NAN; 3], Some(Mark::Worse)), ComparisonCell::from_samples(&[f64::NAN; 3], None)],
        ],
    };
    let csv = table.to_csv();
    let row1 = csv.lines().nth(1).unwrap_or_default();
    ensure(row1.starts_with("P1,7.3863e-1 (3.72e-2) =,"), || format!("row rendered as {row1:?}"))?;
    let row2 = csv.lines().nth(2).unwrap_or_default();
    ensure(row2 == "P2,NaN (NaN) -,NaN (NaN)", || format!("NaN row rendered as {row2:?}"))?;
    let md = table.to_markdown();
    ensure(md.contains("7.3863e-1 (3.72e-2) =") && md.contains("NaN (NaN)"), || format!("markdown:\n{md}"))?;
    Ok("\"7.3863e-1 (3.72e-2) =\" and \"NaN (NaN)\" byte-exact".into())
}

// ---------------------------------------------------------------- AC-10

fn ac10() -> Check {
    // bisect the TRIC1 constraint along f1 to find where it changes sign
    let problem = make_problem(TricId::Tric1, 2).expect("valid dimension");
    let c = |t: f64| problem.raw_evaluate(&[t, 0.5]).cons[0];
    let root = |mut lo: f64, mut hi: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (c(lo) <= 0.0) == (c(mid) <= 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let bands = type1_bands();
    ensure(bands.len() == 5, || format!("{} bands", bands.len()))?;
    for (k, &(a, b)) in bands.iter().enumerate() {
        let k = k as f64;
        let (ra, rb) = (root(k / 5.0, k / 5.0 + 0.05), root(k / 5.0 + 0.05, k / 5.0 + 0.1));
        for (got, want, root) in [(a, k / 5.0 + 1.0 / 60.0, ra), (b, k / 5.0 + 1.0 / 12.0, rb)] {
            ensure((got - want).abs() <= 1e-9 && (root - want).abs() <= 1e-9, || {
                format!("band {k}: endpoint {got}, bisection {root}, analytic {want}")
            })?;
        }
        ensure(c(0.5 * (a + b)) <= 0.0 && c(b + 0.01) > 0.0, || format!("band {k} interior/exterior wrong"))?;
    }

    let tric2 = make_problem(TricId::Tric2, 2).expect("valid dimension");
    let samples = 100_000;
    let ratio = feasible_ratio_estimate(&tric2, samples, &mut ChaCha8Rng::seed_from_u64(10));
    let sigma = (0.1 * 0.9 / samples as f64).sqrt();
    ensure((ratio - 0.1).abs() <= 3.0 * sigma, || format!("TRIC2 feasible ratio {ratio} vs 0.1 +- {}", 3.0 * sigma))?;

    let mut checked = 0;
    for id in TricId::ALL {
        let n = id.min_n().max(5);
        let p = make_problem(id, n).expect("valid dimension");
        let front = sample_cpf(&p, 200).map_err(|e| e.to_string())?;
        ensure(front.len() == 200, || format!("{id}: {} points", front.len()))?;
        for (i, a) in front.iter().enumerate() {
            for b in &front[i + 1..] {
                ensure(!pareto_dominates(a, b) && !pareto_dominates(b, a), || format!("{id}: {a:?} vs {b:?}"))?;
            }
            let x = if id == TricId::Tric6 {
                let r = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                tric6_preimage(n, [a[0] / r, a[1] / r, a[2] / r])
            } else {
                cpf_preimage(id, n, a[0])
            };
            if let Some(x) = x {
                let s = p.solution_unbudgeted(x, Provenance::Init).map_err(|e| e.to_string())?;
                ensure(s.is_feasible(), || format!("{id}: pre-image of {a:?} has cv {}", s.cv()))?;
                ensure(dist(s.objs(), a) <= 1e-6, || format!("{id}: pre-image maps to {:?}, not {a:?}", s.objs()))?;
                checked += 1;
            }
        }
    }
    Ok(format!("bands to 1e-9; TRIC2 ratio {ratio:.4}; {checked} pre-images feasible"))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--calibrate") {
        calibrate_ac4();
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 10] = [
        ("AC-1", ac1, Duration::from_secs(1)),
        ("AC-2", ac2, Duration::from_secs(60)),
        ("AC-3", ac3, Duration::from_secs(10)),
        ("AC-4", ac4, Duration::from_secs(120)),
        ("AC-5", ac5, Duration::from_secs(180)),
        ("AC-6", ac6, Duration::from_secs(30)),
        ("AC-7", ac7, Duration::from_secs(5)),
        ("AC-8", ac8, Duration::from_secs(30)),
        ("AC-9", ac9, Duration::from_secs(1)),
        ("AC-10", ac10, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let over = elapsed > limit;
        match (&outcome, over) {
            (Ok(detail), false) => println!("{name} PASS ({:.2}s) {detail}", elapsed.as_secs_f64()),
            (Ok(detail), true) => {
                failed += 1;
                println!("{name} FAIL ({:.2}s > {}s limit) {detail}", elapsed.as_secs_f64(), limit.as_secs());
            }
            (Err(why), _) => {
                failed += 1;
                println!("{name} FAIL ({:.2}s) {why}", elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
