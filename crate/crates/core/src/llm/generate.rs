//! Offspring production through an LLM backend, with retry and GA fallback.

use std::io;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, LlmBackend, LlmCall};
use super::ledger::{Ledger, LedgerRecord, Outcome, Timestamps};
use super::parse::{parse_all_responses, parse_response, ParsedResponse};
use super::prompt::{build_prompt_for, prompt_hash, PromptError, DEFAULT_PRECISION};
use crate::model::{Provenance, Solution};
use crate::operators::{sbx_crossover, OperatorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    /// Retries after the first failed attempt of a slot.
    pub retry_limit: u32,
    pub precision: usize,
    /// Concurrent backend calls within one `llm_generate`.
    pub in_flight: usize,
    /// Ask for all offspring in one call instead of one call per offspring.
    pub batch: bool,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            retry_limit: 2,
            precision: DEFAULT_PRECISION,
            in_flight: 1,
            batch: false,
        }
    }
}

/// Where in the run the calls happen, plus the box the answers must fit.
#[derive(Debug, Clone, Copy)]
pub struct GenerateContext<'a> {
    pub generation: u64,
    pub population: &'a str,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmOffspring {
    pub decs: Vec<f64>,
    pub provenance: Provenance,
    pub repaired: bool,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM input pool needs at least two solutions, got {0}")]
    PoolTooSmall(usize),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("generation {generation}, {population}: {source}")]
    Backend {
        generation: u64,
        population: String,
        #[source]
        source: BackendError,
    },
    #[error("ledger write failed: {0}")]
    Ledger(#[from] io::Error),
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct SlotResult {
    exchanges: Vec<LedgerRecord>,
    parsed: Option<ParsedResponse>,
    fatal: Option<BackendError>,
}

struct Exchange<'a> {
    backend: &'a dyn LlmBackend,
    prompt: &'a str,
    hash: &'a str,
    ctx: &'a GenerateContext<'a>,
    model: &'a str,
}

impl Exchange<'_> {
    /// One backend call, returning the ledger record (outcome unset for
    /// successes is filled by the caller) and the raw result.
    fn call(&self, occurrence: u32, attempt: u32) -> (LedgerRecord, Result<String, BackendError>) {
        let started = now_ms();
        let clock = Instant::now();
        let result = self.backend.complete(&LlmCall {
            prompt: self.prompt,
            prompt_hash: self.hash,
            occurrence,
            attempt,
        });
        let latency_ms = clock.elapsed().as_secs_f64() * 1e3;
        let (response, tokens, error) = match &result {
            Ok(c) => (Some(c.text.clone()), (c.prompt_tokens, c.completion_tokens), None),
            Err(e) => (None, (None, None), Some(format!("transport_failed: {e}"))),
        };
        let record = LedgerRecord {
            prompt_hash: self.hash.to_string(),
            prompt: self.prompt.to_string(),
            response,
            outcome: Outcome::TransportFailed,
            error,
            generation: self.ctx.generation,
            population: self.ctx.population.to_string(),
            occurrence,
            attempt,
            model: self.model.to_string(),
            latency_ms,
            prompt_tokens: tokens.0,
            completion_tokens: tokens.1,
            timestamps: Timestamps {
                started_unix_ms: started,
                finished_unix_ms: now_ms(),
            },
        };
        (record, result.map(|c| c.text))
    }

    fn run_slot(&self, occurrence: u32, retry_limit: u32) -> SlotResult {
        let mut exchanges = Vec::new();
        for attempt in 0..=retry_limit {
            let (mut record, result) = self.call(occurrence, attempt);
            match result {
                Err(e) if e.is_fatal() => {
                    return SlotResult {
                        exchanges,
                        parsed: None,
                        fatal: Some(e),
                    }
                }
                Err(_) => exchanges.push(record),
                Ok(text) => match parse_response(&text, self.ctx.lower, self.ctx.upper) {
                    Ok(parsed) => {
                        record.outcome = if parsed.repaired { Outcome::Repaired } else { Outcome::Parsed };
                        exchanges.push(record);
                        return SlotResult {
                            exchanges,
                            parsed: Some(parsed),
                            fatal: None,
                        };
                    }
                    Err(pe) => {
                        record.outcome = Outcome::ParseFailed;
                        record.error = Some(format!("parse_failed: {}: {pe}", pe.kind()));
                        exchanges.push(record);
                    }
                },
            }
        }
        if let Some(last) = exchanges.last_mut() {
            last.outcome = Outcome::FallbackUsed;
        }
        SlotResult {
            exchanges,
            parsed: None,
            fatal: None,
        }
    }
}

fn fallback<R: Rng + ?Sized>(pool: &[Solution], ops: &OperatorParams, ctx: &GenerateContext<'_>, rng: &mut R) -> LlmOffspring {
    let a = rng.random_range(0..pool.len());
    let mut b = rng.random_range(0..pool.len() - 1);
    if b >= a {
        b += 1;
    }
    let (child, _) = sbx_crossover(pool[a].decs(), pool[b].decs(), ops, ctx.lower, ctx.upper, rng);
    LlmOffspring {
        decs: child,
        provenance: Provenance::Fallback,
        repaired: false,
    }
}

/// Produces exactly `count` in-bounds offspring from `pool`. Backend and
/// parse failures fall back to SBX over two pool members; only a replay miss
/// escapes as an error.
#[allow(clippy::too_many_arguments)]
pub fn llm_generate<R: Rng + ?Sized>(
    pool: &[Solution],
    count: usize,
    backend: &dyn LlmBackend,
    settings: &LlmSettings,
    ctx: &GenerateContext<'_>,
    operators: &OperatorParams,
    rng: &mut R,
    ledger: &mut Ledger,
) -> Result<Vec<LlmOffspring>, LlmError> {
    if pool.len() < 2 {
        return Err(LlmError::PoolTooSmall(pool.len()));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let (feasible, infeasible): (Vec<Solution>, Vec<Solution>) = pool.iter().cloned().partition(Solution::is_feasible);
    let model = backend.identity();
    if settings.batch {
        return generate_batched(pool, count, backend, settings, ctx, operators, rng, ledger, (&feasible, &infeasible), &model);
    }

    let bundle = build_prompt_for(&feasible, &infeasible, ctx.lower, ctx.upper, settings.precision, 1)?;
    let hash = bundle.hash();
    let exchange = Exchange {
        backend,
        prompt: &bundle.rendered,
        hash: &hash,
        ctx,
        model: &model,
    };
    let occurrences: Vec<u32> = (0..count).map(|_| ledger.next_occurrence(&hash)).collect();
    let mut out = Vec::with_capacity(count);
    for chunk in occurrences.chunks(settings.in_flight.max(1)) {
        let results: Vec<SlotResult> = if chunk.len() == 1 {
            vec![exchange.run_slot(chunk[0], settings.retry_limit)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&occ| {
                        let exchange = &exchange;
                        s.spawn(move || exchange.run_slot(occ, settings.retry_limit))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("LLM worker panicked")).collect()
            })
        };
        for slot in results {
            for record in slot.exchanges {
                ledger.append(record)?;
            }
            if let Some(source) = slot.fatal {
                return Err(LlmError::Backend {
                    generation: ctx.generation,
                    population: ctx.population.to_string(),
                    source,
                });
            }
            out.push(match slot.parsed {
                Some(p) => LlmOffspring {
                    decs: p.decs,
                    provenance: Provenance::Llm,
                    repaired: p.repaired,
                },
                None => fallback(pool, operators, ctx, rng),
            });
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn generate_batched<R: Rng + ?Sized>(
    pool: &[Solution],
    count: usize,
    backend: &dyn LlmBackend,
    settings: &LlmSettings,
    ctx: &GenerateContext<'_>,
    operators: &OperatorParams,
    rng: &mut R,
    ledger: &mut Ledger,
    (feasible, infeasible): (&[Solution], &[Solution]),
    model: &str,
) -> Result<Vec<LlmOffspring>, LlmError> {
    let mut out: Vec<LlmOffspring> = Vec::with_capacity(count);
    let mut last_failed = false;
    // held back one step so the final failure can still be relabelled
    let mut pending: Option<LedgerRecord> = None;
    for attempt in 0..=settings.retry_limit {
        let remaining = count - out.len();
        if remaining == 0 {
            break;
        }
        let bundle = build_prompt_for(feasible, infeasible, ctx.lower, ctx.upper, settings.precision, remaining)?;
        let hash = prompt_hash(&bundle.rendered);
        let occurrence = ledger.next_occurrence(&hash);
        let exchange = Exchange {
            backend,
            prompt: &bundle.rendered,
            hash: &hash,
            ctx,
            model,
        };
        let (mut record, result) = exchange.call(occurrence, attempt);
        match result {
            Err(source) if source.is_fatal() => {
                if let Some(r) = pending.take() {
                    ledger.append(r)?;
                }
                return Err(LlmError::Backend {
                    generation: ctx.generation,
                    population: ctx.population.to_string(),
                    source,
                })
            }
            Err(_) => last_failed = true,
            Ok(text) => {
                let blocks = parse_all_responses(&text, ctx.lower, ctx.upper);
                let first_error = blocks.iter().find_map(|b| b.as_ref().err().cloned());
                let good: Vec<ParsedResponse> = blocks.into_iter().filter_map(Result::ok).take(remaining).collect();
                if good.is_empty() {
                    let pe = first_error.expect("no block parsed");
                    record.outcome = Outcome::ParseFailed;
                    record.error = Some(format!("parse_failed: {}: {pe}", pe.kind()));
                    last_failed = true;
                } else {
                    record.outcome = if good.iter().any(|p| p.repaired) { Outcome::Repaired } else { Outcome::Parsed };
                    if good.len() < remaining {
                        record.error = Some(format!("short by {}", remaining - good.len()));
                    }
                    last_failed = false;
                    out.extend(good.into_iter().map(|p| LlmOffspring {
                        decs: p.decs,
                        provenance: Provenance::Llm,
                        repaired: p.repaired,
                    }));
                }
            }
        }
        if let Some(r) = pending.replace(record) {
            ledger.append(r)?;
        }
    }
    if let Some(mut r) = pending {
        if out.len() < count && last_failed {
            r.outcome = Outcome::FallbackUsed;
        }
        ledger.append(r)?;
    }
    while out.len() < count {
        out.push(fallback(pool, operators, ctx, rng));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::backend::{Completion, OracleBackend, SurrogateBackend};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicU64, Ordering};

    struct Garbage(AtomicU64);

    impl LlmBackend for Garbage {
        fn complete(&self, _c: &LlmCall<'_>) -> Result<Completion, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Completion::text("I cannot help with that."))
        }
        fn identity(&self) -> String {
            "garbage".into()
        }
    }

    struct Down;

    impl LlmBackend for Down {
        fn complete(&self, _c: &LlmCall<'_>) -> Result<Completion, BackendError> {
            Err(BackendError::Transport("connection refused".into()))
        }
        fn identity(&self) -> String {
            "down".into()
        }
    }

    const LO: [f64; 3] = [0.0; 3];
    const HI: [f64; 3] = [1.0; 3];

    fn ctx() -> GenerateContext<'static> {
        GenerateContext { generation: 3, population: "pop1", lower: &LO, upper: &HI }
    }

    fn pool(k: usize) -> Vec<Solution> {
        (0..k)
            .map(|i| {
                let t = i as f64 / k as f64;
                Solution::from_record(vec![t, 1.0 - t, 0.5], vec![t, 1.0 - t], (i % 3) as f64 * 0.1, Provenance::Init)
            })
            .collect()
    }

    fn run(backend: &dyn LlmBackend, settings: LlmSettings, count: usize, ledger: &mut Ledger) -> Vec<LlmOffspring> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        llm_generate(&pool(10), count, backend, &settings, &ctx(), &OperatorParams::default(), &mut rng, ledger).unwrap()
    }

    #[test]
    fn healthy_backend() {
        let mut ledger = Ledger::new();
        let out = run(&SurrogateBackend::new(0), LlmSettings::default(), 5, &mut ledger);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|o| o.provenance == Provenance::Llm));
        assert_eq!(ledger.len(), 5);
        assert!(ledger.records().iter().all(|r| r.outcome == Outcome::Parsed));
        let occ: Vec<u32> = ledger.records().iter().map(|r| r.occurrence).collect();
        assert_eq!(occ, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn garbage_backend_retries_then_falls_back() {
        let mut ledger = Ledger::new();
        let g = Garbage(AtomicU64::new(0));
        let out = run(&g, LlmSettings::default(), 5, &mut ledger);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|o| o.provenance == Provenance::Fallback));
        assert_eq!(ledger.len(), 15);
        assert_eq!(g.0.load(Ordering::SeqCst), 15);
        let fallbacks = ledger.records().iter().filter(|r| r.outcome == Outcome::FallbackUsed).count();
        assert_eq!(fallbacks, 5);
        for r in ledger.records() {
            assert!(r.error.as_deref().unwrap().contains("missing_start_tag"));
        }
    }

    #[test]
    fn transport_failures_count_as_attempts() {
        let mut ledger = Ledger::new();
        let out = run(&Down, LlmSettings { retry_limit: 1, ..Default::default() }, 2, &mut ledger);
        assert_eq!(out.len(), 2);
        assert_eq!(ledger.len(), 4);
        assert_eq!(ledger.records()[0].outcome, Outcome::TransportFailed);
        assert_eq!(ledger.records()[1].outcome, Outcome::FallbackUsed);
        assert!(ledger.records()[1].response.is_none());
    }

    #[test]
    fn oracle_clamp_is_repaired() {
        let mut ledger = Ledger::new();
        let out = run(&OracleBackend::new(vec![2.0, 0.5, -1.0]), LlmSettings::default(), 1, &mut ledger);
        assert_eq!(out[0].decs, vec![1.0, 0.5, 0.0]);
        assert!(out[0].repaired);
        assert_eq!(ledger.records()[0].outcome, Outcome::Repaired);
    }

    #[test]
    fn concurrency_does_not_change_results() {
        let mut a = Ledger::new();
        let mut b = Ledger::new();
        let g = Garbage(AtomicU64::new(0));
        let seq = run(&g, LlmSettings::default(), 7, &mut a);
        let par = run(&g, LlmSettings { in_flight: 4, ..Default::default() }, 7, &mut b);
        assert_eq!(seq, par);
        let key = |l: &Ledger| l.records().iter().map(|r| (r.occurrence, r.attempt, r.outcome)).collect::<Vec<_>>();
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn batch_mode_uses_one_call() {
        let mut ledger = Ledger::new();
        let out = run(&SurrogateBackend::new(2), LlmSettings { batch: true, ..Default::default() }, 4, &mut ledger);
        assert_eq!(out.len(), 4);
        assert_eq!(ledger.len(), 1);
        assert!(ledger.records()[0].prompt.contains("generate 4 completely new solutions"));
        let mut ledger = Ledger::new();
        let out = run(&Down, LlmSettings { batch: true, ..Default::default() }, 4, &mut ledger);
        assert_eq!(out.len(), 4);
        assert_eq!(ledger.len(), 3);
        assert_eq!(ledger.records()[2].outcome, Outcome::FallbackUsed);
    }

    #[test]
    fn replay_miss_is_fatal() {
        let replay = crate::llm::backend::ReplayBackend::from_records(std::iter::empty(), "empty");
        let mut ledger = Ledger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = llm_generate(&pool(4), 1, &replay, &LlmSettings::default(), &ctx(), &OperatorParams::default(), &mut rng, &mut ledger)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("generation 3") && msg.contains("pop1"), "{msg}");
    }

    #[test]
    fn small_pool_rejected() {
        let mut ledger = Ledger::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = llm_generate(&pool(1), 1, &Down, &LlmSettings::default(), &ctx(), &OperatorParams::default(), &mut rng, &mut ledger);
        assert!(matches!(r, Err(LlmError::PoolTooSmall(1))));
    }

    proptest! {
        #[test]
        fn total_function(count in 1usize..8, which in 0usize..3, seed in any::<u64>()) {
            let backends: [Box<dyn LlmBackend>; 3] = [
                Box::new(Down),
                Box::new(Garbage(AtomicU64::new(0))),
                Box::new(OracleBackend::new(vec![5.0, -3.0, 0.2])),
            ];
            let mut ledger = Ledger::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = llm_generate(&pool(6), count, backends[which].as_ref(), &LlmSettings::default(), &ctx(),
                                   &OperatorParams::default(), &mut rng, &mut ledger).unwrap();
            prop_assert_eq!(out.len(), count);
            for o in &out {
                prop_assert!(o.decs.iter().zip(LO.iter().zip(&HI)).all(|(v, (l, h))| v >= l && v <= h));
            }
        }
    }
}
