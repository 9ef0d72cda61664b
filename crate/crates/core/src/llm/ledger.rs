//! Append-only JSONL record of every backend call.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Parsed,
    /// Parsed after clamping out-of-bounds values.
    Repaired,
    ParseFailed,
    TransportFailed,
    /// Last failed attempt of a slot; a GA fallback replaced it.
    FallbackUsed,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::Parsed | Outcome::Repaired)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub prompt_hash: String,
    pub prompt: String,
    /// `None` when the transport failed before any text arrived.
    pub response: Option<String>,
    pub outcome: Outcome,
    pub error: Option<String>,
    pub generation: u64,
    pub population: String,
    pub occurrence: u32,
    pub attempt: u32,
    pub model: String,
    pub latency_ms: f64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub timestamps: Timestamps,
}

impl LedgerRecord {
    #[cfg(test)]
    pub(crate) fn example(hash: &str, occurrence: u32, attempt: u32) -> Self {
        Self {
            prompt_hash: hash.into(),
            prompt: "p".into(),
            response: Some("r".into()),
            outcome: Outcome::Parsed,
            error: None,
            generation: 1,
            population: "pop1".into(),
            occurrence,
            attempt,
            model: "test".into(),
            latency_ms: 0.0,
            prompt_tokens: None,
            completion_tokens: None,
            timestamps: Timestamps {
                started_unix_ms: 0,
                finished_unix_ms: 0,
            },
        }
    }
}

/// In-memory ledger with an optional line-per-record sink. All appends go
/// through `&mut self`, which keeps writes serialized.
#[derive(Default)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
    occurrences: HashMap<String, u32>,
    sink: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("records", &self.records.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Some(sink),
            ..Self::default()
        }
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::with_sink(Box::new(io::BufWriter::new(File::create(path)?))))
    }

    pub fn append(&mut self, record: LedgerRecord) -> io::Result<()> {
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&record).map_err(io::Error::other)?;
            sink.write_all(line.as_bytes())?;
            sink.write_all(b"\n")?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.sink.as_mut() {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }

    /// Hands out the next occurrence index for a prompt hash.
    pub fn next_occurrence(&mut self, prompt_hash: &str) -> u32 {
        let slot = self.occurrences.entry(prompt_hash.to_string()).or_insert(0);
        let k = *slot;
        *slot += 1;
        k
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LedgerRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLedger {
    pub records: Vec<LedgerRecord>,
    /// Lines that failed to parse and were skipped.
    pub skipped: usize,
}

pub fn ledger_read<R: BufRead>(reader: R) -> io::Result<LoadedLedger> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("ledger line {} skipped: {e}", i + 1);
                skipped += 1;
            }
        }
    }
    Ok(LoadedLedger { records, skipped })
}

pub fn ledger_load(path: &Path) -> io::Result<LoadedLedger> {
    ledger_read(BufReader::new(File::open(path)?))
}
