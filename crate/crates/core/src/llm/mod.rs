//! LLM-assisted offspring generation: prompt, parsing, backends and ledger.

pub mod backend;
pub mod generate;
pub mod ledger;
pub mod live;
pub mod parse;
pub mod prompt;

pub use backend::{BackendError, Completion, LlmBackend, LlmCall, OracleBackend, ReplayBackend, SurrogateBackend};
pub use generate::{llm_generate, GenerateContext, LlmError, LlmOffspring, LlmSettings};
pub use ledger::{ledger_load, Ledger, LedgerRecord, LoadedLedger, Outcome};
pub use live::{HttpTransport, LiveBackend, LiveConfig};
pub use parse::{parse_response, ParseError, ParsedResponse};
pub use prompt::{build_prompt, format_significant, PromptBundle, PROMPT_VERSION};
