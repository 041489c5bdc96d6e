//! Judge-based story evaluation: builds the grading prompt, extracts
//! structured grammar/creativity/consistency/plot scores from any
//! OpenAI-compatible chat-completions endpoint via function calling,
//! aggregates them, and fits score-vs-log-loss lines. A bundled local mock
//! judge makes the whole pipeline runnable offline.

pub mod client;
pub mod fit;
pub mod mock;
pub mod prompt;
pub mod score;

pub use client::{ClientConfig, EvalClient};
pub use fit::{filter_by_loss, fit_power_law, FitError, PowerLawFit};
pub use mock::{MockJudge, MockResponse};
pub use prompt::{build_eval_prompt, EVAL_PROMPT_TEMPLATE};
pub use score::{aggregate_scores, EvalReport, ScoreRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("story is missing the *** separator line")]
    MissingSeparator,

    #[error("{category} score {value} is outside 1..=10")]
    ScoreOutOfRange { category: &'static str, value: i64 },

    #[error("judge reply carried no submit_grades tool call")]
    MissingToolCall,

    #[error("malformed judge response: {0}")]
    MalformedResponse(String),

    #[error("request failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },

    #[error("cannot aggregate an empty record set")]
    EmptyRecords,

    #[error("score record {index} in {path} failed validation: {message}")]
    BadRecord {
        index: usize,
        path: String,
        message: String,
    },

    #[error("http: {0}")]
    Http(#[from] ureq::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
