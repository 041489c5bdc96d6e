//! OpenAI-compatible chat-completions client with function calling.
//!
//! The judge is asked to call `submit_grades(grammar, creativity, consistency,
//! plot)`, all integers 1..=10, all required. Transport failures, 429/5xx
//! statuses, and replies without a usable tool call are retried with
//! exponential backoff; an out-of-range score is a terminal validation error
//! for that record. Batch scoring runs at most `max_in_flight` concurrent
//! requests.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use crate::EvalError;

/// Name of the grading function registered with the judge.
pub const GRADES_FUNCTION: &str = "submit_grades";

#[derive(Clone)]
pub struct ClientConfig {
    /// Endpoint base, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Judge model name, e.g. `gpt-4-1106-preview`.
    pub model: String,
    /// Bearer token; read from `EVAL_API_KEY` by callers, never logged.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4-1106-preview".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }
}

impl std::fmt::Debug for ClientConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

/// Parsed judge reply: the four scores plus any prose the judge wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeReply {
    pub grammar: u8,
    pub creativity: u8,
    pub consistency: u8,
    pub plot: u8,
    pub judge_text: Option<String>,
}

pub struct EvalClient {
    config: ClientConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(JudgeReply),
    Retry(String),
    Fatal(EvalError),
}

impl EvalClient {
    pub fn new(config: ClientConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "tools": [{
                "type": "function",
                "function": {
                    "name": GRADES_FUNCTION,
                    "description": "Submit the four integer grades for the student's completion, each on a scale from 1 to 10.",
                    "parameters": {
                        "type": "object",
                        "properties": {
                            "grammar": {"type": "integer", "minimum": 1, "maximum": 10},
                            "creativity": {"type": "integer", "minimum": 1, "maximum": 10},
                            "consistency": {"type": "integer", "minimum": 1, "maximum": 10},
                            "plot": {"type": "integer", "minimum": 1, "maximum": 10}
                        },
                        "required": ["grammar", "creativity", "consistency", "plot"]
                    }
                }
            }],
            "tool_choice": {"type": "function", "function": {"name": GRADES_FUNCTION}}
        })
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.config.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let response = match request.send_json(self.request_body(prompt)) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Attempt::Retry(format!("http status {code}"));
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Attempt::Fatal(EvalError::MalformedResponse(format!(
                    "judge endpoint returned status {code}"
                )));
            }
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let mut response = response;
        let value: Value = match response.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(format!("unreadable body: {e}")),
        };
        match parse_reply(&value) {
            Ok(reply) => Attempt::Done(reply),
            Err(EvalError::MissingToolCall) => {
                Attempt::Retry("reply carried no tool call".into())
            }
            Err(e) => Attempt::Fatal(e),
        }
    }

    /// Grades one prompt, retrying per the config.
    pub fn request_scores(&self, prompt: &str) -> Result<JudgeReply, EvalError> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff_base * (1 << (attempt - 1)));
            }
            match self.attempt(prompt) {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(reason) => last = reason,
            }
        }
        Err(EvalError::Exhausted {
            attempts: self.config.max_retries + 1,
            last,
        })
    }

    /// Grades many prompts with at most `max_in_flight` concurrent requests;
    /// results come back in input order.
    pub fn score_many(&self, prompts: &[String]) -> Vec<Result<JudgeReply, EvalError>> {
        let results: Mutex<Vec<Option<Result<JudgeReply, EvalError>>>> =
            Mutex::new((0..prompts.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.max(1).min(prompts.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    if index >= prompts.len() {
                        break;
                    }
                    let outcome = self.request_scores(&prompts[index]);
                    results.lock().expect("no panics hold the lock")[index] = Some(outcome);
                });
            }
        });
        results
            .into_inner()
            .expect("scope joined")
            .into_iter()
            .map(|r| r.expect("every index filled"))
            .collect()
    }
}

/// Extracts the graded scores from a chat-completions reply value.
fn parse_reply(value: &Value) -> Result<JudgeReply, EvalError> {
    let message = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| EvalError::MalformedResponse("no choices[0].message".into()))?;
    let judge_text = message
        .get("content")
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let call = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .and_then(|calls| {
            calls.iter().find(|c| {
                c.pointer("/function/name").and_then(Value::as_str) == Some(GRADES_FUNCTION)
            })
        })
        .ok_or(EvalError::MissingToolCall)?;
    let arguments = call
        .pointer("/function/arguments")
        .and_then(Value::as_str)
        .ok_or(EvalError::MissingToolCall)?;
    let parsed: Value =
        serde_json::from_str(arguments).map_err(|_| EvalError::MissingToolCall)?;
    let score = |category: &'static str| -> Result<u8, EvalError> {
        let raw = parsed
            .get(category)
            .and_then(Value::as_i64)
            .ok_or(EvalError::MissingToolCall)?;
        if !(1..=10).contains(&raw) {
            return Err(EvalError::ScoreOutOfRange {
                category,
                value: raw,
            });
        }
        Ok(raw as u8)
    };
    Ok(JudgeReply {
        grammar: score("grammar")?,
        creativity: score("creativity")?,
        consistency: score("consistency")?,
        plot: score("plot")?,
        judge_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply_value(args: &str, content: Option<&str>) -> Value {
        json!({
            "id": "x",
            "choices": [{
                "index": 0,
                "message": {
                    "role": "assistant",
                    "content": content,
                    "tool_calls": [{
                        "id": "call_1",
                        "type": "function",
                        "function": {"name": "submit_grades", "arguments": args}
                    }]
                },
                "finish_reason": "tool_calls"
            }]
        })
    }

    #[test]
    fn parses_well_formed_tool_call() {
        let v = reply_value(
            "{\"grammar\":8,\"creativity\":7,\"consistency\":6,\"plot\":9}",
            Some("Good story."),
        );
        let reply = parse_reply(&v).unwrap();
        assert_eq!(
            (reply.grammar, reply.creativity, reply.consistency, reply.plot),
            (8, 7, 6, 9)
        );
        assert_eq!(reply.judge_text.as_deref(), Some("Good story."));
    }

    #[test]
    fn out_of_range_score_is_fatal_validation() {
        let v = reply_value(
            "{\"grammar\":11,\"creativity\":7,\"consistency\":6,\"plot\":9}",
            None,
        );
        assert!(matches!(
            parse_reply(&v),
            Err(EvalError::ScoreOutOfRange { category: "grammar", value: 11 })
        ));
    }

    #[test]
    fn prose_without_tool_call_is_missing() {
        let v = json!({
            "choices": [{"message": {"role": "assistant", "content": "I think it is nice."}}]
        });
        assert!(matches!(parse_reply(&v), Err(EvalError::MissingToolCall)));
    }

    #[test]
    fn config_debug_redacts_key() {
        let cfg = ClientConfig {
            api_key: Some("sk-secret".into()),
            ..ClientConfig::default()
        };
        let text = format!("{cfg:?}");
        assert!(!text.contains("sk-secret"));
        assert!(text.contains("<redacted>"));
    }
}
