//! Bundled local judge for offline runs: a minimal chat-completions server
//! that answers `submit_grades` tool calls deterministically (scores derived
//! from a digest of the request), or replays a scripted response sequence for
//! failure-path testing.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::json;

/// One scripted reply. A drained script falls back to deterministic grading.
#[derive(Debug, Clone)]
pub enum MockResponse {
    /// A proper tool call with these scores.
    Grades {
        grammar: u8,
        creativity: u8,
        consistency: u8,
        plot: u8,
    },
    /// Prose only, no tool call (clients should retry).
    Prose(String),
    /// A raw `arguments` JSON string, e.g. for out-of-range scores.
    RawArguments(String),
    /// An HTTP error status.
    Status(u16),
}

/// In-process judge endpoint on an ephemeral localhost port.
pub struct MockJudge {
    base_url: String,
    shutdown: Arc<AtomicBool>,
    requests: Arc<AtomicUsize>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockJudge {
    /// Starts with deterministic digest-derived grading.
    pub fn start() -> std::io::Result<Self> {
        Self::start_scripted(Vec::new())
    }

    /// Starts with a scripted response sequence, consumed one per request.
    pub fn start_scripted(script: Vec<MockResponse>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0")
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let port = match server.server_addr() {
            tiny_http::ListenAddr::IP(addr) => addr.port(),
            _ => unreachable!("bound to an IP address"),
        };
        let shutdown = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(AtomicUsize::new(0));
        let script = Mutex::new(VecDeque::from(script));
        let thread_shutdown = shutdown.clone();
        let thread_requests = requests.clone();
        let handle = std::thread::spawn(move || {
            while !thread_shutdown.load(Ordering::SeqCst) {
                match server.recv_timeout(Duration::from_millis(25)) {
                    Ok(Some(request)) => {
                        thread_requests.fetch_add(1, Ordering::SeqCst);
                        let next = script.lock().expect("script lock").pop_front();
                        handle_request(request, next);
                    }
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        });
        Ok(Self {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            shutdown,
            requests,
            handle: Some(handle),
        })
    }

    /// Endpoint base, ready to drop into a [`crate::ClientConfig`].
    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockJudge {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_request(mut request: tiny_http::Request, scripted: Option<MockResponse>) {
    let mut body = String::new();
    let _ = request.as_reader().read_to_string(&mut body);
    let response = match scripted {
        Some(MockResponse::Status(code)) => {
            let _ = request.respond(
                tiny_http::Response::from_string("{\"error\":{\"message\":\"scripted failure\"}}")
                    .with_status_code(code),
            );
            return;
        }
        Some(MockResponse::Prose(text)) => chat_reply(json!({
            "role": "assistant",
            "content": text
        })),
        Some(MockResponse::RawArguments(arguments)) => chat_reply(tool_message(
            "Scripted grading.",
            &arguments,
        )),
        Some(MockResponse::Grades {
            grammar,
            creativity,
            consistency,
            plot,
        }) => chat_reply(tool_message(
            "Scripted grading.",
            &format!(
                "{{\"grammar\":{grammar},\"creativity\":{creativity},\"consistency\":{consistency},\"plot\":{plot}}}"
            ),
        )),
        None => {
            let scores = digest_scores(body.as_bytes());
            chat_reply(tool_message(
                "Deterministic mock assessment derived from the submission digest.",
                &format!(
                    "{{\"grammar\":{},\"creativity\":{},\"consistency\":{},\"plot\":{}}}",
                    scores[0], scores[1], scores[2], scores[3]
                ),
            ))
        }
    };
    let payload = response.to_string();
    let _ = request.respond(
        tiny_http::Response::from_string(payload).with_header(
            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                .expect("static header"),
        ),
    );
}

fn tool_message(content: &str, arguments: &str) -> serde_json::Value {
    json!({
        "role": "assistant",
        "content": content,
        "tool_calls": [{
            "id": "call_mock_1",
            "type": "function",
            "function": {"name": "submit_grades", "arguments": arguments}
        }]
    })
}

fn chat_reply(message: serde_json::Value) -> serde_json::Value {
    json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "created": 0,
        "model": "mock-judge",
        "choices": [{
            "index": 0,
            "message": message,
            "finish_reason": "tool_calls"
        }],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
    })
}

/// Four scores in 1..=10 from an FNV-1a digest of the request body.
fn digest_scores(body: &[u8]) -> [u8; 4] {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in body {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut scores = [0u8; 4];
    for (i, s) in scores.iter_mut().enumerate() {
        *s = 1 + ((hash >> (8 * i)) % 10) as u8;
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_scores_are_stable_and_in_range() {
        let a = digest_scores(b"some request body");
        let b = digest_scores(b"some request body");
        assert_eq!(a, b);
        for s in a {
            assert!((1..=10).contains(&s));
        }
        assert_ne!(digest_scores(b"x"), digest_scores(b"y"));
    }
}
