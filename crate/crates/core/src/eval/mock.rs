//! A tiny chat-completions server that replays canned responses, for tests
//! and offline demos.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::json;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
    /// Wait this long before answering.
    pub delay: Duration,
}

impl MockResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        MockResponse {
            status: 200,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        MockResponse {
            status,
            body: "{\"error\": \"mock\"}".into(),
            delay: Duration::ZERO,
        }
    }

    /// A completion whose message content is `content`.
    pub fn completion(content: &str) -> Self {
        MockResponse::ok(
            json!({
                "id": "mock-1",
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
            })
            .to_string(),
        )
    }

    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

/// Recorded fixtures.
pub mod fixtures {
    use super::MockResponse;

    pub const SCORE_6_7: &str = "The merge was safe but the acceleration profile was abrupt.\n\
```json\n{\"score\": 6.7, \"analysis\": \"Safe merge with a short gap; acceleration changes were abrupt.\", \
\"suggestions\": [\"Smooth Acceleration\"]}\n```";

    pub const OVER_RANGE: &str = "```json\n{\"score\": 14, \"analysis\": \"Flawless.\", \"suggestions\": []}\n```";

    pub const MALFORMED: &str = "```json\n{\"score\": 7.5, \"analysis\": \"unterminated\n```";

    pub fn score_6_7() -> MockResponse {
        MockResponse::completion(SCORE_6_7)
    }

    pub fn over_range() -> MockResponse {
        MockResponse::completion(OVER_RANGE)
    }

    pub fn malformed() -> MockResponse {
        MockResponse::completion(MALFORMED)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

/// Serves `responses` in order, repeating the last one. Stops on drop.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(responses: Vec<MockResponse>) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::validation("mock server needs at least one response"));
        }
        let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| Error::Transport(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (stop2, req2) = (stop.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let resp = &responses[served.min(responses.len() - 1)];
                served += 1;
                if let Some(r) = handle_one(stream, resp) {
                    req2.lock().expect("mock request log").push(r);
                }
            }
        });
        Ok(MockServer {
            addr,
            stop,
            requests,
            handle: Some(handle),
        })
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().expect("mock request log").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_one(stream: TcpStream, resp: &MockResponse) -> Option<RecordedRequest> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut len = 0usize;
    let mut authorization = None;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).ok()? == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => len = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    std::thread::sleep(resp.delay);
    let mut stream = stream;
    let head = format!(
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        resp.status,
        resp.body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(resp.body.as_bytes());
    let _ = stream.flush();
    Some(RecordedRequest {
        method,
        path,
        authorization,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_llm, EvalSource, LlmEndpointConfig, SuggestionId};

    fn cfg(server: &MockServer) -> LlmEndpointConfig {
        LlmEndpointConfig {
            base_url: server.base_url(),
            timeout_s: 2.0,
            max_retries: 2,
            backoff_ms: 10,
            ..Default::default()
        }
    }

    #[test]
    fn fixture_round_trip() {
        let server = MockServer::start(vec![fixtures::score_6_7()]).unwrap();
        let r = evaluate_llm(&cfg(&server), "prompt text").unwrap();
        assert_eq!(r.score, 6.7);
        assert_eq!(r.source, EvalSource::Llm);
        assert_eq!(r.suggestion_ids(), vec![SuggestionId::SmoothAcceleration]);
        let reqs = server.requests();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].method, "POST");
        assert_eq!(reqs[0].path, "/v1/chat/completions");
        let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
        assert_eq!(body["messages"][1]["content"], "prompt text");
        assert_eq!(body["temperature"], 0);
    }

    #[test]
    fn retries_server_errors() {
        let server = MockServer::start(vec![MockResponse::status(503), fixtures::over_range()]).unwrap();
        let r = evaluate_llm(&cfg(&server), "p").unwrap();
        assert_eq!((r.score, r.clamped), (10.0, true));
        assert_eq!(server.requests().len(), 2);
    }

    #[test]
    fn gives_up_and_reports_transport() {
        let server = MockServer::start(vec![MockResponse::status(500)]).unwrap();
        assert!(matches!(evaluate_llm(&cfg(&server), "p"), Err(Error::Transport(_))));
        assert_eq!(server.requests().len(), 3);
        let server = MockServer::start(vec![MockResponse::status(401)]).unwrap();
        assert!(matches!(evaluate_llm(&cfg(&server), "p"), Err(Error::Transport(_))));
        assert_eq!(server.requests().len(), 1);
    }

    #[test]
    fn malformed_is_a_parse_error() {
        let server = MockServer::start(vec![fixtures::malformed()]).unwrap();
        let err = evaluate_llm(&cfg(&server), "p").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("unterminated"));
    }
}
