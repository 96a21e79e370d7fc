//! Chat-completions client for LLM scoring.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::{EvalResult, EvalSource, Suggestion, SYSTEM_PROMPT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    /// e.g. `http://localhost:8080/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further retry.
    pub backoff_ms: u64,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "http://127.0.0.1:8080/v1".into(),
            model: "deepseek-r1".into(),
            token_env: None,
            timeout_s: 30.0,
            max_retries: 2,
            backoff_ms: 250,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::validation("LLM timeout must be positive"));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(Error::validation("LLM base URL and model must be set"));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::validation(format!("environment variable {var} is not set"))),
        }
    }

    /// Worst-case wall time of one [`evaluate_llm`] call.
    pub fn time_budget(&self) -> Duration {
        let attempts = self.max_retries as f64 + 1.0;
        let backoff: u64 = (0..self.max_retries).map(|k| self.backoff_ms << k.min(16)).sum();
        Duration::from_secs_f64(self.timeout_s * attempts) + Duration::from_millis(backoff)
    }
}

pub fn request_body(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": prompt},
        ],
        "temperature": 0,
    })
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(Error),
}

fn attempt(agent: &ureq::Agent, cfg: &LlmEndpointConfig, token: Option<&str>, body: &Value) -> Attempt {
    let mut req = agent.post(&cfg.endpoint()).header("Content-Type", "application/json");
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    let mut resp = match req.send_json(body) {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    let status = resp.status().as_u16();
    let text = match resp.body_mut().read_to_string() {
        Ok(t) => t,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    match status {
        200..=299 => Attempt::Done(text),
        500..=599 => Attempt::Retry(format!("HTTP {status}")),
        _ => Attempt::Fatal(Error::Transport(format!("HTTP {status}: {text}"))),
    }
}

/// Sends `prompt`, retrying transport failures and 5xx answers with
/// exponential backoff, and parses the verdict.
pub fn evaluate_llm(cfg: &LlmEndpointConfig, prompt: &str) -> Result<EvalResult> {
    cfg.validate()?;
    let token = cfg.token()?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = request_body(&cfg.model, prompt);
    let mut last = String::new();
    for k in 0..=cfg.max_retries {
        if k > 0 {
            std::thread::sleep(Duration::from_millis(cfg.backoff_ms << (k - 1).min(16)));
        }
        match attempt(&agent, cfg, token.as_deref(), &body) {
            Attempt::Done(text) => return parse_response(&text),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry(msg) => {
                log::warn!("LLM attempt {} of {} failed: {msg}", k + 1, cfg.max_retries + 1);
                last = msg;
            }
        }
    }
    Err(Error::Transport(format!(
        "gave up after {} attempts: {last}",
        cfg.max_retries + 1
    )))
}

fn parse_error(raw: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        context: format!("LLM response {raw:?}"),
        message: message.into(),
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions body.
pub fn parse_response(body: &str) -> Result<EvalResult> {
    let v: Value = serde_json::from_str(body).map_err(|e| parse_error(body, e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_error(body, "no choices[0].message.content"))?;
    parse_verdict(content)
}

/// The first fenced block, or the whole text when there is none.
fn fenced_json(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text.trim();
    };
    let rest = &text[open + 3..];
    let rest = rest.find('\n').map_or(rest, |nl| {
        // skip an info string such as `json`
        if rest[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) {
            &rest[nl + 1..]
        } else {
            rest
        }
    });
    rest.find("```").map_or(rest, |close| &rest[..close]).trim()
}

/// Parses the fenced JSON verdict, clamping the score into `[0, 10]`.
pub fn parse_verdict(content: &str) -> Result<EvalResult> {
    #[derive(Deserialize)]
    struct Verdict {
        score: f64,
        #[serde(default)]
        analysis: String,
        #[serde(default)]
        suggestions: Vec<String>,
    }
    let v: Verdict = serde_json::from_str(fenced_json(content)).map_err(|e| parse_error(content, e.to_string()))?;
    if !v.score.is_finite() {
        return Err(parse_error(content, "score is not finite"));
    }
    let score = v.score.clamp(0.0, 10.0);
    let clamped = score != v.score;
    if clamped {
        log::warn!("LLM score {} clamped to {score}", v.score);
    }
    Ok(EvalResult {
        score,
        analysis: v.analysis,
        suggestions: v.suggestions.into_iter().map(Suggestion::from_text).collect(),
        source: EvalSource::Llm,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SuggestionId;

    #[test]
    fn verdict_parsing() {
        let r = parse_verdict("Here you go\n```json\n{\"score\": 6.7, \"analysis\": \"ok\", \"suggestions\": [\"Smooth Acceleration\"]}\n```\n").unwrap();
        assert_eq!(r.score, 6.7);
        assert_eq!(r.suggestion_ids(), vec![SuggestionId::SmoothAcceleration]);
        assert!(!r.clamped);
        let bare = parse_verdict("{\"score\": -2, \"suggestions\": [\"drive better\"]}").unwrap();
        assert_eq!((bare.score, bare.clamped), (0.0, true));
        assert_eq!(bare.suggestion_ids(), vec![SuggestionId::Other]);
        let err = parse_verdict("```json\n{\"score\": \n```").unwrap_err();
        assert!(err.to_string().contains("score"));
    }

    #[test]
    fn budget_counts_every_attempt() {
        let cfg = LlmEndpointConfig {
            timeout_s: 1.0,
            max_retries: 2,
            backoff_ms: 100,
            ..Default::default()
        };
        assert_eq!(cfg.time_budget(), Duration::from_millis(3300));
    }

    #[test]
    fn missing_token_variable_is_a_config_error() {
        let cfg = LlmEndpointConfig {
            token_env: Some("MERGEBENCH_SURELY_UNSET_VAR".into()),
            ..Default::default()
        };
        assert!(matches!(evaluate_llm(&cfg, "x"), Err(Error::Validation(_))));
    }
}
