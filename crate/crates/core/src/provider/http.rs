//! Live backend speaking the common chat-completions / image-generations
//! JSON dialect. Images travel inline as base64 `data:` URLs.

use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use super::{Backend, ChatRequest, ImageGenRequest, Part, ProviderError, ProviderResponse, Role, Usage};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL for chat, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub chat_base_url: String,
    /// Base URL for images; `/images/generations` is appended.
    pub image_base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    cfg: HttpConfig,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| ProviderError::Transport(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { client, cfg })
    }

    fn post(&self, url: &str, body: &Value) -> Result<(u16, Option<Duration>, String), ProviderError> {
        let mut rb = self.client.post(url).json(body);
        if let Some(key) = &self.cfg.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|s| s.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(format!("reading body: {e}")))?;
        Ok((status, retry_after, text))
    }
}

fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

/// Request body for a chat completion. Unset sampling fields are omitted.
pub fn chat_body(req: &ChatRequest) -> Value {
    let mut messages = Vec::with_capacity(req.turns.len() + 1);
    if !req.system_prompt.is_empty() {
        messages.push(json!({"role": "system", "content": req.system_prompt}));
    }
    for turn in &req.turns {
        let role = match turn.role {
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        let content: Vec<Value> = turn
            .parts
            .iter()
            .map(|p| match p {
                Part::Text(t) => json!({"type": "text", "text": t}),
                Part::Image(img) => json!({"type": "image_url", "image_url": {"url": img.data_url()}}),
            })
            .collect();
        messages.push(json!({"role": role, "content": content}));
    }
    let mut body = json!({"model": req.sampling.model_id, "messages": messages});
    if let Some(t) = req.sampling.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(p) = req.sampling.top_p {
        body["top_p"] = json!(p);
    }
    body
}

pub fn image_body(req: &ImageGenRequest) -> Value {
    json!({
        "model": req.model_id,
        "prompt": req.prompt,
        "n": 1,
        "size": format!("{}x{}", req.size.0, req.size.1),
        "response_format": "b64_json",
    })
}

fn error_code(body: &Value) -> Option<&str> {
    body.pointer("/error/code").and_then(Value::as_str)
}

fn error_message(body: &Value, raw: &str) -> String {
    body.pointer("/error/message")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| raw.chars().take(200).collect())
}

fn classify_status(
    status: u16,
    retry_after: Option<Duration>,
    raw: &str,
    policy_error: fn(String) -> ProviderError,
) -> Result<Value, ProviderError> {
    let body: Value = serde_json::from_str(raw).unwrap_or(Value::Null);
    match status {
        200..=299 => {
            if body.is_null() {
                Err(ProviderError::Malformed("response body is not JSON".into()))
            } else {
                Ok(body)
            }
        }
        429 => Err(ProviderError::RateLimited { retry_after }),
        401 | 403 => Err(ProviderError::Auth(error_message(&body, raw))),
        400 if error_code(&body) == Some("content_policy_violation") => {
            Err(policy_error(error_message(&body, raw)))
        }
        400..=499 => Err(ProviderError::Precondition(format!(
            "HTTP {status}: {}",
            error_message(&body, raw)
        ))),
        _ => Err(ProviderError::Transport(format!(
            "HTTP {status}: {}",
            error_message(&body, raw)
        ))),
    }
}

/// Interprets a chat-completions reply.
pub fn parse_chat_response(
    status: u16,
    retry_after: Option<Duration>,
    raw: &str,
) -> Result<ProviderResponse, ProviderError> {
    let body = classify_status(status, retry_after, raw, ProviderError::Refusal)?;
    let choice = body
        .pointer("/choices/0")
        .ok_or_else(|| ProviderError::Malformed("no choices in response".into()))?;
    if let Some(refusal) = choice.pointer("/message/refusal").and_then(Value::as_str) {
        return Err(ProviderError::Refusal(refusal.to_string()));
    }
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(ProviderError::Refusal("content filtered".into()));
    }
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("choice has no text content".into()))?;
    let usage = Usage {
        input_tokens: body.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        output_tokens: body
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        cost_usd: None,
    };
    Ok(ProviderResponse {
        usage,
        ..ProviderResponse::from_text(text)
    })
}

/// Interprets an image-generations reply carrying `b64_json`.
pub fn parse_image_response(
    status: u16,
    retry_after: Option<Duration>,
    raw: &str,
) -> Result<ProviderResponse, ProviderError> {
    let body = classify_status(status, retry_after, raw, ProviderError::SafetyRejection)?;
    let b64 = body
        .pointer("/data/0/b64_json")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("no b64_json image in response".into()))?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| ProviderError::Malformed(format!("image payload is not base64: {e}")))?;
    Ok(ProviderResponse::from_image(bytes))
}

impl Backend for HttpBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let started = Instant::now();
        let url = join(&self.cfg.chat_base_url, "chat/completions");
        let (status, retry_after, raw) = self.post(&url, &chat_body(req))?;
        let mut resp = parse_chat_response(status, retry_after, &raw)?;
        resp.latency = started.elapsed();
        Ok(resp)
    }

    fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
        let started = Instant::now();
        let url = join(&self.cfg.image_base_url, "images/generations");
        let (status, retry_after, raw) = self.post(&url, &image_body(req))?;
        let mut resp = parse_image_response(status, retry_after, &raw)?;
        resp.latency = started.elapsed();
        Ok(resp)
    }

    fn is_live(&self) -> bool {
        true
    }
}
