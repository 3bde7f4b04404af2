//! Uniform client over the multimodal chat model and the image generator.
//!
//! A [`Provider`] owns a [`Backend`] (live HTTP, replay, recorder or the
//! scripted fixture backend), validates requests before they leave the
//! process, retries transient failures with exponential backoff and appends
//! one [`CostRecord`] per completed call to its [`CostLedger`].
//!
//! Transient failures (transport errors, rate limits) are absorbed here and
//! never reach the annotation patience counters. Semantic failures
//! (refusals, safety rejections, malformed responses) are returned to the
//! caller, which decides whether they count against patience.

mod digest;
pub mod http;
mod ledger;
pub mod replay;
pub mod scripted;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use digest::Digest;
pub use ledger::{CallKind, CostLedger, CostRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Png,
    Jpeg,
}

impl MediaType {
    pub fn mime(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MediaType::Png => "png",
            MediaType::Jpeg => "jpg",
        }
    }
}

/// A raster image that is known to decode as PNG or JPEG.
///
/// The only constructor decodes the payload, so every attachment that
/// reaches a request satisfies the format invariant.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    media_type: MediaType,
    data: Arc<[u8]>,
    width: u32,
    height: u32,
}

impl ImageAttachment {
    pub fn from_bytes(data: impl Into<Arc<[u8]>>) -> Result<Self, ProviderError> {
        let data: Arc<[u8]> = data.into();
        if data.is_empty() {
            return Err(ProviderError::Precondition("empty image attachment".into()));
        }
        let format = image::guess_format(&data)
            .map_err(|e| ProviderError::Precondition(format!("unrecognized image data: {e}")))?;
        let media_type = match format {
            image::ImageFormat::Png => MediaType::Png,
            image::ImageFormat::Jpeg => MediaType::Jpeg,
            other => {
                return Err(ProviderError::Precondition(format!(
                    "unsupported image format {other:?} (PNG or JPEG required)"
                )))
            }
        };
        let decoded = image::load_from_memory_with_format(&data, format)
            .map_err(|e| ProviderError::Precondition(format!("image does not decode: {e}")))?;
        Ok(Self {
            media_type,
            width: decoded.width(),
            height: decoded.height(),
            data,
        })
    }

    pub fn media_type(&self) -> MediaType {
        self.media_type
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// `data:` URL with the payload inlined as base64.
    pub fn data_url(&self) -> String {
        use base64::Engine;
        format!(
            "data:{};base64,{}",
            self.media_type.mime(),
            base64::engine::general_purpose::STANDARD.encode(&self.data)
        )
    }
}

impl fmt::Debug for ImageAttachment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageAttachment")
            .field("media_type", &self.media_type)
            .field("bytes", &self.data.len())
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(ImageAttachment),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Turn {
    pub fn user(parts: Vec<Part>) -> Self {
        Self { role: Role::User, parts }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            parts: vec![Part::Text(text.into())],
        }
    }

    /// Text parts joined by newlines.
    pub fn text(&self) -> String {
        let texts: Vec<&str> = self
            .parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect();
        texts.join("\n")
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageAttachment> {
        self.parts.iter().filter_map(|p| match p {
            Part::Image(img) => Some(img),
            Part::Text(_) => None,
        })
    }
}

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o-2024-05-13";
pub const DEFAULT_IMAGE_MODEL: &str = "dall-e-3";

/// Sampling overrides. Unset values are not sent, so the service defaults apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    pub model_id: String,
}

impl SamplingParams {
    pub fn for_model(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub turns: Vec<Turn>,
    pub sampling: SamplingParams,
    /// Retry index of this logical call. Not sent over the wire; it keeps
    /// retried calls distinguishable in replay sessions.
    pub attempt: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !self.turns.iter().any(|t| t.role == Role::User) {
            return Err(ProviderError::Precondition(
                "chat request has no user turn".into(),
            ));
        }
        if self.turns.last().map(|t| t.role) != Some(Role::User) {
            return Err(ProviderError::Precondition(
                "chat request must end with a user turn".into(),
            ));
        }
        if let Some(i) = self.turns.iter().position(|t| t.parts.is_empty()) {
            return Err(ProviderError::Precondition(format!("turn {i} has no content")));
        }
        Ok(())
    }

    pub fn digest(&self) -> Digest {
        digest::chat_digest(self)
    }

    pub fn last_user_turn(&self) -> Option<&Turn> {
        self.turns.iter().rev().find(|t| t.role == Role::User)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGenRequest {
    pub prompt: String,
    pub size: (u32, u32),
    pub model_id: String,
    /// Regeneration index for the same prompt; part of the replay digest only.
    pub attempt: u32,
}

impl ImageGenRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::Precondition("image prompt is empty".into()));
        }
        if self.size.0 == 0 || self.size.1 == 0 {
            return Err(ProviderError::Precondition(format!(
                "image size {}x{} is not positive",
                self.size.0, self.size.1
            )));
        }
        Ok(())
    }

    pub fn digest(&self) -> Digest {
        digest::image_digest(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Set when the backend reports a price; otherwise the provider estimates it.
    pub cost_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderResponse {
    pub text: Option<String>,
    pub image: Option<Vec<u8>>,
    pub usage: Usage,
    pub latency: Duration,
}

impl ProviderResponse {
    pub fn from_text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            image: None,
            usage: Usage::default(),
            latency: Duration::ZERO,
        }
    }

    pub fn from_image(bytes: Vec<u8>) -> Self {
        Self {
            text: None,
            image: Some(bytes),
            usage: Usage::default(),
            latency: Duration::ZERO,
        }
    }

    pub fn into_text(self) -> Result<String, ProviderError> {
        self.text
            .ok_or_else(|| ProviderError::Malformed("response carries no text".into()))
    }

    pub fn into_image(self) -> Result<Vec<u8>, ProviderError> {
        self.image
            .ok_or_else(|| ProviderError::Malformed("response carries no image".into()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("model refused: {0}")]
    Refusal(String),
    #[error("image rejected by safety system: {0}")]
    SafetyRejection(String),
    #[error("replay session has no response for request {digest}")]
    CacheMiss { digest: String },
    #[error("session file: {0}")]
    Session(String),
}

/// How a failure is accounted for by the annotation loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    /// Counts against patience.
    Semantic,
    /// Retried inside the provider; only counts against patience when configured.
    Transient,
    /// Aborts the unit; the run reports it and a rerun picks the unit up again.
    Fatal,
}

impl ProviderError {
    pub fn class(&self) -> FailureClass {
        match self {
            ProviderError::Malformed(_)
            | ProviderError::Refusal(_)
            | ProviderError::SafetyRejection(_) => FailureClass::Semantic,
            ProviderError::Transport(_) | ProviderError::RateLimited { .. } => {
                FailureClass::Transient
            }
            ProviderError::Precondition(_)
            | ProviderError::Auth(_)
            | ProviderError::CacheMiss { .. }
            | ProviderError::Session(_) => FailureClass::Fatal,
        }
    }
}

/// Something that can answer chat and image-generation requests.
pub trait Backend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError>;
    fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError>;
    /// Whether calls leave the process.
    fn is_live(&self) -> bool;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).chat(req)
    }
    fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).generate_image(req)
    }
    fn is_live(&self) -> bool {
        (**self).is_live()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, retry: u32, hint: Option<Duration>) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX));
        hint.unwrap_or(exp).min(self.max_delay)
    }
}

/// Prices used when a backend does not report a cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pricing {
    pub input_per_1k_tokens: f64,
    pub output_per_1k_tokens: f64,
    pub per_image: f64,
}

impl Pricing {
    fn estimate(&self, kind: CallKind, usage: &Usage) -> f64 {
        match kind {
            CallKind::Chat => {
                usage.input_tokens as f64 / 1000.0 * self.input_per_1k_tokens
                    + usage.output_tokens as f64 / 1000.0 * self.output_per_1k_tokens
            }
            CallKind::Image => self.per_image,
        }
    }
}

/// Shareable handle the pipeline talks to.
pub struct Provider {
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    pricing: Pricing,
    ledger: CostLedger,
    live_calls: AtomicU64,
}

impl Provider {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            pricing: Pricing::default(),
            ledger: CostLedger::default(),
            live_calls: AtomicU64::new(0),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    /// Number of calls handed to a live backend, including retried ones.
    pub fn live_calls(&self) -> u64 {
        self.live_calls.load(Ordering::Relaxed)
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        req.validate()?;
        let resp = self.with_retries(|| self.backend.chat(req))?;
        if resp.text.is_none() || resp.image.is_some() {
            return Err(ProviderError::Malformed(
                "chat response must carry text only".into(),
            ));
        }
        self.record(CallKind::Chat, &resp);
        Ok(resp)
    }

    pub fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
        req.validate()?;
        let resp = self.with_retries(|| self.backend.generate_image(req))?;
        if resp.image.is_none() || resp.text.is_some() {
            return Err(ProviderError::Malformed(
                "image response must carry an image only".into(),
            ));
        }
        self.record(CallKind::Image, &resp);
        Ok(resp)
    }

    fn with_retries(
        &self,
        mut call: impl FnMut() -> Result<ProviderResponse, ProviderError>,
    ) -> Result<ProviderResponse, ProviderError> {
        let mut retry = 0;
        loop {
            if self.backend.is_live() {
                self.live_calls.fetch_add(1, Ordering::Relaxed);
            }
            let started = Instant::now();
            match call() {
                Ok(mut resp) => {
                    if resp.latency.is_zero() {
                        resp.latency = started.elapsed();
                    }
                    return Ok(resp);
                }
                Err(e) if e.class() == FailureClass::Transient && retry < self.retry.max_retries => {
                    let hint = match &e {
                        ProviderError::RateLimited { retry_after } => *retry_after,
                        _ => None,
                    };
                    let wait = self.retry.delay(retry, hint);
                    log::warn!("{e}; retrying in {wait:?} ({}/{})", retry + 1, self.retry.max_retries);
                    std::thread::sleep(wait);
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn record(&self, kind: CallKind, resp: &ProviderResponse) {
        let cost = resp
            .usage
            .cost_usd
            .unwrap_or_else(|| self.pricing.estimate(kind, &resp.usage));
        self.ledger.record(kind, resp.usage.input_tokens, resp.usage.output_tokens, cost);
    }
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Provider")
            .field("live", &self.backend.is_live())
            .field("retry", &self.retry)
            .field("calls", &self.ledger.len())
            .finish()
    }
}
