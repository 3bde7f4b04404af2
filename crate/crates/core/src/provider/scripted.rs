//! Offline backend driven by a script, used to author replay sessions and in
//! tests.
//!
//! The backend does the bookkeeping a script needs to answer consistently:
//! it knows which registered source item an attached image belongs to,
//! synthesizes a distinct PNG for every generation call and remembers which
//! (item, style, attempt) produced it, and maps restyled prompts back to the
//! chat call that wrote them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest as _, Sha256};

use super::{Backend, ChatRequest, ImageGenRequest, ProviderError, ProviderResponse};
use crate::promptkit::Style;

/// Side length of synthesized images. Requested sizes are ignored so that
/// fixture sessions stay small.
pub const SYNTH_SIDE: u32 = 32;

/// What the script sees of a chat call.
#[derive(Debug, Clone)]
pub struct ChatCall<'a> {
    pub system: &'a str,
    /// Text of the last user turn.
    pub text: &'a str,
    /// Source item whose image (original or generated) is in the conversation.
    pub item: Option<String>,
    /// Style named by the attached generated image, or failing that by the text.
    pub style: Option<Style>,
    /// Generation attempt of the most recent generated image attached.
    pub generated: Option<u32>,
    /// Request nonce (retry index of the logical call).
    pub attempt: u32,
    pub turns: usize,
}

impl ChatCall<'_> {
    pub fn mentions(&self, phrase: &str) -> bool {
        self.text.contains(phrase)
    }

    /// Value of a `Name: value` line in the user text.
    pub fn field(&self, name: &str) -> Option<&str> {
        self.text.lines().find_map(|l| {
            l.strip_prefix(name)
                .and_then(|r| r.strip_prefix(':'))
                .map(str::trim)
        })
    }
}

#[derive(Debug, Clone)]
pub struct ImageCall<'a> {
    pub prompt: &'a str,
    pub item: Option<String>,
    pub style: Option<Style>,
    pub attempt: u32,
}

pub trait Script: Send + Sync {
    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError>;

    /// Return an error to fail the generation call; otherwise a tagged image
    /// is synthesized.
    fn image(&self, _call: &ImageCall<'_>) -> Result<(), ProviderError> {
        Ok(())
    }
}

impl<F> Script for F
where
    F: Fn(&ChatCall<'_>) -> Result<String, ProviderError> + Send + Sync,
{
    fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError> {
        self(call)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedTag {
    pub item: Option<String>,
    pub style: Option<Style>,
    pub attempt: u32,
}

#[derive(Default)]
struct State {
    sources: HashMap<[u8; 32], String>,
    generated: HashMap<[u8; 32], GeneratedTag>,
    /// Reply text → (item, style) of the call that produced it.
    replies: HashMap<String, (Option<String>, Option<Style>)>,
}

pub struct ScriptedBackend<S> {
    script: S,
    state: Mutex<State>,
    chat_calls: AtomicU64,
    image_calls: AtomicU64,
}

fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Deterministic PNG whose pixels are derived from `seed`.
pub fn synth_png(seed: &str) -> Vec<u8> {
    let h = sha(seed.as_bytes());
    let img = image::RgbImage::from_fn(SYNTH_SIDE, SYNTH_SIDE, |x, y| {
        let i = ((x / 8) + (y / 8) * 4) as usize % 32;
        image::Rgb([h[i], h[(i + 11) % 32], h[(i + 23) % 32]])
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

impl<S: Script> ScriptedBackend<S> {
    pub fn new(script: S) -> Self {
        Self {
            script,
            state: Mutex::default(),
            chat_calls: AtomicU64::new(0),
            image_calls: AtomicU64::new(0),
        }
    }

    /// Associates an original image with a source item id.
    pub fn register_source(&self, id: &str, image: &[u8]) {
        self.state
            .lock()
            .unwrap()
            .sources
            .insert(sha(image), id.to_string());
    }

    pub fn chat_calls(&self) -> u64 {
        self.chat_calls.load(Ordering::Relaxed)
    }

    pub fn image_calls(&self) -> u64 {
        self.image_calls.load(Ordering::Relaxed)
    }

    /// Tag of an image this backend generated.
    pub fn tag_of(&self, image: &[u8]) -> Option<GeneratedTag> {
        self.state.lock().unwrap().generated.get(&sha(image)).cloned()
    }

    fn context(&self, req: &ChatRequest) -> (Option<String>, Option<Style>, Option<u32>) {
        let state = self.state.lock().unwrap();
        let mut item = None;
        let mut style = None;
        let mut generated = None;
        for img in req.turns.iter().flat_map(|t| t.images()) {
            let key = sha(img.bytes());
            if let Some(id) = state.sources.get(&key) {
                item = Some(id.clone());
            } else if let Some(tag) = state.generated.get(&key) {
                item = tag.item.clone().or(item);
                style = tag.style.or(style);
                generated = Some(tag.attempt);
            }
        }
        (item, style, generated)
    }
}

fn style_in(text: &str) -> Option<Style> {
    Style::TARGETS
        .into_iter()
        .find(|s| text.contains(s.display_phrase()))
}

impl<S: Script> Backend for ScriptedBackend<S> {
    fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        self.chat_calls.fetch_add(1, Ordering::Relaxed);
        let text = req.last_user_turn().map(|t| t.text()).unwrap_or_default();
        let (item, style, generated) = self.context(req);
        let call = ChatCall {
            system: &req.system_prompt,
            text: &text,
            item,
            style: style.or_else(|| style_in(&text)),
            generated,
            attempt: req.attempt,
            turns: req.turns.len(),
        };
        let reply = self.script.chat(&call)?;
        self.state
            .lock()
            .unwrap()
            .replies
            .insert(reply.clone(), (call.item.clone(), call.style));
        Ok(ProviderResponse::from_text(reply))
    }

    fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
        self.image_calls.fetch_add(1, Ordering::Relaxed);
        let (item, style) = self
            .state
            .lock()
            .unwrap()
            .replies
            .get(&req.prompt)
            .cloned()
            .unwrap_or((None, None));
        let call = ImageCall {
            prompt: &req.prompt,
            item: item.clone(),
            style,
            attempt: req.attempt,
        };
        self.script.image(&call)?;
        let seed = format!(
            "{}/{}/{}/{}",
            item.as_deref().unwrap_or("?"),
            style.map(Style::as_str).unwrap_or("?"),
            req.attempt,
            req.prompt
        );
        let png = synth_png(&seed);
        self.state.lock().unwrap().generated.insert(
            sha(&png),
            GeneratedTag {
                item,
                style,
                attempt: req.attempt,
            },
        );
        Ok(ProviderResponse::from_image(png))
    }

    fn is_live(&self) -> bool {
        false
    }
}
