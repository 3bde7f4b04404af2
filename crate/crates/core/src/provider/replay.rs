//! Record and replay of provider traffic.
//!
//! A session file is a single JSON object mapping the hex request digest to
//! the stored outcome:
//!
//! ```json
//! {
//!   "3f1c…": { "kind": "chat",  "response_text": "Yes, the image …" },
//!   "9a02…": { "kind": "image", "response_image_b64": "iVBORw0KGgo…" },
//!   "c471…": { "kind": "error", "error_class": "safety_rejection", "message": "…" }
//! }
//! ```
//!
//! Lookups go by digest, never by call order, so a session replays the same
//! way under any worker interleaving. Only outcomes that the pipeline acts
//! on are stored: successes and semantic failures. Transient failures are
//! retried away before they reach the recorder.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    Backend, ChatRequest, FailureClass, ImageGenRequest, ProviderError, ProviderResponse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordedErrorClass {
    Malformed,
    Refusal,
    SafetyRejection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SessionEntry {
    Chat {
        response_text: String,
    },
    Image {
        response_image_b64: String,
    },
    Error {
        error_class: RecordedErrorClass,
        message: String,
    },
}

impl SessionEntry {
    fn from_error(e: &ProviderError) -> Option<Self> {
        let (error_class, message) = match e {
            ProviderError::Malformed(m) => (RecordedErrorClass::Malformed, m),
            ProviderError::Refusal(m) => (RecordedErrorClass::Refusal, m),
            ProviderError::SafetyRejection(m) => (RecordedErrorClass::SafetyRejection, m),
            _ => return None,
        };
        Some(SessionEntry::Error {
            error_class,
            message: message.clone(),
        })
    }

    fn to_error(class: RecordedErrorClass, message: &str) -> ProviderError {
        let message = message.to_string();
        match class {
            RecordedErrorClass::Malformed => ProviderError::Malformed(message),
            RecordedErrorClass::Refusal => ProviderError::Refusal(message),
            RecordedErrorClass::SafetyRejection => ProviderError::SafetyRejection(message),
        }
    }
}

/// Parsed session file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Session {
    entries: BTreeMap<String, SessionEntry>,
}

impl Session {
    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        let entries: BTreeMap<String, SessionEntry> = serde_json::from_str(text)
            .map_err(|e| ProviderError::Session(format!("invalid session JSON: {e}")))?;
        for (digest, entry) in &entries {
            if digest.len() != 64 || !digest.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
                return Err(ProviderError::Session(format!(
                    "key `{digest}` is not a lowercase hex SHA-256 digest"
                )));
            }
            if let SessionEntry::Image { response_image_b64 } = entry {
                base64::engine::general_purpose::STANDARD
                    .decode(response_image_b64)
                    .map_err(|e| {
                        ProviderError::Session(format!("entry {digest}: bad base64 image: {e}"))
                    })?;
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| {
            ProviderError::Session(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.entries).expect("session serializes");
        s.push('\n');
        s
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        let io = |e: std::io::Error| ProviderError::Session(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, digest: &str) -> Option<&SessionEntry> {
        self.entries.get(digest)
    }

    pub fn insert(&mut self, digest: String, entry: SessionEntry) {
        self.entries.insert(digest, entry);
    }
}

/// Serves responses from a session file.
#[derive(Debug)]
pub struct ReplayBackend {
    session: Session,
}

impl ReplayBackend {
    pub fn new(session: Session) -> Self {
        Self { session }
    }

    fn lookup(&self, digest: String) -> Result<&SessionEntry, ProviderError> {
        self.session
            .get(&digest)
            .ok_or(ProviderError::CacheMiss { digest })
    }
}

/// Opens a session file for replay. A missing request is a hard error.
pub fn replay_load(session_path: &Path) -> Result<ReplayBackend, ProviderError> {
    Ok(ReplayBackend::new(Session::load(session_path)?))
}

/// Wraps `inner` so every completed call is persisted to `session_path`
/// when [`Recorder::save`] runs. Existing entries in the file are kept.
pub fn replay_record<B: Backend>(session_path: &Path, inner: B) -> Result<Recorder<B>, ProviderError> {
    let session = if session_path.exists() {
        Session::load(session_path)?
    } else {
        Session::default()
    };
    Ok(Recorder {
        inner,
        path: session_path.to_path_buf(),
        session: Mutex::new(session),
    })
}

impl Backend for ReplayBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        match self.lookup(req.digest().to_hex())? {
            SessionEntry::Chat { response_text } => Ok(ProviderResponse::from_text(response_text.clone())),
            SessionEntry::Error { error_class, message } => Err(SessionEntry::to_error(*error_class, message)),
            SessionEntry::Image { .. } => Err(ProviderError::Session(
                "chat request maps to an image entry".into(),
            )),
        }
    }

    fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
        match self.lookup(req.digest().to_hex())? {
            SessionEntry::Image { response_image_b64 } => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(response_image_b64)
                    .map_err(|e| ProviderError::Session(format!("bad base64 image: {e}")))?;
                Ok(ProviderResponse::from_image(bytes))
            }
            SessionEntry::Error { error_class, message } => Err(SessionEntry::to_error(*error_class, message)),
            SessionEntry::Chat { .. } => Err(ProviderError::Session(
                "image request maps to a chat entry".into(),
            )),
        }
    }

    fn is_live(&self) -> bool {
        false
    }
}

pub struct Recorder<B> {
    inner: B,
    path: PathBuf,
    session: Mutex<Session>,
}

impl<B: Backend> Recorder<B> {
    pub fn save(&self) -> Result<(), ProviderError> {
        self.session.lock().expect("recorder poisoned").save(&self.path)
    }

    pub fn session(&self) -> Session {
        self.session.lock().expect("recorder poisoned").clone()
    }

    fn keep(&self, digest: String, outcome: &Result<ProviderResponse, ProviderError>, image: bool) {
        let entry = match outcome {
            Ok(resp) if image => resp.image.as_ref().map(|bytes| SessionEntry::Image {
                response_image_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
            }),
            Ok(resp) => resp.text.as_ref().map(|t| SessionEntry::Chat {
                response_text: t.clone(),
            }),
            Err(e) if e.class() == FailureClass::Semantic => SessionEntry::from_error(e),
            Err(_) => None,
        };
        if let Some(entry) = entry {
            self.session.lock().expect("recorder poisoned").insert(digest, entry);
        }
    }
}

impl<B: Backend> Backend for Recorder<B> {
    fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let out = self.inner.chat(req);
        self.keep(req.digest().to_hex(), &out, false);
        out
    }

    fn generate_image(&self, req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
        let out = self.inner.generate_image(req);
        self.keep(req.digest().to_hex(), &out, true);
        out
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{Part, Provider, SamplingParams, Turn};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    /// Answers with a counter, so a second live call would be visible.
    struct Counting(AtomicU32);

    impl Backend for Counting {
        fn chat(&self, req: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            let text = req.last_user_turn().unwrap().text();
            if text == "refuse" {
                return Err(ProviderError::Refusal("policy".into()));
            }
            Ok(ProviderResponse::from_text(format!("reply#{n} to {text}")))
        }
        fn generate_image(&self, _req: &ImageGenRequest) -> Result<ProviderResponse, ProviderError> {
            let img = image::RgbImage::from_pixel(64, 64, image::Rgb([1, 2, 3]));
            let mut out = std::io::Cursor::new(Vec::new());
            img.write_to(&mut out, image::ImageFormat::Png).unwrap();
            Ok(ProviderResponse::from_image(out.into_inner()))
        }
        fn is_live(&self) -> bool {
            true
        }
    }

    fn req(text: &str) -> ChatRequest {
        ChatRequest {
            system_prompt: "s".into(),
            turns: vec![Turn::user(vec![Part::Text(text.into())])],
            sampling: SamplingParams::default(),
            attempt: 0,
        }
    }

    #[test]
    fn record_then_replay_in_reverse_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        let recorder = Arc::new(replay_record(&path, Counting(AtomicU32::new(0))).unwrap());
        let live = Provider::new(recorder.clone());
        let reqs = [req("a"), req("b"), req("c")];
        let first: Vec<String> = reqs
            .iter()
            .map(|r| live.chat(r).unwrap().text.unwrap())
            .collect();
        recorder.save().unwrap();

        let replay = Provider::new(Arc::new(replay_load(&path).unwrap()));
        let again: Vec<String> = reqs
            .iter()
            .rev()
            .map(|r| replay.chat(r).unwrap().text.unwrap())
            .collect();
        let mut expected = first.clone();
        expected.reverse();
        assert_eq!(again, expected);
        assert_eq!(replay.live_calls(), 0);
    }

    #[test]
    fn empty_session_is_a_cache_miss_naming_the_digest() {
        let backend = ReplayBackend::new(Session::default());
        let r = req("anything");
        match backend.chat(&r) {
            Err(ProviderError::CacheMiss { digest }) => assert_eq!(digest, r.digest().to_hex()),
            other => panic!("expected cache miss, got {other:?}"),
        }
    }

    #[test]
    fn image_fixture_is_served_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let recorder = replay_record(&path, Counting(AtomicU32::new(0))).unwrap();
        let gen = ImageGenRequest {
            prompt: "a pencil drawing".into(),
            size: (64, 64),
            model_id: "g".into(),
            attempt: 0,
        };
        let original = recorder.generate_image(&gen).unwrap().image.unwrap();
        recorder.save().unwrap();
        let replayed = replay_load(&path).unwrap().generate_image(&gen).unwrap().image.unwrap();
        assert_eq!(original, replayed);
        let decoded = image::load_from_memory(&replayed).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (64, 64));
    }

    #[test]
    fn semantic_failures_replay_as_the_same_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let recorder = replay_record(&path, Counting(AtomicU32::new(0))).unwrap();
        assert!(recorder.chat(&req("refuse")).is_err());
        recorder.save().unwrap();
        let err = replay_load(&path).unwrap().chat(&req("refuse")).unwrap_err();
        assert!(matches!(err, ProviderError::Refusal(m) if m == "policy"));
    }

    #[test]
    fn replay_is_order_independent_across_threads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let recorder = replay_record(&path, Counting(AtomicU32::new(0))).unwrap();
        let reqs: Vec<ChatRequest> = (0..32).map(|i| req(&format!("q{i}"))).collect();
        for r in &reqs {
            recorder.chat(r).unwrap();
        }
        recorder.save().unwrap();
        let backend = Arc::new(replay_load(&path).unwrap());
        let reference: Vec<String> = reqs.iter().map(|r| backend.chat(r).unwrap().text.unwrap()).collect();

        for seed in 0..8u64 {
            let mut order: Vec<usize> = (0..reqs.len()).collect();
            crate::rng::SplitMix64::new(seed).shuffle(&mut order);
            let results = Mutex::new(vec![String::new(); reqs.len()]);
            std::thread::scope(|s| {
                for chunk in order.chunks(5) {
                    let backend = &backend;
                    let reqs = &reqs;
                    let results = &results;
                    s.spawn(move || {
                        for &i in chunk {
                            let text = backend.chat(&reqs[i]).unwrap().text.unwrap();
                            results.lock().unwrap()[i] = text;
                        }
                    });
                }
            });
            assert_eq!(results.into_inner().unwrap(), reference);
        }
    }

    #[test]
    fn session_parse_rejects_bad_keys_and_payloads() {
        assert!(Session::parse("{}").unwrap().is_empty());
        assert!(Session::parse(r#"{"xyz": {"kind":"chat","response_text":"a"}}"#).is_err());
        let key = "a".repeat(64);
        assert!(Session::parse(&format!(r#"{{"{key}": {{"kind":"image","response_image_b64":"!!"}}}}"#)).is_err());
        assert!(Session::parse(&format!(r#"{{"{key}": {{"kind":"chat"}}}}"#)).is_err());
        let ok = Session::parse(&format!(r#"{{"{key}": {{"kind":"chat","response_text":"Yes"}}}}"#)).unwrap();
        assert_eq!(Session::parse(&ok.to_json()).unwrap(), ok);
    }
}
