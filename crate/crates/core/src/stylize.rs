//! Turning an original image into a verified stylized one.
//!
//! Per (item, style): describe the original as a generation prompt, rewrite
//! that prompt for the target style, render it, and ask the chat model to
//! compare the render with the original. A rejected render sends the loop
//! back to generation with the same restyled prompt. Every semantic failure
//! along the way (bad reply, safety rejection, negative verdict) draws from
//! one patience budget; an exhausted budget omits the unit.

use serde::{Deserialize, Serialize};

pub use crate::exchange::{OmitReason, Omitted, StepError};

use crate::exchange::{single, Budget, Exchange, Outcome, Step};
use crate::promptkit::{
    parse_verdict, render, Attachments, Bindings, TemplateId, TemplateSet, VerdictKind,
    VerificationVerdict,
};
use crate::provider::{
    ChatRequest, ImageAttachment, ImageGenRequest, MediaType, Provider, ProviderError, SamplingParams,
    DEFAULT_CHAT_MODEL, DEFAULT_IMAGE_MODEL,
    Turn,
};
use crate::{Style, Task};

/// How much of the conversation the verification call sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    /// One running conversation per (item, style): verification follows the
    /// description and restyling turns.
    #[default]
    Persistent,
    /// Verification is asked in a new conversation holding only its own turn.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizeConfig {
    pub patience: u32,
    pub image_size: (u32, u32),
    pub image_model: String,
    pub sampling: SamplingParams,
    pub session_mode: SessionMode,
    pub transport_counts_against_patience: bool,
}

impl Default for StylizeConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            image_size: (1024, 1024),
            image_model: DEFAULT_IMAGE_MODEL.into(),
            sampling: SamplingParams::for_model(DEFAULT_CHAT_MODEL),
            session_mode: SessionMode::Persistent,
            transport_counts_against_patience: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StylizedImage {
    pub source_id: String,
    pub style: Style,
    /// PNG bytes.
    pub image: Vec<u8>,
    pub p_ori: String,
    pub p_sty: String,
    /// Generation calls made, including the accepted one.
    pub attempts: u32,
    pub verdict_log: Vec<VerificationVerdict>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StylizeOutcome {
    Stylized(StylizedImage),
    Omitted(Omitted),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StylizeReport {
    pub outcome: StylizeOutcome,
    pub transcript: Vec<Exchange>,
}

pub struct Stylizer<'a> {
    provider: &'a Provider,
    templates: &'a TemplateSet,
    cfg: &'a StylizeConfig,
}

fn precondition(e: impl ToString) -> ProviderError {
    ProviderError::Precondition(e.to_string())
}

fn nonempty(text: &str) -> Result<String, String> {
    let t = text.trim();
    if t.is_empty() {
        Err("reply is empty".into())
    } else {
        Ok(t.to_string())
    }
}

/// Re-encodes to PNG unless the bytes already are PNG.
fn as_png(img: &ImageAttachment) -> Result<Vec<u8>, ProviderError> {
    if img.media_type() == MediaType::Png {
        return Ok(img.bytes().to_vec());
    }
    let decoded = image::load_from_memory(img.bytes()).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    decoded
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ProviderError::Malformed(e.to_string()))?;
    Ok(out.into_inner())
}

/// Conversation state of one (item, style) unit.
struct Conversation {
    bindings: Bindings,
    x_ori: ImageAttachment,
    history: Vec<Turn>,
}

impl<'a> Stylizer<'a> {
    pub fn new(provider: &'a Provider, templates: &'a TemplateSet, cfg: &'a StylizeConfig) -> Self {
        Self {
            provider,
            templates,
            cfg,
        }
    }

    fn rendered(
        &self,
        id: TemplateId,
        bindings: &Bindings,
        images: Attachments<'_>,
    ) -> Result<ChatRequest, ProviderError> {
        let mut req = render(self.templates.get(id), bindings, &images).map_err(precondition)?;
        req.sampling = self.cfg.sampling.clone();
        Ok(req)
    }

    fn decompose_request(&self, conv: &Conversation, attempt: u32) -> Result<ChatRequest, ProviderError> {
        let mut req = self.rendered(
            TemplateId::ImageDecomposition,
            &conv.bindings,
            Attachments {
                original: Some(&conv.x_ori),
                stylized: None,
            },
        )?;
        req.attempt = attempt;
        Ok(req)
    }

    fn inject_request(&self, conv: &Conversation, attempt: u32) -> Result<ChatRequest, ProviderError> {
        let mut req = self.rendered(TemplateId::StyleInjection, &conv.bindings, Attachments::default())?;
        let mut turns = conv.history.clone();
        turns.append(&mut req.turns);
        req.turns = turns;
        req.attempt = attempt;
        Ok(req)
    }

    fn verify_request(
        &self,
        conv: &Conversation,
        x_sty: &ImageAttachment,
        attempt: u32,
    ) -> Result<ChatRequest, ProviderError> {
        let mut req = self.rendered(
            TemplateId::ImageVerification,
            &conv.bindings,
            Attachments {
                original: Some(&conv.x_ori),
                stylized: Some(x_sty),
            },
        )?;
        if self.cfg.session_mode == SessionMode::Persistent {
            let mut turns = conv.history.clone();
            turns.append(&mut req.turns);
            req.turns = turns;
        }
        req.attempt = attempt;
        Ok(req)
    }

    fn conversation(&self, task: Task, style: Style, x_ori: &ImageAttachment) -> Conversation {
        Conversation {
            bindings: Bindings::for_style(task, style),
            x_ori: x_ori.clone(),
            history: Vec::new(),
        }
    }

    /// One decomposition call: the original image described as a generation prompt.
    pub fn decompose(&self, task: Task, x_ori: &ImageAttachment) -> Result<String, StepError> {
        let conv = self.conversation(task, Style::CartoonDrawing, x_ori);
        let req = self.decompose_request(&conv, 0).map_err(StepError::Fatal)?;
        single(self.provider, &req, nonempty)
    }

    /// One restyling call following a decomposition exchange.
    pub fn inject_style(
        &self,
        task: Task,
        style: Style,
        x_ori: &ImageAttachment,
        p_ori: &str,
    ) -> Result<String, StepError> {
        if !style.is_target() {
            return Err(StepError::Fatal(precondition(format!("{style} is not a stylization target"))));
        }
        let mut conv = self.conversation(task, style, x_ori);
        let id = self.decompose_request(&conv, 0).map_err(StepError::Fatal)?;
        conv.history = id.turns;
        conv.history.push(Turn::assistant(p_ori));
        let req = self.inject_request(&conv, 0).map_err(StepError::Fatal)?;
        single(self.provider, &req, nonempty)
    }

    /// One verification call in a fresh context.
    pub fn verify_image(
        &self,
        task: Task,
        style: Style,
        x_ori: &ImageAttachment,
        x_sty: &ImageAttachment,
    ) -> Result<VerificationVerdict, StepError> {
        let conv = self.conversation(task, style, x_ori);
        let mut req = self.rendered(
            TemplateId::ImageVerification,
            &conv.bindings,
            Attachments {
                original: Some(x_ori),
                stylized: Some(x_sty),
            },
        )
        .map_err(StepError::Fatal)?;
        req.attempt = 0;
        single(self.provider, &req, |t| {
            parse_verdict(VerdictKind::ImageVerify, t).map_err(|e| e.to_string())
        })
    }

    /// Runs the full loop for one (item, style) unit.
    ///
    /// Failures that count against patience never escape; they end in
    /// [`StylizeOutcome::Omitted`] once the budget is spent. Errors that do
    /// escape (authentication, replay cache miss, invalid request) abort the
    /// unit without a verdict so that a later run retries it.
    pub fn stylize_item(
        &self,
        source_id: &str,
        task: Task,
        style: Style,
        original: &[u8],
    ) -> Result<StylizeReport, ProviderError> {
        if !style.is_target() {
            return Err(precondition(format!("{style} is not a stylization target")));
        }
        if self.cfg.patience == 0 {
            return Err(precondition("patience must be at least 1"));
        }
        let mut budget = Budget::new(self.cfg.patience, self.cfg.transport_counts_against_patience);
        let omit = |budget: Budget, reason: OmitReason| StylizeReport {
            outcome: StylizeOutcome::Omitted(budget.omitted(reason)),
            transcript: budget.transcript,
        };

        let x_ori = match ImageAttachment::from_bytes(original.to_vec()) {
            Ok(x) => x,
            Err(e) => {
                budget.last_error = Some(e.to_string());
                return Ok(omit(budget, OmitReason::UndecodableSource));
            }
        };
        let mut conv = self.conversation(task, style, &x_ori);

        let mut tries = 0;
        let (id_turns, p_ori) = loop {
            if budget.exhausted() {
                return Ok(omit(budget, OmitReason::PatienceExhausted));
            }
            let req = self.decompose_request(&conv, tries)?;
            tries += 1;
            if let Some(p) = budget.chat(self.provider, Step::ID, &req, nonempty)? {
                break (req.turns, p);
            }
        };
        conv.history = id_turns;
        conv.history.push(Turn::assistant(p_ori.clone()));

        let mut tries = 0;
        let (si_turn, p_sty) = loop {
            if budget.exhausted() {
                return Ok(omit(budget, OmitReason::PatienceExhausted));
            }
            let req = self.inject_request(&conv, tries)?;
            tries += 1;
            if let Some(p) = budget.chat(self.provider, Step::SI, &req, nonempty)? {
                break (req.turns.last().cloned().expect("request ends with a user turn"), p);
            }
        };
        conv.history.push(si_turn);
        conv.history.push(Turn::assistant(p_sty.clone()));

        let mut verdict_log = Vec::new();
        let mut generations = 0;
        loop {
            if budget.exhausted() {
                return Ok(omit(budget, OmitReason::PatienceExhausted));
            }
            let gen = ImageGenRequest {
                prompt: p_sty.clone(),
                size: self.cfg.image_size,
                model_id: self.cfg.image_model.clone(),
                attempt: generations,
            };
            generations += 1;
            let digest = gen.digest().to_hex();
            let x_sty = match self
                .provider
                .generate_image(&gen)
                .and_then(|r| r.into_image())
                .and_then(|b| ImageAttachment::from_bytes(b).map_err(|e| ProviderError::Malformed(e.to_string())))
            {
                Ok(img) => img,
                Err(e) => {
                    budget.provider_failure(Step::Generate, gen.attempt, digest, e)?;
                    continue;
                }
            };
            budget.log(Step::Generate, gen.attempt, digest, Outcome::Ok, None, None);

            let req = self.verify_request(&conv, &x_sty, gen.attempt)?;
            let verdict = budget.chat(self.provider, Step::IV, &req, |t| {
                parse_verdict(VerdictKind::ImageVerify, t).map_err(|e| e.to_string())
            })?;
            let Some(verdict) = verdict else { continue };
            let passed = verdict.value;
            budget.set_verdict(passed, !passed);
            verdict_log.push(verdict);
            if passed {
                let image = match as_png(&x_sty) {
                    Ok(png) => png,
                    Err(e) => {
                        budget.fail(e.to_string());
                        continue;
                    }
                };
                return Ok(StylizeReport {
                    outcome: StylizeOutcome::Stylized(StylizedImage {
                        source_id: source_id.to_string(),
                        style,
                        image,
                        p_ori,
                        p_sty,
                        attempts: generations,
                        verdict_log,
                    }),
                    transcript: budget.transcript,
                });
            }
            budget.fail("generated image rejected by verification".into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::scripted::{synth_png, ChatCall, ImageCall, Script, ScriptedBackend};
    use std::sync::{Arc, Mutex};

    /// Verification answers come from a queue; other steps succeed.
    struct Queue {
        verdicts: Mutex<Vec<&'static str>>,
        reject_images: Mutex<u32>,
        empty_decompositions: Mutex<u32>,
    }

    impl Queue {
        fn new(verdicts: &[&'static str]) -> Self {
            let mut v = verdicts.to_vec();
            v.reverse();
            Self {
                verdicts: Mutex::new(v),
                reject_images: Mutex::new(0),
                empty_decompositions: Mutex::new(0),
            }
        }
    }

    impl Script for Queue {
        fn chat(&self, call: &ChatCall<'_>) -> Result<String, ProviderError> {
            if call.mentions("replicate the given image") {
                let mut n = self.empty_decompositions.lock().unwrap();
                if *n > 0 {
                    *n -= 1;
                    return Ok("   ".into());
                }
                return Ok("A man preparing food at a counter.".into());
            }
            if call.mentions("change the style") {
                return Ok(format!("A {:?} rendering of a man preparing food.", call.style.unwrap()));
            }
            Ok(self.verdicts.lock().unwrap().pop().unwrap_or("Yes.").to_string())
        }

        fn image(&self, _call: &ImageCall<'_>) -> Result<(), ProviderError> {
            let mut n = self.reject_images.lock().unwrap();
            if *n > 0 {
                *n -= 1;
                return Err(ProviderError::SafetyRejection("blocked".into()));
            }
            Ok(())
        }
    }

    fn run(script: Queue, cfg: StylizeConfig) -> (StylizeReport, Arc<ScriptedBackend<Queue>>) {
        let backend = Arc::new(ScriptedBackend::new(script));
        let src = synth_png("source");
        backend.register_source("s-1", &src);
        let provider = Provider::new(backend.clone());
        let templates = TemplateSet::builtin();
        let report = Stylizer::new(&provider, &templates, &cfg)
            .stylize_item("s-1", Task::Caption, Style::CartoonDrawing, &src)
            .unwrap();
        (report, backend)
    }

    fn stylized(r: &StylizeReport) -> &StylizedImage {
        match &r.outcome {
            StylizeOutcome::Stylized(s) => s,
            other => panic!("expected a stylized image, got {other:?}"),
        }
    }

    #[test]
    fn immediate_acceptance() {
        let (r, backend) = run(Queue::new(&[]), StylizeConfig::default());
        let s = stylized(&r);
        assert_eq!(s.attempts, 1);
        assert_eq!(s.verdict_log.len(), 1);
        assert!(s.verdict_log[0].value);
        assert_ne!(s.p_ori, s.p_sty);
        assert_eq!(backend.image_calls(), 1);
        let steps: Vec<Step> = r.transcript.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![Step::ID, Step::SI, Step::Generate, Step::IV]);
    }

    #[test]
    fn rejection_regenerates_with_the_same_prompt() {
        let (r, backend) = run(
            Queue::new(&["No, the generated image omits the counter.", "Yes."]),
            StylizeConfig::default(),
        );
        let s = stylized(&r);
        assert_eq!(s.attempts, 2);
        let values: Vec<bool> = s.verdict_log.iter().map(|v| v.value).collect();
        assert_eq!(values, vec![false, true]);
        assert_eq!(backend.image_calls(), 2);
        assert_eq!(r.transcript.iter().filter(|e| e.step == Step::SI).count(), 1);
        assert_eq!(r.transcript.iter().filter(|e| e.step == Step::ID).count(), 1);
        assert_eq!(r.transcript[3].outcome, Outcome::Rejected);
    }

    #[test]
    fn patience_exhaustion_omits() {
        let (r, backend) = run(Queue::new(&["No."; 10]), StylizeConfig::default());
        match r.outcome {
            StylizeOutcome::Omitted(o) => {
                assert_eq!(o.reason, OmitReason::PatienceExhausted);
                assert_eq!(o.failures, 10);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(backend.image_calls(), 10);
    }

    #[test]
    fn nine_failures_still_succeed() {
        let (r, _) = run(Queue::new(&["No."; 9]), StylizeConfig::default());
        assert_eq!(stylized(&r).attempts, 10);
    }

    #[test]
    fn failures_share_one_budget() {
        let q = Queue::new(&["Maybe.", "No."]);
        *q.reject_images.lock().unwrap() = 2;
        *q.empty_decompositions.lock().unwrap() = 2;
        let cfg = StylizeConfig {
            patience: 6,
            ..StylizeConfig::default()
        };
        let (r, backend) = run(q, cfg.clone());
        assert!(matches!(r.outcome, StylizeOutcome::Omitted(_)));
        assert!(backend.image_calls() <= u64::from(cfg.patience));

        let q = Queue::new(&["Maybe.", "No."]);
        *q.reject_images.lock().unwrap() = 2;
        *q.empty_decompositions.lock().unwrap() = 2;
        let (r, _) = run(
            q,
            StylizeConfig {
                patience: 7,
                ..StylizeConfig::default()
            },
        );
        assert_eq!(stylized(&r).attempts, 5);
    }

    #[test]
    fn undecodable_source_is_omitted() {
        let backend = Arc::new(ScriptedBackend::new(Queue::new(&[])));
        let provider = Provider::new(backend.clone());
        let templates = TemplateSet::builtin();
        let cfg = StylizeConfig::default();
        let r = Stylizer::new(&provider, &templates, &cfg)
            .stylize_item("bad", Task::Vqa, Style::OilPainting, b"not an image")
            .unwrap();
        assert!(matches!(
            r.outcome,
            StylizeOutcome::Omitted(Omitted {
                reason: OmitReason::UndecodableSource,
                ..
            })
        ));
        assert_eq!(backend.chat_calls(), 0);
    }

    #[test]
    fn real_photo_is_not_a_target() {
        let provider = Provider::new(Arc::new(ScriptedBackend::new(Queue::new(&[]))));
        let templates = TemplateSet::builtin();
        let cfg = StylizeConfig::default();
        let s = Stylizer::new(&provider, &templates, &cfg);
        let src = synth_png("x");
        assert!(matches!(
            s.stylize_item("x", Task::Caption, Style::RealPhoto, &src),
            Err(ProviderError::Precondition(_))
        ));
        let x = ImageAttachment::from_bytes(src).unwrap();
        assert!(matches!(
            s.inject_style(Task::Caption, Style::RealPhoto, &x, "p"),
            Err(StepError::Fatal(ProviderError::Precondition(_)))
        ));
    }

    #[test]
    fn fresh_mode_verifies_without_history() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let backend = Arc::new(ScriptedBackend::new(move |c: &ChatCall<'_>| {
            log.lock().unwrap().push(c.turns);
            Ok(if c.mentions("replicate") {
                "p".to_string()
            } else if c.mentions("change the style") {
                "q".to_string()
            } else {
                "Yes".to_string()
            })
        }));
        let provider = Provider::new(backend);
        let templates = TemplateSet::builtin();
        for (mode, turns) in [(SessionMode::Persistent, 5), (SessionMode::Fresh, 1)] {
            seen.lock().unwrap().clear();
            let cfg = StylizeConfig {
                session_mode: mode,
                ..StylizeConfig::default()
            };
            let r = Stylizer::new(&provider, &templates, &cfg)
                .stylize_item("x", Task::Ve, Style::PencilDrawing, &synth_png("y"))
                .unwrap();
            assert!(matches!(r.outcome, StylizeOutcome::Stylized(_)));
            assert_eq!(*seen.lock().unwrap(), vec![1, 3, turns]);
        }
    }

    #[test]
    fn fatal_errors_abort_the_unit() {
        let backend = Arc::new(ScriptedBackend::new(|_: &ChatCall<'_>| -> Result<String, ProviderError> {
            Err(ProviderError::Auth("bad key".into()))
        }));
        let provider = Provider::new(backend);
        let templates = TemplateSet::builtin();
        let cfg = StylizeConfig::default();
        let err = Stylizer::new(&provider, &templates, &cfg)
            .stylize_item("x", Task::Ve, Style::PencilDrawing, &synth_png("y"))
            .unwrap_err();
        assert!(matches!(err, ProviderError::Auth(_)));
    }
}
