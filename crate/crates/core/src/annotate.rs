//! Carrying labels over to a stylized image.
//!
//! Captions are rewritten for the stylized image in one call. Each VQA or
//! VE pair is verified against the stylized image; a pair that no longer
//! holds is re-annotated, one that does keeps its original label. Every
//! emitted question or hypothesis is paraphrased. Patience is counted per
//! caption record and per pair; a pair that runs out is dropped, and a
//! record left without pairs is dropped with it.

use serde::{Deserialize, Serialize};

pub use crate::exchange::{OmitReason, Omitted, StepError};

use crate::dataset::{Payload, QaPair, SourcePayload, VeItem, VePair, VqaItem};
use crate::exchange::{single, Budget, Exchange, Outcome, Step};
use crate::promptkit::{
    parse_caption_list, parse_prefixed, parse_ve_label, parse_verdict, parse_yes_no, render,
    Attachments, Bindings, TemplateId, TemplateSet, VeLabel, VerdictKind, VerificationVerdict,
};
use crate::provider::{ChatRequest, ImageAttachment, Provider, ProviderError, SamplingParams, DEFAULT_CHAT_MODEL};
use crate::{Style, Task, YesNo};

pub const QUESTION_PREFIX: &str = "Paraphrased Question:";
pub const HYPOTHESIS_PREFIX: &str = "Paraphrased Hypothesis:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateConfig {
    pub patience: u32,
    pub caption_count: usize,
    pub sampling: SamplingParams,
    pub transport_counts_against_patience: bool,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self {
            patience: 10,
            caption_count: 5,
            sampling: SamplingParams::for_model(DEFAULT_CHAT_MODEL),
            transport_counts_against_patience: false,
        }
    }
}

/// A transcript entry with the pair it belongs to (none for captions).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExchange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<usize>,
    #[serde(flatten)]
    pub exchange: Exchange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub pair: usize,
    pub failures: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnotateOutcome {
    Annotated(Payload),
    Omitted(Omitted),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotateReport {
    pub outcome: AnnotateOutcome,
    pub dropped_pairs: Vec<DroppedPair>,
    pub transcript: Vec<PairExchange>,
}

/// English number word for small counts, digits otherwise.
pub fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

fn numbered(lines: &[String]) -> String {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Comparison key for the repeat check: case, surrounding space and
/// trailing punctuation do not make a paraphrase.
fn same_text(a: &str, b: &str) -> bool {
    let key = |s: &str| {
        s.trim()
            .trim_end_matches(['?', '.', '!'])
            .trim()
            .to_lowercase()
    };
    key(a) == key(b)
}

fn normalize_question(q: String) -> String {
    let q = q.trim().to_string();
    if q.ends_with('?') {
        q
    } else {
        format!("{}?", q.trim_end_matches(['.', '!']).trim_end())
    }
}

fn paraphrase(prefix: &str, original: &str, reply: &str) -> Result<String, String> {
    let p = parse_prefixed(prefix, reply).map_err(|e| e.to_string())?;
    if same_text(&p, original) {
        return Err("paraphrase repeats the original".into());
    }
    Ok(p)
}

fn parsed<T>(r: Result<T, crate::promptkit::ParseError>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub struct Annotator<'a> {
    provider: &'a Provider,
    templates: &'a TemplateSet,
    cfg: &'a AnnotateConfig,
}

/// Per-record context shared by the individual steps.
struct Ctx<'b> {
    bindings: Bindings,
    x_sty: &'b ImageAttachment,
}

impl<'a> Annotator<'a> {
    pub fn new(provider: &'a Provider, templates: &'a TemplateSet, cfg: &'a AnnotateConfig) -> Self {
        Self {
            provider,
            templates,
            cfg,
        }
    }

    fn ctx<'b>(&self, task: Task, style: Style, x_sty: &'b ImageAttachment) -> Ctx<'b> {
        Ctx {
            bindings: Bindings::for_style(task, style),
            x_sty,
        }
    }

    fn request(
        &self,
        ctx: &Ctx<'_>,
        id: TemplateId,
        extra: &[(&str, &str)],
        attempt: u32,
    ) -> Result<ChatRequest, ProviderError> {
        let mut b = ctx.bindings.clone();
        for (k, v) in extra {
            b = b.set(k, *v);
        }
        let images = Attachments {
            original: None,
            stylized: Some(ctx.x_sty),
        };
        let mut req = render(self.templates.get(id), &b, &images)
            .map_err(|e| ProviderError::Precondition(e.to_string()))?;
        req.sampling = self.cfg.sampling.clone();
        req.attempt = attempt;
        Ok(req)
    }

    /// Retries one step until it parses or the budget runs out.
    fn step<T>(
        &self,
        budget: &mut Budget,
        ctx: &Ctx<'_>,
        id: TemplateId,
        extra: &[(&str, &str)],
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ProviderError> {
        let mut tries = 0;
        loop {
            if budget.exhausted() {
                return Ok(None);
            }
            let req = self.request(ctx, id, extra, tries)?;
            tries += 1;
            if let Some(v) = budget.chat(self.provider, Step::from(id), &req, &parse)? {
                return Ok(Some(v));
            }
        }
    }

    fn budget(&self) -> Budget {
        Budget::new(self.cfg.patience, self.cfg.transport_counts_against_patience)
    }

    fn once<T>(
        &self,
        ctx: &Ctx<'_>,
        id: TemplateId,
        extra: &[(&str, &str)],
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<T, StepError> {
        let req = self.request(ctx, id, extra, 0).map_err(StepError::Fatal)?;
        single(self.provider, &req, parse)
    }

    pub fn verify_answer(
        &self,
        style: Style,
        x_sty: &ImageAttachment,
        question: &str,
        answer: YesNo,
    ) -> Result<VerificationVerdict, StepError> {
        let ctx = self.ctx(Task::Vqa, style, x_sty);
        self.once(
            &ctx,
            TemplateId::AnswerVerification,
            &[("question", question), ("answer", answer.as_word())],
            |t| parsed(parse_verdict(VerdictKind::AnswerVerify, t)),
        )
    }

    pub fn reannotate_answer(&self, style: Style, x_sty: &ImageAttachment, question: &str) -> Result<YesNo, StepError> {
        let ctx = self.ctx(Task::Vqa, style, x_sty);
        self.once(&ctx, TemplateId::AnswerReannotation, &[("question", question)], |t| {
            parsed(parse_yes_no(t))
        })
    }

    pub fn paraphrase_question(&self, style: Style, x_sty: &ImageAttachment, question: &str) -> Result<String, StepError> {
        if question.trim().is_empty() {
            return Err(StepError::Fatal(ProviderError::Precondition("question is empty".into())));
        }
        let ctx = self.ctx(Task::Vqa, style, x_sty);
        self.once(&ctx, TemplateId::QuestionParaphrase, &[("question", question)], |t| {
            paraphrase(QUESTION_PREFIX, question, t).map(normalize_question)
        })
    }

    pub fn verify_ve_label(
        &self,
        style: Style,
        x_sty: &ImageAttachment,
        hypothesis: &str,
        label: VeLabel,
    ) -> Result<VerificationVerdict, StepError> {
        if hypothesis.trim().is_empty() {
            return Err(StepError::Fatal(ProviderError::Precondition("hypothesis is empty".into())));
        }
        let ctx = self.ctx(Task::Ve, style, x_sty);
        self.once(
            &ctx,
            TemplateId::LabelVerification,
            &[("hypothesis", hypothesis), ("label", label.prompt_word())],
            |t| parsed(parse_verdict(VerdictKind::LabelVerify, t)),
        )
    }

    pub fn reannotate_ve_label(&self, style: Style, x_sty: &ImageAttachment, hypothesis: &str) -> Result<VeLabel, StepError> {
        let ctx = self.ctx(Task::Ve, style, x_sty);
        self.once(&ctx, TemplateId::LabelReannotation, &[("hypothesis", hypothesis)], |t| {
            parsed(parse_ve_label(t))
        })
    }

    pub fn paraphrase_hypothesis(&self, style: Style, x_sty: &ImageAttachment, hypothesis: &str) -> Result<String, StepError> {
        if hypothesis.trim().is_empty() {
            return Err(StepError::Fatal(ProviderError::Precondition("hypothesis is empty".into())));
        }
        let ctx = self.ctx(Task::Ve, style, x_sty);
        self.once(&ctx, TemplateId::HypothesisParaphrase, &[("hypothesis", hypothesis)], |t| {
            paraphrase(HYPOTHESIS_PREFIX, hypothesis, t)
        })
    }

    /// Annotates one stylized image with the labels of its source record.
    pub fn annotate(
        &self,
        style: Style,
        x_sty: &ImageAttachment,
        source: &SourcePayload,
    ) -> Result<AnnotateReport, ProviderError> {
        if !style.is_target() {
            return Err(ProviderError::Precondition(format!("{style} is not a stylization target")));
        }
        if self.cfg.patience == 0 {
            return Err(ProviderError::Precondition("patience must be at least 1".into()));
        }
        match source {
            SourcePayload::Caption { captions } => self.annotate_caption(style, x_sty, captions),
            SourcePayload::Vqa { pairs } => self.annotate_vqa(style, x_sty, pairs),
            SourcePayload::Ve { pairs } => self.annotate_ve(style, x_sty, pairs),
        }
    }

    pub fn annotate_caption(
        &self,
        style: Style,
        x_sty: &ImageAttachment,
        captions: &[String],
    ) -> Result<AnnotateReport, ProviderError> {
        let mut budget = self.budget();
        let tag = |b: Budget| b.transcript.into_iter().map(|exchange| PairExchange { pair: None, exchange }).collect();
        if captions.len() != self.cfg.caption_count {
            budget.last_error = Some(format!(
                "record has {} captions, {} expected",
                captions.len(),
                self.cfg.caption_count
            ));
            return Ok(AnnotateReport {
                outcome: AnnotateOutcome::Omitted(budget.omitted(OmitReason::Precondition)),
                dropped_pairs: Vec::new(),
                transcript: Vec::new(),
            });
        }
        let ctx = self.ctx(Task::Caption, style, x_sty);
        let n = captions.len();
        let listed = numbered(captions);
        let count = count_word(n);
        let result = self.step(
            &mut budget,
            &ctx,
            TemplateId::CaptionParaphrase,
            &[("count", &count), ("captions", &listed)],
            |t| {
                let out = parsed(parse_caption_list(n, t))?;
                if let Some(c) = out.iter().find(|c| captions.iter().any(|o| same_text(c, o))) {
                    return Err(format!("caption repeats an original: {c}"));
                }
                Ok(out)
            },
        )?;
        let outcome = match result {
            Some(captions_sty) => AnnotateOutcome::Annotated(Payload::Caption { captions_sty }),
            None => AnnotateOutcome::Omitted(budget.omitted(OmitReason::PatienceExhausted)),
        };
        Ok(AnnotateReport {
            outcome,
            dropped_pairs: Vec::new(),
            transcript: tag(budget),
        })
    }

    /// Verify, re-annotate when the verdict is negative, paraphrase.
    /// Returns the new text and label, or `None` when the budget ran out.
    #[allow(clippy::too_many_arguments)]
    fn pair<L: Copy>(
        &self,
        budget: &mut Budget,
        ctx: &Ctx<'_>,
        ids: [TemplateId; 3],
        kind: VerdictKind,
        text_key: &str,
        text: &str,
        label: (&str, &str, L),
        reannotate: impl Fn(&str) -> Result<L, String>,
        rephrase: impl Fn(&str) -> Result<String, String>,
    ) -> Result<Option<(String, L, bool)>, ProviderError> {
        let [verify_id, reannotate_id, paraphrase_id] = ids;
        let (label_key, label_word, original) = label;
        let Some(verdict) = self.step(
            budget,
            ctx,
            verify_id,
            &[(text_key, text), (label_key, label_word)],
            |t| parsed(parse_verdict(kind, t)),
        )?
        else {
            return Ok(None);
        };
        budget.set_verdict(verdict.value, false);
        let y = if verdict.value {
            original
        } else {
            match self.step(budget, ctx, reannotate_id, &[(text_key, text)], &reannotate)? {
                Some(y) => y,
                None => return Ok(None),
            }
        };
        let Some(new_text) = self.step(budget, ctx, paraphrase_id, &[(text_key, text)], &rephrase)? else {
            return Ok(None);
        };
        Ok(Some((new_text, y, verdict.value)))
    }

    fn finish<T>(
        items: Vec<T>,
        dropped: Vec<DroppedPair>,
        transcript: Vec<PairExchange>,
        wrap: impl FnOnce(Vec<T>) -> Payload,
    ) -> AnnotateReport {
        let outcome = if items.is_empty() {
            AnnotateOutcome::Omitted(Omitted {
                reason: OmitReason::AllPairsDropped,
                failures: dropped.iter().map(|d| d.failures).sum(),
                last_error: dropped.last().and_then(|d| d.last_error.clone()),
            })
        } else {
            AnnotateOutcome::Annotated(wrap(items))
        };
        AnnotateReport {
            outcome,
            dropped_pairs: dropped,
            transcript,
        }
    }

    pub fn annotate_vqa(
        &self,
        style: Style,
        x_sty: &ImageAttachment,
        pairs: &[QaPair],
    ) -> Result<AnnotateReport, ProviderError> {
        let ctx = self.ctx(Task::Vqa, style, x_sty);
        let mut items = Vec::new();
        let mut dropped = Vec::new();
        let mut transcript = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            let mut budget = self.budget();
            let out = self.pair(
                &mut budget,
                &ctx,
                [
                    TemplateId::AnswerVerification,
                    TemplateId::AnswerReannotation,
                    TemplateId::QuestionParaphrase,
                ],
                VerdictKind::AnswerVerify,
                "question",
                &p.question,
                ("answer", p.answer.as_word(), p.answer),
                |t| parsed(parse_yes_no(t)),
                |t| paraphrase(QUESTION_PREFIX, &p.question, t).map(normalize_question),
            )?;
            match out {
                Some((q_sty, y_sty, reused)) => items.push(VqaItem {
                    pair: i,
                    q_sty,
                    y_sty,
                    reused_original_answer: reused,
                }),
                None => dropped.push(DroppedPair {
                    pair: i,
                    failures: budget.failures,
                    last_error: budget.last_error.clone(),
                }),
            }
            transcript.extend(budget.transcript.into_iter().map(|exchange| PairExchange {
                pair: Some(i),
                exchange,
            }));
        }
        Ok(Self::finish(items, dropped, transcript, |pairs| Payload::Vqa { pairs }))
    }

    pub fn annotate_ve(
        &self,
        style: Style,
        x_sty: &ImageAttachment,
        pairs: &[VePair],
    ) -> Result<AnnotateReport, ProviderError> {
        let ctx = self.ctx(Task::Ve, style, x_sty);
        let mut items = Vec::new();
        let mut dropped = Vec::new();
        let mut transcript = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            let mut budget = self.budget();
            let out = self.pair(
                &mut budget,
                &ctx,
                [
                    TemplateId::LabelVerification,
                    TemplateId::LabelReannotation,
                    TemplateId::HypothesisParaphrase,
                ],
                VerdictKind::LabelVerify,
                "hypothesis",
                &p.hypothesis,
                ("label", p.label.prompt_word(), p.label),
                |t| parsed(parse_ve_label(t)),
                |t| paraphrase(HYPOTHESIS_PREFIX, &p.hypothesis, t),
            )?;
            match out {
                Some((h_sty, y_sty, reused)) => items.push(VeItem {
                    pair: i,
                    h_sty,
                    y_sty,
                    reused_original_label: reused,
                }),
                None => dropped.push(DroppedPair {
                    pair: i,
                    failures: budget.failures,
                    last_error: budget.last_error.clone(),
                }),
            }
            transcript.extend(budget.transcript.into_iter().map(|exchange| PairExchange {
                pair: Some(i),
                exchange,
            }));
        }
        Ok(Self::finish(items, dropped, transcript, |pairs| Payload::Ve { pairs }))
    }
}

fn succeeded(e: &PairExchange) -> bool {
    e.exchange.outcome == Outcome::Ok
}

/// A broken rule found by [`audit`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditViolation {
    pub pair: Option<usize>,
    pub message: String,
}

/// Checks one record's transcript against the branch rules: a pair is
/// re-annotated exactly when its verification was negative, kept exactly
/// when it was positive, and every emitted pair went through exactly one
/// successful paraphrase. Emitted plus dropped pairs must cover the source.
pub fn audit(
    source: &SourcePayload,
    payload: Option<&Payload>,
    dropped: &[usize],
    transcript: &[PairExchange],
) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let mut violation = |pair: Option<usize>, message: String| out.push(AuditViolation { pair, message });

    if let SourcePayload::Caption { .. } = source {
        let cp = transcript.iter().filter(|e| e.exchange.step == Step::CP).filter(|e| succeeded(e)).count();
        let expected = usize::from(payload.is_some());
        if cp != expected {
            violation(None, format!("{cp} successful caption calls, expected {expected}"));
        }
        return out;
    }

    let (verify, reannotate, rephrase) = match source {
        SourcePayload::Vqa { .. } => (Step::AV, Step::AR, Step::QP),
        _ => (Step::LV, Step::LR, Step::HP),
    };
    let emitted: Vec<(usize, bool)> = match payload {
        Some(Payload::Vqa { pairs }) => pairs.iter().map(|p| (p.pair, p.reused_original_answer)).collect(),
        Some(Payload::Ve { pairs }) => pairs.iter().map(|p| (p.pair, p.reused_original_label)).collect(),
        _ => Vec::new(),
    };
    let n = source.unit_count();
    let mut covered: Vec<usize> = emitted.iter().map(|(i, _)| *i).chain(dropped.iter().copied()).collect();
    covered.sort_unstable();
    if covered != (0..n).collect::<Vec<_>>() {
        violation(None, format!("emitted and dropped pairs {covered:?} do not cover 0..{n}"));
    }

    for i in 0..n {
        let calls: Vec<&PairExchange> = transcript.iter().filter(|e| e.pair == Some(i)).collect();
        let verdicts: Vec<bool> = calls
            .iter()
            .filter(|e| e.exchange.step == verify)
            .filter_map(|e| e.exchange.verdict)
            .collect();
        if verdicts.len() > 1 {
            violation(Some(i), format!("{} verification verdicts", verdicts.len()));
        }
        let verdict = verdicts.first().copied();
        let reannotations = calls.iter().filter(|e| e.exchange.step == reannotate).count();
        let good_reannotations = calls.iter().filter(|e| e.exchange.step == reannotate).filter(|e| succeeded(e)).count();
        if reannotations > 0 && verdict != Some(false) {
            violation(Some(i), format!("re-annotated although the verdict was {verdict:?}"));
        }
        let paraphrases = calls.iter().filter(|e| e.exchange.step == rephrase).filter(|e| succeeded(e)).count();
        match emitted.iter().find(|(p, _)| *p == i) {
            Some(&(_, reused)) => {
                if verdict != Some(reused) {
                    violation(Some(i), format!("reuse flag {reused} disagrees with verdict {verdict:?}"));
                }
                if verdict == Some(false) && good_reannotations != 1 {
                    violation(Some(i), format!("{good_reannotations} successful re-annotations after a negative verdict"));
                }
                if paraphrases != 1 {
                    violation(Some(i), format!("{paraphrases} successful paraphrase calls"));
                }
            }
            None => {
                if paraphrases > 0 {
                    violation(Some(i), "dropped pair has a successful paraphrase".into());
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::scripted::{synth_png, ChatCall, ScriptedBackend};
    use std::sync::Arc;

    fn fixture() -> ImageAttachment {
        ImageAttachment::from_bytes(synth_png("stylized")).unwrap()
    }

    fn with<F>(script: F, f: impl FnOnce(&Annotator<'_>))
    where
        F: Fn(&ChatCall<'_>) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        let provider = Provider::new(Arc::new(ScriptedBackend::new(script)));
        let templates = TemplateSet::builtin();
        let cfg = AnnotateConfig::default();
        f(&Annotator::new(&provider, &templates, &cfg));
    }

    fn is(c: &ChatCall<'_>, step: &str) -> bool {
        match step {
            "AV" => c.mentions("question and answer pair"),
            "AR" => c.mentions("Please answer the question"),
            "QP" => c.mentions("paraphrase the question"),
            "LV" => c.mentions("hypothesis pair and its label"),
            "LR" => c.mentions("Does the given hypothesis entail"),
            "HP" => c.mentions("paraphrase the hypothesis"),
            "CP" => c.mentions("captions of the generated"),
            _ => false,
        }
    }

    #[test]
    fn count_words() {
        assert_eq!(count_word(5), "five");
        assert_eq!(count_word(12), "12");
    }

    #[test]
    fn negative_verdict_reannotates() {
        with(
            |c| {
                Ok(if is(c, "AV") {
                    "No, the question and answer pair is not correct.".into()
                } else if is(c, "AR") {
                    "No, the person in the generated image is not wearing a hat.".into()
                } else {
                    "Paraphrased Question: Is the individual wearing a hat".into()
                })
            },
            |a| {
                let r = a
                    .annotate_vqa(
                        Style::CartoonDrawing,
                        &fixture(),
                        &[QaPair {
                            question: "Is the person wearing a hat?".into(),
                            answer: YesNo::Yes,
                        }],
                    )
                    .unwrap();
                let AnnotateOutcome::Annotated(Payload::Vqa { pairs }) = &r.outcome else { panic!("{r:?}") };
                assert_eq!(
                    pairs[0],
                    VqaItem {
                        pair: 0,
                        q_sty: "Is the individual wearing a hat?".into(),
                        y_sty: YesNo::No,
                        reused_original_answer: false
                    }
                );
                let steps: Vec<Step> = r.transcript.iter().map(|e| e.exchange.step).collect();
                assert_eq!(steps, vec![Step::AV, Step::AR, Step::QP]);
                let payload = match &r.outcome {
                    AnnotateOutcome::Annotated(p) => Some(p),
                    _ => None,
                };
                let src = SourcePayload::Vqa {
                    pairs: vec![QaPair {
                        question: "Is the person wearing a hat?".into(),
                        answer: YesNo::Yes,
                    }],
                };
                assert!(audit(&src, payload, &[], &r.transcript).is_empty());
            },
        );
    }

    #[test]
    fn positive_verdict_keeps_label_and_still_paraphrases() {
        with(
            |c| {
                Ok(if is(c, "LV") {
                    "Yes, the label is correct.".into()
                } else {
                    "Paraphrased Hypothesis: Grown-ups are tossing a frisbee around.".into()
                })
            },
            |a| {
                let src = [VePair {
                    hypothesis: "Adults are playing frisbee".into(),
                    label: VeLabel::Contradiction,
                }];
                let r = a.annotate_ve(Style::OilPainting, &fixture(), &src).unwrap();
                let AnnotateOutcome::Annotated(Payload::Ve { pairs }) = &r.outcome else { panic!() };
                assert_eq!(pairs[0].y_sty, VeLabel::Contradiction);
                assert!(pairs[0].reused_original_label);
                assert_eq!(pairs[0].h_sty, "Grown-ups are tossing a frisbee around.");
                assert!(!r.transcript.iter().any(|e| e.exchange.step == Step::LR));
            },
        );
    }

    #[test]
    fn exhausted_pair_is_dropped_and_empty_record_omitted() {
        with(
            |c| Ok(if is(c, "AV") { "It depends.".into() } else { "x".into() }),
            |a| {
                let src = [QaPair {
                    question: "Is it?".into(),
                    answer: YesNo::No,
                }];
                let r = a.annotate_vqa(Style::PencilDrawing, &fixture(), &src).unwrap();
                assert!(matches!(
                    r.outcome,
                    AnnotateOutcome::Omitted(Omitted {
                        reason: OmitReason::AllPairsDropped,
                        failures: 10,
                        ..
                    })
                ));
                assert_eq!(r.dropped_pairs.len(), 1);
                assert_eq!(r.transcript.len(), 10);
                assert!(audit(&SourcePayload::Vqa { pairs: src.to_vec() }, None, &[0], &r.transcript).is_empty());
            },
        );
    }

    #[test]
    fn repeated_paraphrase_counts_as_failure() {
        with(
            |c| {
                Ok(if is(c, "AV") {
                    "Yes".into()
                } else if c.attempt == 0 {
                    "Paraphrased Question: is it red".into()
                } else {
                    "Paraphrased Question: Is the object red?".into()
                })
            },
            |a| {
                let r = a
                    .annotate_vqa(
                        Style::PencilDrawing,
                        &fixture(),
                        &[QaPair {
                            question: "Is it red?".into(),
                            answer: YesNo::Yes,
                        }],
                    )
                    .unwrap();
                let AnnotateOutcome::Annotated(Payload::Vqa { pairs }) = &r.outcome else { panic!() };
                assert_eq!(pairs[0].q_sty, "Is the object red?");
                assert_eq!(r.transcript[1].exchange.outcome, Outcome::ParseError);
            },
        );
    }

    #[test]
    fn captions_need_the_configured_count() {
        with(
            |c| {
                assert!(is(c, "CP"));
                assert!(c.mentions("generate five captions"));
                assert!(c.mentions("1. a\n2. b"));
                Ok("Here:\n1. A1\n2. B1\n3. C1\n4. D1\n5. E1".into())
            },
            |a| {
                let five: Vec<String> = ["a", "b", "c", "d", "e"].map(String::from).to_vec();
                let r = a.annotate_caption(Style::CartoonDrawing, &fixture(), &five).unwrap();
                assert!(matches!(r.outcome, AnnotateOutcome::Annotated(Payload::Caption { ref captions_sty }) if captions_sty.len() == 5));
                let r = a.annotate_caption(Style::CartoonDrawing, &fixture(), &five[..4]).unwrap();
                assert!(matches!(
                    r.outcome,
                    AnnotateOutcome::Omitted(Omitted {
                        reason: OmitReason::Precondition,
                        ..
                    })
                ));
            },
        );
    }

    #[test]
    fn single_steps() {
        with(
            |c| {
                Ok(if is(c, "AR") {
                    "Yes, clearly.".into()
                } else if is(c, "LR") {
                    "False. The scene shows a beach.".into()
                } else if is(c, "QP") {
                    "Did he strike the ball?".into()
                } else {
                    "It depends.".into()
                })
            },
            |a| {
                let x = fixture();
                assert_eq!(a.reannotate_answer(Style::OilPainting, &x, "q?").unwrap(), YesNo::Yes);
                assert_eq!(
                    a.reannotate_ve_label(Style::OilPainting, &x, "h").unwrap(),
                    VeLabel::Contradiction
                );
                assert_eq!(
                    a.paraphrase_question(Style::OilPainting, &x, "Did he hit that ball?").unwrap(),
                    "Did he strike the ball?"
                );
                assert!(matches!(
                    a.verify_answer(Style::OilPainting, &x, "q?", YesNo::No),
                    Err(StepError::Semantic(_))
                ));
                assert!(matches!(
                    a.verify_ve_label(Style::OilPainting, &x, " ", VeLabel::Neutral),
                    Err(StepError::Fatal(ProviderError::Precondition(_)))
                ));
            },
        );
    }

    #[test]
    fn audit_flags_broken_branches() {
        let src = SourcePayload::Vqa {
            pairs: vec![QaPair {
                question: "q?".into(),
                answer: YesNo::Yes,
            }],
        };
        let entry = |step, outcome, verdict| PairExchange {
            pair: Some(0),
            exchange: Exchange {
                step,
                attempt: 0,
                digest: String::new(),
                outcome,
                verdict,
                detail: None,
            },
        };
        let kept = Payload::Vqa {
            pairs: vec![VqaItem {
                pair: 0,
                q_sty: "p?".into(),
                y_sty: YesNo::Yes,
                reused_original_answer: true,
            }],
        };
        let t = vec![
            entry(Step::AV, Outcome::Ok, Some(true)),
            entry(Step::AR, Outcome::Ok, None),
            entry(Step::QP, Outcome::Ok, None),
        ];
        assert_eq!(audit(&src, Some(&kept), &[], &t).len(), 1);
        let t = vec![entry(Step::AV, Outcome::Ok, Some(true))];
        assert_eq!(audit(&src, Some(&kept), &[], &t).len(), 1);
        assert_eq!(audit(&src, None, &[], &[]).len(), 1);
    }
}
