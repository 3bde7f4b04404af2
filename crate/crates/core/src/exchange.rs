//! Per-call transcript entries shared by the stylize and annotate loops.

use serde::{Deserialize, Serialize};

use crate::promptkit::TemplateId;
use crate::provider::{ChatRequest, FailureClass, Provider, ProviderError};

/// Which prompt (or the image generator) a call went to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    ID,
    SI,
    #[serde(rename = "GEN")]
    Generate,
    IV,
    CP,
    AV,
    AR,
    QP,
    LV,
    LR,
    HP,
}

impl From<TemplateId> for Step {
    fn from(id: TemplateId) -> Self {
        match id {
            TemplateId::ImageDecomposition => Step::ID,
            TemplateId::StyleInjection => Step::SI,
            TemplateId::ImageVerification => Step::IV,
            TemplateId::CaptionParaphrase => Step::CP,
            TemplateId::AnswerVerification => Step::AV,
            TemplateId::AnswerReannotation => Step::AR,
            TemplateId::QuestionParaphrase => Step::QP,
            TemplateId::LabelVerification => Step::LV,
            TemplateId::LabelReannotation => Step::LR,
            TemplateId::HypothesisParaphrase => Step::HP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    /// Parsed verdict was negative.
    Rejected,
    ParseError,
    ProviderError,
}

/// One provider call made on behalf of a unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub step: Step,
    pub attempt: u32,
    pub digest: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Why a unit (an image, a record or a pair) produced no output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmitReason {
    PatienceExhausted,
    UndecodableSource,
    Precondition,
    AllPairsDropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Omitted {
    pub reason: OmitReason,
    pub failures: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

/// A single call failed: either it counts against patience or it aborts.
#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error("{0}")]
    Semantic(String),
    #[error(transparent)]
    Fatal(ProviderError),
}

/// Failure accounting for one unit under a patience budget.
#[derive(Debug)]
pub(crate) struct Budget {
    pub patience: u32,
    pub failures: u32,
    pub transport_counts: bool,
    pub last_error: Option<String>,
    pub transcript: Vec<Exchange>,
}

impl Budget {
    pub fn new(patience: u32, transport_counts: bool) -> Self {
        Self {
            patience,
            failures: 0,
            transport_counts,
            last_error: None,
            transcript: Vec::new(),
        }
    }

    pub fn exhausted(&self) -> bool {
        self.failures >= self.patience
    }

    pub fn fail(&mut self, why: String) {
        self.failures += 1;
        self.last_error = Some(why);
    }

    pub fn log(&mut self, step: Step, attempt: u32, digest: String, outcome: Outcome, verdict: Option<bool>, detail: Option<String>) {
        self.transcript.push(Exchange {
            step,
            attempt,
            digest,
            outcome,
            verdict,
            detail,
        });
    }

    /// Records a failed provider call. Failures that count against patience
    /// are absorbed; the rest are handed back to abort the unit.
    pub fn provider_failure(
        &mut self,
        step: Step,
        attempt: u32,
        digest: String,
        err: ProviderError,
    ) -> Result<(), ProviderError> {
        let counts = match err.class() {
            FailureClass::Semantic => true,
            FailureClass::Transient => self.transport_counts,
            FailureClass::Fatal => false,
        };
        self.log(step, attempt, digest, Outcome::ProviderError, None, Some(err.to_string()));
        if counts {
            self.fail(err.to_string());
            Ok(())
        } else {
            Err(err)
        }
    }
}

impl Budget {
    pub fn omitted(&self, reason: OmitReason) -> Omitted {
        Omitted {
            reason,
            failures: self.failures,
            last_error: self.last_error.clone(),
        }
    }

    /// Runs one chat call, logs it, and folds failures into the budget.
    /// `Ok(None)` means the attempt failed and counted against patience.
    pub fn chat<T>(
        &mut self,
        provider: &Provider,
        step: Step,
        req: &ChatRequest,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ProviderError> {
        let digest = req.digest().to_hex();
        let text = match provider.chat(req).and_then(|r| r.into_text()) {
            Ok(t) => t,
            Err(e) => {
                self.provider_failure(step, req.attempt, digest, e)?;
                return Ok(None);
            }
        };
        match parse(&text) {
            Ok(v) => {
                self.log(step, req.attempt, digest, Outcome::Ok, None, None);
                Ok(Some(v))
            }
            Err(why) => {
                self.log(step, req.attempt, digest, Outcome::ParseError, None, Some(why.clone()));
                self.fail(why);
                Ok(None)
            }
        }
    }

    /// Marks the verdict of the most recent exchange.
    pub fn set_verdict(&mut self, value: bool, rejected: bool) {
        if let Some(last) = self.transcript.last_mut() {
            last.verdict = Some(value);
            if rejected {
                last.outcome = Outcome::Rejected;
            }
        }
    }
}

/// One call outside any budget, for the single-step operations.
pub(crate) fn single<T>(
    provider: &Provider,
    req: &ChatRequest,
    parse: impl FnOnce(&str) -> Result<T, String>,
) -> Result<T, StepError> {
    let text = provider
        .chat(req)
        .and_then(|r| r.into_text())
        .map_err(|e| match e.class() {
            FailureClass::Semantic => StepError::Semantic(e.to_string()),
            _ => StepError::Fatal(e),
        })?;
    parse(&text).map_err(StepError::Semantic)
}
