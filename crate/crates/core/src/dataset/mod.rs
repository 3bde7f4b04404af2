//! Source corpora, assembled manifests, splitting and statistics.
//!
//! On disk a task's manifest is laid out as
//!
//! ```text
//! {root}/{task}/provenance.json
//! {root}/{task}/{style}/{split}.jsonl
//! {root}/{task}/{style}/images/{id}.{ext}
//! ```
//!
//! Each JSONL line is one [`AnnotatedRecord`]; `image_ref` is relative to
//! the `{task}/{style}/` directory.

mod manifest;
mod source;
mod split;
mod stats;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::promptkit::VeLabel;
use crate::{Split, Style, Task, YesNo};

pub use manifest::{read_manifest, write_manifest, Manifest, Provenance};
pub use source::{read_sources, SourceItem, SourcePayload, SourceSet};
pub use split::{apportion, split_by_ratio, SplitError};
pub use stats::{compute_stats, render_stats, StatsFormat, StatsReport, StatsRow};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaPair {
    pub question: String,
    pub answer: YesNo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VePair {
    pub hypothesis: String,
    pub label: VeLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaItem {
    /// Index of the source pair this item was derived from.
    pub pair: usize,
    pub q_sty: String,
    pub y_sty: YesNo,
    pub reused_original_answer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VeItem {
    pub pair: usize,
    pub h_sty: String,
    pub y_sty: VeLabel,
    pub reused_original_label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Payload {
    #[serde(rename = "cap")]
    Caption { captions_sty: Vec<String> },
    #[serde(rename = "vqa")]
    Vqa { pairs: Vec<VqaItem> },
    #[serde(rename = "ve")]
    Ve { pairs: Vec<VeItem> },
}

impl Payload {
    pub fn task(&self) -> Task {
        match self {
            Payload::Caption { .. } => Task::Caption,
            Payload::Vqa { .. } => Task::Vqa,
            Payload::Ve { .. } => Task::Ve,
        }
    }

    /// Captions, questions or hypotheses carried by the record.
    pub fn unit_count(&self) -> usize {
        match self {
            Payload::Caption { captions_sty } => captions_sty.len(),
            Payload::Vqa { pairs } => pairs.len(),
            Payload::Ve { pairs } => pairs.len(),
        }
    }

    /// The untouched original annotation, as carried by real-photo records.
    pub fn from_source(src: &SourcePayload) -> Self {
        match src {
            SourcePayload::Caption { captions } => Payload::Caption {
                captions_sty: captions.clone(),
            },
            SourcePayload::Vqa { pairs } => Payload::Vqa {
                pairs: pairs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| VqaItem {
                        pair: i,
                        q_sty: p.question.clone(),
                        y_sty: p.answer,
                        reused_original_answer: true,
                    })
                    .collect(),
            },
            SourcePayload::Ve { pairs } => Payload::Ve {
                pairs: pairs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| VeItem {
                        pair: i,
                        h_sty: p.hypothesis.clone(),
                        y_sty: p.label,
                        reused_original_label: true,
                    })
                    .collect(),
            },
        }
    }
}

/// One finished record of a stylized (or real-photo) dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedRecord {
    pub source_id: String,
    pub style: Style,
    pub split: Split,
    pub task: Task,
    pub image_ref: String,
    pub payload: Payload,
}

/// A problem with one record of a JSONL file, located as precisely as known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub file: String,
    pub line: Option<usize>,
    pub source_id: Option<String>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(id) = &self.source_id {
            write!(f, ": record `{id}`")?;
        }
        if let Some(field) = &self.field {
            write!(f, ": field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for RecordError {}
