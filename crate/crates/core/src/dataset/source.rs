use std::collections::HashSet;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{QaPair, RecordError, VePair};
use crate::{Split, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum SourcePayload {
    #[serde(rename = "cap")]
    Caption { captions: Vec<String> },
    #[serde(rename = "vqa")]
    Vqa { pairs: Vec<QaPair> },
    #[serde(rename = "ve")]
    Ve { pairs: Vec<VePair> },
}

impl SourcePayload {
    pub fn task(&self) -> Task {
        match self {
            SourcePayload::Caption { .. } => Task::Caption,
            SourcePayload::Vqa { .. } => Task::Vqa,
            SourcePayload::Ve { .. } => Task::Ve,
        }
    }

    pub fn unit_count(&self) -> usize {
        match self {
            SourcePayload::Caption { captions } => captions.len(),
            SourcePayload::Vqa { pairs } => pairs.len(),
            SourcePayload::Ve { pairs } => pairs.len(),
        }
    }
}

/// One original record: an image file plus its task annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceItem {
    pub id: String,
    /// Image path relative to the manifest's directory.
    pub image: String,
    pub task: Task,
    pub split: Split,
    pub payload: SourcePayload,
}

fn is_relative_inside(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty()
        && p.components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl SourceItem {
    /// Checks the record's own invariants; the error names the failing field.
    pub fn check(&self) -> Result<(), (String, String)> {
        let err = |field: &str, msg: &str| Err((field.to_string(), msg.to_string()));
        if self.id.trim().is_empty() {
            return err("id", "must not be empty");
        }
        if self.id.contains(['/', '\\']) || self.id.starts_with('.') {
            return err("id", "must be usable as a file name");
        }
        if !is_relative_inside(&self.image) {
            return err("image", "must be a relative path inside the manifest directory");
        }
        if self.payload.task() != self.task {
            return err("payload.kind", &format!("does not match task `{}`", self.task));
        }
        match &self.payload {
            SourcePayload::Caption { captions } => {
                if captions.is_empty() {
                    return err("payload.captions", "must not be empty");
                }
                if let Some(i) = captions.iter().position(|c| c.trim().is_empty()) {
                    return err(&format!("payload.captions[{i}]"), "must not be blank");
                }
            }
            SourcePayload::Vqa { pairs } => {
                if pairs.is_empty() {
                    return err("payload.pairs", "must not be empty");
                }
                if let Some(i) = pairs.iter().position(|p| p.question.trim().is_empty()) {
                    return err(&format!("payload.pairs[{i}].question"), "must not be blank");
                }
            }
            SourcePayload::Ve { pairs } => {
                if pairs.is_empty() {
                    return err("payload.pairs", "must not be empty");
                }
                if let Some(i) = pairs.iter().position(|p| p.hypothesis.trim().is_empty()) {
                    return err(&format!("payload.pairs[{i}].hypothesis"), "must not be blank");
                }
            }
        }
        Ok(())
    }
}

/// A validated source manifest.
#[derive(Debug, Clone)]
pub struct SourceSet {
    pub path: PathBuf,
    pub task: Task,
    pub items: Vec<SourceItem>,
    /// SHA-256 of the manifest file, hex.
    pub sha256: String,
}

impl SourceSet {
    pub fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn image_path(&self, item: &SourceItem) -> PathBuf {
        self.base_dir().join(&item.image)
    }

    pub fn get(&self, id: &str) -> Option<&SourceItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Items whose image file is missing.
    pub fn missing_images(&self) -> Vec<&SourceItem> {
        self.items
            .iter()
            .filter(|i| !self.image_path(i).is_file())
            .collect()
    }

    /// Parses and validates manifest text. Blank lines are skipped.
    pub fn parse(path: &Path, text: &str) -> Result<Self, RecordError> {
        let file = path.display().to_string();
        let error = |line: Option<usize>, id: Option<&str>, field: Option<String>, message: String| RecordError {
            file: file.clone(),
            line,
            source_id: id.map(str::to_string),
            field,
            message,
        };
        let mut items: Vec<SourceItem> = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let item: SourceItem = serde_json::from_str(line)
                .map_err(|e| error(Some(lineno), None, None, format!("invalid record: {e}")))?;
            item.check()
                .map_err(|(field, msg)| error(Some(lineno), Some(&item.id), Some(field), msg))?;
            if !seen.insert(item.id.clone()) {
                return Err(error(Some(lineno), Some(&item.id), Some("id".into()), "duplicate id".into()));
            }
            if let Some(first) = items.first() {
                if first.task != item.task {
                    return Err(error(
                        Some(lineno),
                        Some(&item.id),
                        Some("task".into()),
                        format!("manifest mixes tasks `{}` and `{}`", first.task, item.task),
                    ));
                }
            }
            items.push(item);
        }
        let Some(task) = items.first().map(|i| i.task) else {
            return Err(error(None, None, None, "manifest has no records".into()));
        };
        Ok(Self {
            path: path.to_path_buf(),
            task,
            items,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }
}

pub fn read_sources(path: &Path) -> Result<SourceSet, RecordError> {
    let text = std::fs::read_to_string(path).map_err(|e| RecordError {
        file: path.display().to_string(),
        line: None,
        source_id: None,
        field: None,
        message: e.to_string(),
    })?;
    SourceSet::parse(path, &text)
}
