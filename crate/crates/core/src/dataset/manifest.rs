use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotatedRecord, Payload, RecordError, SCHEMA_VERSION};
use crate::fsutil::{jsonl, write_atomic};
use crate::{Split, Style, Task};

/// What produced a manifest. Deliberately free of timestamps so that
/// re-assembling the same run gives identical bytes; wall-clock times live
/// in the run report instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub schema_version: u32,
    pub task: Task,
    /// Styles present in the manifest, real photos included.
    pub styles: Vec<Style>,
    pub source_sha256: String,
    pub template_versions: BTreeMap<String, u32>,
    pub chat_model: String,
    pub image_model: String,
    pub patience: u32,
    pub caption_count: usize,
    pub session_mode: String,
    /// Per style: source items with no record (omitted or all pairs dropped).
    pub omitted_items: BTreeMap<Style, usize>,
    /// Per style: VQA / VE pairs dropped from otherwise emitted records.
    pub dropped_pairs: BTreeMap<Style, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub task: Task,
    pub records: Vec<AnnotatedRecord>,
    pub provenance: Provenance,
}

fn split_file(root: &Path, task: Task, style: Style, split: Split) -> PathBuf {
    root.join(task.as_str())
        .join(style.as_str())
        .join(format!("{}.jsonl", split.as_str()))
}

fn err(file: &Path, line: Option<usize>, id: Option<&str>, field: Option<&str>, message: impl Into<String>) -> RecordError {
    RecordError {
        file: file.display().to_string(),
        line,
        source_id: id.map(str::to_string),
        field: field.map(str::to_string),
        message: message.into(),
    }
}

fn check_payload(p: &Payload) -> Result<(), (String, &'static str)> {
    let blank = |s: &String| s.trim().is_empty();
    match p {
        Payload::Caption { captions_sty } => {
            if captions_sty.is_empty() {
                return Err(("payload.captions_sty".into(), "must not be empty"));
            }
            if let Some(i) = captions_sty.iter().position(blank) {
                return Err((format!("payload.captions_sty[{i}]"), "must not be blank"));
            }
        }
        Payload::Vqa { pairs } => {
            if pairs.is_empty() {
                return Err(("payload.pairs".into(), "must not be empty"));
            }
            if let Some(i) = pairs.iter().position(|p| blank(&p.q_sty)) {
                return Err((format!("payload.pairs[{i}].q_sty"), "must not be blank"));
            }
        }
        Payload::Ve { pairs } => {
            if pairs.is_empty() {
                return Err(("payload.pairs".into(), "must not be empty"));
            }
            if let Some(i) = pairs.iter().position(|p| blank(&p.h_sty)) {
                return Err((format!("payload.pairs[{i}].h_sty"), "must not be blank"));
            }
        }
    }
    Ok(())
}

impl Manifest {
    /// Checks every manifest invariant; image references are resolved
    /// against `root`.
    pub fn validate(&self, root: &Path) -> Result<(), RecordError> {
        let prov = root.join(self.task.as_str()).join("provenance.json");
        if self.provenance.task != self.task {
            return Err(err(&prov, None, None, Some("task"), "does not match the manifest task"));
        }
        let mut seen = HashSet::new();
        for r in &self.records {
            let file = split_file(root, self.task, r.style, r.split);
            let fail = |field: &str, msg: &str| err(&file, None, Some(&r.source_id), Some(field), msg);
            if r.task != self.task {
                return Err(fail("task", "does not match the manifest task"));
            }
            if !self.provenance.styles.contains(&r.style) {
                return Err(fail("style", "is not listed in the provenance"));
            }
            if r.payload.task() != r.task {
                return Err(fail("payload.kind", "does not match task"));
            }
            if r.source_id.trim().is_empty() {
                return Err(fail("source_id", "must not be empty"));
            }
            if !seen.insert((r.source_id.as_str(), r.style)) {
                return Err(fail("source_id", "duplicate (source_id, style)"));
            }
            check_payload(&r.payload).map_err(|(field, msg)| fail(&field, msg))?;
            let image = root.join(self.task.as_str()).join(r.style.as_str()).join(&r.image_ref);
            if r.image_ref.is_empty() || !image.is_file() {
                return Err(fail("image_ref", &format!("does not resolve ({})", image.display())));
            }
        }
        Ok(())
    }
}

/// Writes the JSONL files and provenance of a valid manifest. Records are
/// sorted by source id within each file.
pub fn write_manifest(root: &Path, m: &Manifest) -> Result<(), RecordError> {
    m.validate(root)?;
    let io = |path: &Path, e: std::io::Error| err(path, None, None, None, e.to_string());
    let mut files: BTreeMap<(Style, Split), Vec<&AnnotatedRecord>> = BTreeMap::new();
    for style in &m.provenance.styles {
        for split in Split::ALL {
            files.insert((*style, split), Vec::new());
        }
    }
    for r in &m.records {
        files.entry((r.style, r.split)).or_default().push(r);
    }
    for ((style, split), mut records) in files {
        records.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        let path = split_file(root, m.task, style, split);
        write_atomic(&path, jsonl(records).as_bytes()).map_err(|e| io(&path, e))?;
    }
    let prov = root.join(m.task.as_str()).join("provenance.json");
    let mut text = serde_json::to_string_pretty(&m.provenance).expect("provenance serializes");
    text.push('\n');
    write_atomic(&prov, text.as_bytes()).map_err(|e| io(&prov, e))
}

/// Reads and validates the manifest of `task` under `root`.
pub fn read_manifest(root: &Path, task: Task) -> Result<Manifest, RecordError> {
    let prov_path = root.join(task.as_str()).join("provenance.json");
    let text = std::fs::read_to_string(&prov_path).map_err(|e| err(&prov_path, None, None, None, e.to_string()))?;
    let provenance: Provenance =
        serde_json::from_str(&text).map_err(|e| err(&prov_path, None, None, None, format!("invalid provenance: {e}")))?;
    if provenance.schema_version != SCHEMA_VERSION {
        return Err(err(
            &prov_path,
            None,
            None,
            Some("schema_version"),
            format!("unsupported version {}", provenance.schema_version),
        ));
    }
    let mut records = Vec::new();
    for &style in &provenance.styles {
        for split in Split::ALL {
            let path = split_file(root, task, style, split);
            let text = std::fs::read_to_string(&path).map_err(|e| err(&path, None, None, None, e.to_string()))?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let r: AnnotatedRecord = serde_json::from_str(line)
                    .map_err(|e| err(&path, Some(n + 1), None, None, format!("invalid record: {e}")))?;
                let at = |field: &str, expected: &str| {
                    err(&path, Some(n + 1), Some(&r.source_id), Some(field), format!("expected `{expected}` for this file"))
                };
                if r.style != style {
                    return Err(at("style", style.as_str()));
                }
                if r.split != split {
                    return Err(at("split", split.as_str()));
                }
                if r.task != task {
                    return Err(at("task", task.as_str()));
                }
                records.push(r);
            }
        }
    }
    let m = Manifest {
        task,
        records,
        provenance,
    };
    m.validate(root)?;
    Ok(m)
}
