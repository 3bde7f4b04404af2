use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::promptkit::Style;
use crate::provider::{ChatRequest, ImageAttachment, Part, SamplingParams, Turn};
use crate::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "ID")]
    ImageDecomposition,
    #[serde(rename = "SI")]
    StyleInjection,
    #[serde(rename = "IV")]
    ImageVerification,
    #[serde(rename = "CP")]
    CaptionParaphrase,
    #[serde(rename = "AV")]
    AnswerVerification,
    #[serde(rename = "AR")]
    AnswerReannotation,
    #[serde(rename = "QP")]
    QuestionParaphrase,
    #[serde(rename = "LV")]
    LabelVerification,
    #[serde(rename = "LR")]
    LabelReannotation,
    #[serde(rename = "HP")]
    HypothesisParaphrase,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::ImageDecomposition,
        TemplateId::StyleInjection,
        TemplateId::ImageVerification,
        TemplateId::CaptionParaphrase,
        TemplateId::AnswerVerification,
        TemplateId::AnswerReannotation,
        TemplateId::QuestionParaphrase,
        TemplateId::LabelVerification,
        TemplateId::LabelReannotation,
        TemplateId::HypothesisParaphrase,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TemplateId::ImageDecomposition => "ID",
            TemplateId::StyleInjection => "SI",
            TemplateId::ImageVerification => "IV",
            TemplateId::CaptionParaphrase => "CP",
            TemplateId::AnswerVerification => "AV",
            TemplateId::AnswerReannotation => "AR",
            TemplateId::QuestionParaphrase => "QP",
            TemplateId::LabelVerification => "LV",
            TemplateId::LabelReannotation => "LR",
            TemplateId::HypothesisParaphrase => "HP",
        }
    }

    fn file_name(self) -> String {
        format!("{}.toml", self.code().to_ascii_lowercase())
    }

    /// Attachment layouts a template of this id may declare.
    fn allowed_slots(self) -> &'static [&'static [Slot]] {
        use Slot::*;
        match self {
            TemplateId::ImageDecomposition => &[&[Original]],
            TemplateId::StyleInjection => &[&[]],
            TemplateId::ImageVerification => &[&[Original, Stylized]],
            TemplateId::CaptionParaphrase
            | TemplateId::AnswerVerification
            | TemplateId::AnswerReannotation
            | TemplateId::LabelVerification
            | TemplateId::LabelReannotation => &[&[Stylized]],
            TemplateId::QuestionParaphrase | TemplateId::HypothesisParaphrase => &[&[], &[Stylized]],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Original,
    Stylized,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Lit(String),
    Hole(String),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template document: {0}")]
    Syntax(String),
    #[error("template {id}: unbalanced brace at byte {at}")]
    Brace { id: TemplateId, at: usize },
    #[error("template {id}: attachments {found:?} not allowed")]
    Slots { id: TemplateId, found: Vec<Slot> },
    #[error("template file {file} declares id {found}")]
    IdMismatch { file: String, found: TemplateId },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("template {id}: placeholder {{{name}}} is not bound")]
    MissingBinding { id: TemplateId, name: String },
    #[error("template {id}: {slot:?} image attachment is missing")]
    MissingAttachment { id: TemplateId, slot: Slot },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateDoc {
    id: TemplateId,
    version: u32,
    #[serde(default)]
    attachments: Vec<Slot>,
    system_text: String,
    user_template: String,
}

/// One prompt template: system text, user text with `{name}` placeholders
/// (`{{` and `}}` are literal braces) and the ordered image slots that
/// follow the user text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub version: u32,
    pub system_text: String,
    pub user_template: String,
    pub attachments: Vec<Slot>,
    system: Vec<Segment>,
    user: Vec<Segment>,
}

fn segments(id: TemplateId, text: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut out = Vec::new();
    let mut lit = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((at, c)) = chars.next() {
        match c {
            '{' if chars.peek().map(|&(_, n)| n) == Some('{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek().map(|&(_, n)| n) == Some('}') => {
                chars.next();
                lit.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some((_, '}')) => break,
                        Some((_, n)) if n.is_ascii_alphanumeric() || n == '_' => name.push(n),
                        _ => return Err(TemplateError::Brace { id, at }),
                    }
                }
                if name.is_empty() {
                    return Err(TemplateError::Brace { id, at });
                }
                if !lit.is_empty() {
                    out.push(Segment::Lit(std::mem::take(&mut lit)));
                }
                out.push(Segment::Hole(name));
            }
            '}' => return Err(TemplateError::Brace { id, at }),
            c => lit.push(c),
        }
    }
    if !lit.is_empty() {
        out.push(Segment::Lit(lit));
    }
    Ok(out)
}

/// Parses one TOML template document.
pub fn parse_template(text: &str) -> Result<PromptTemplate, TemplateError> {
    let doc: TemplateDoc = toml::from_str(text).map_err(|e| TemplateError::Syntax(e.to_string()))?;
    if !doc.id.allowed_slots().contains(&doc.attachments.as_slice()) {
        return Err(TemplateError::Slots {
            id: doc.id,
            found: doc.attachments,
        });
    }
    Ok(PromptTemplate {
        system: segments(doc.id, &doc.system_text)?,
        user: segments(doc.id, &doc.user_template)?,
        id: doc.id,
        version: doc.version,
        system_text: doc.system_text,
        user_template: doc.user_template,
        attachments: doc.attachments,
    })
}

impl PromptTemplate {
    /// Placeholder names used by this template, in first-use order.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for seg in self.system.iter().chain(&self.user) {
            if let Segment::Hole(n) = seg {
                if !names.contains(&n.as_str()) {
                    names.push(n);
                }
            }
        }
        names
    }

    fn fill(&self, segs: &[Segment], b: &Bindings) -> Result<String, RenderError> {
        let mut out = String::new();
        for seg in segs {
            match seg {
                Segment::Lit(s) => out.push_str(s),
                Segment::Hole(name) => match b.0.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(RenderError::MissingBinding {
                            id: self.id,
                            name: name.clone(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }
}

/// Values for template placeholders.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// The bindings every pipeline prompt uses: task and style phrasing.
    pub fn for_style(task: Task, style: Style) -> Self {
        Self::new()
            .set("task_name", task.long_name())
            .set("task_targets", task.targets())
            .set("style", style.display_phrase())
            .set("a_style", style.with_article())
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }
}

/// Images available to fill a template's attachment slots.
#[derive(Debug, Clone, Copy, Default)]
pub struct Attachments<'a> {
    pub original: Option<&'a ImageAttachment>,
    pub stylized: Option<&'a ImageAttachment>,
}

/// Renders a template into a single-turn request: the user text, then the
/// images in declared slot order. Sampling is left at its defaults.
pub fn render(
    template: &PromptTemplate,
    bindings: &Bindings,
    images: &Attachments<'_>,
) -> Result<ChatRequest, RenderError> {
    let system_prompt = template.fill(&template.system, bindings)?;
    let text = template.fill(&template.user, bindings)?;
    let mut parts = vec![Part::Text(text)];
    for &slot in &template.attachments {
        let img = match slot {
            Slot::Original => images.original,
            Slot::Stylized => images.stylized,
        }
        .ok_or(RenderError::MissingAttachment {
            id: template.id,
            slot,
        })?;
        parts.push(Part::Image(img.clone()));
    }
    Ok(ChatRequest {
        system_prompt,
        turns: vec![Turn::user(parts)],
        sampling: SamplingParams::default(),
        attempt: 0,
    })
}

const BUILTIN: [(TemplateId, &str); 10] = [
    (TemplateId::ImageDecomposition, include_str!("../../templates/id.toml")),
    (TemplateId::StyleInjection, include_str!("../../templates/si.toml")),
    (TemplateId::ImageVerification, include_str!("../../templates/iv.toml")),
    (TemplateId::CaptionParaphrase, include_str!("../../templates/cp.toml")),
    (TemplateId::AnswerVerification, include_str!("../../templates/av.toml")),
    (TemplateId::AnswerReannotation, include_str!("../../templates/ar.toml")),
    (TemplateId::QuestionParaphrase, include_str!("../../templates/qp.toml")),
    (TemplateId::LabelVerification, include_str!("../../templates/lv.toml")),
    (TemplateId::LabelReannotation, include_str!("../../templates/lr.toml")),
    (TemplateId::HypothesisParaphrase, include_str!("../../templates/hp.toml")),
];

/// The ten templates a run uses.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| {
                let t = parse_template(text).expect("built-in template parses");
                assert_eq!(t.id, *id, "built-in template file holds the wrong id");
                (*id, t)
            })
            .collect();
        Self { templates }
    }

    /// Built-in templates overridden by any `<code>.toml` files in `dir`
    /// (`id.toml`, `si.toml`, ...).
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
            let t = parse_template(&text)?;
            if t.id != id {
                return Err(TemplateError::IdMismatch {
                    file: path.display().to_string(),
                    found: t.id,
                });
            }
            set.templates.insert(id, t);
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    /// Template versions keyed by code, for provenance records.
    pub fn versions(&self) -> BTreeMap<String, u32> {
        self.templates
            .values()
            .map(|t| (t.id.code().to_string(), t.version))
            .collect()
    }
}
