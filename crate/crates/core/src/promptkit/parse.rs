use std::fmt;

use serde::{Deserialize, Serialize};

use crate::YesNo;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("reply is empty")]
    Empty,
    #[error("reply starts with `{found}`, expected {expected}")]
    UnexpectedToken { expected: &'static str, found: String },
    #[error("reply has no leading word, expected {expected}")]
    NoToken { expected: &'static str },
    #[error("expected {expected} numbered captions, found {found}")]
    CaptionCount { expected: usize, found: usize },
    #[error("caption numbered {found} where {expected} was expected")]
    CaptionOrder { expected: usize, found: usize },
    #[error("caption {index} is empty")]
    EmptyCaption { index: usize },
}

/// What a yes/no verdict was asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    /// Stylized image keeps the content of the original.
    ImageVerify,
    /// VQA answer still holds for the stylized image.
    AnswerVerify,
    /// VE label still holds for the stylized image.
    LabelVerify,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub kind: VerdictKind,
    pub value: bool,
    pub raw_response: String,
}

/// Visual entailment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VeLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl VeLabel {
    pub const ALL: [VeLabel; 3] = [VeLabel::Entailment, VeLabel::Neutral, VeLabel::Contradiction];

    /// The word the model is asked to answer with.
    pub fn prompt_word(self) -> &'static str {
        match self {
            VeLabel::Entailment => "True",
            VeLabel::Neutral => "Undetermined",
            VeLabel::Contradiction => "False",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VeLabel::Entailment => "entailment",
            VeLabel::Neutral => "neutral",
            VeLabel::Contradiction => "contradiction",
        }
    }
}

impl fmt::Display for VeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First run of alphabetic characters, lowercased. Leading markup such as
/// quotes, asterisks or list numbers is skipped.
fn leading_word(text: &str) -> Option<String> {
    let start = text.find(|c: char| c.is_alphabetic())?;
    let rest = &text[start..];
    let end = rest.find(|c: char| !c.is_alphabetic()).unwrap_or(rest.len());
    Some(rest[..end].to_lowercase())
}

fn word(text: &str, expected: &'static str) -> Result<String, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    leading_word(text).ok_or(ParseError::NoToken { expected })
}

pub fn parse_yes_no(text: &str) -> Result<YesNo, ParseError> {
    const EXPECTED: &str = "`Yes` or `No`";
    match word(text, EXPECTED)?.as_str() {
        "yes" => Ok(YesNo::Yes),
        "no" => Ok(YesNo::No),
        other => Err(ParseError::UnexpectedToken {
            expected: EXPECTED,
            found: other.to_string(),
        }),
    }
}

pub fn parse_verdict(kind: VerdictKind, raw: &str) -> Result<VerificationVerdict, ParseError> {
    parse_yes_no(raw).map(|v| VerificationVerdict {
        kind,
        value: v == YesNo::Yes,
        raw_response: raw.to_string(),
    })
}

pub fn parse_ve_label(text: &str) -> Result<VeLabel, ParseError> {
    const EXPECTED: &str = "`True`, `False` or `Undetermined`";
    match word(text, EXPECTED)?.as_str() {
        "true" => Ok(VeLabel::Entailment),
        "false" => Ok(VeLabel::Contradiction),
        "undetermined" => Ok(VeLabel::Neutral),
        other => Err(ParseError::UnexpectedToken {
            expected: EXPECTED,
            found: other.to_string(),
        }),
    }
}

/// Text after the first occurrence of `prefix`, trimmed. Replies without the
/// prefix are taken whole.
pub fn parse_prefixed(prefix: &str, text: &str) -> Result<String, ParseError> {
    let body = match text.find(prefix) {
        Some(at) if !prefix.is_empty() => &text[at + prefix.len()..],
        _ => text,
    };
    let body = body.trim();
    if body.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(body.to_string())
}

fn numbered_line(line: &str) -> Option<(usize, &str)> {
    let line = line.trim_start();
    let digits = line.find(|c: char| !c.is_ascii_digit())?;
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    let n = line[..digits].parse().ok()?;
    Some((n, rest.trim()))
}

/// Exactly `n` lines numbered `1.` .. `n.` (or `1)` ..). Unnumbered lines
/// such as a preamble are ignored.
pub fn parse_caption_list(n: usize, text: &str) -> Result<Vec<String>, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let items: Vec<(usize, &str)> = text.lines().filter_map(numbered_line).collect();
    if items.len() != n {
        return Err(ParseError::CaptionCount {
            expected: n,
            found: items.len(),
        });
    }
    let mut out = Vec::with_capacity(n);
    for (i, (num, caption)) in items.into_iter().enumerate() {
        if num != i + 1 {
            return Err(ParseError::CaptionOrder {
                expected: i + 1,
                found: num,
            });
        }
        if caption.is_empty() {
            return Err(ParseError::EmptyCaption { index: num });
        }
        out.push(caption.to_string());
    }
    Ok(out)
}
