//! Prompt templates, style parameterization and strict reply parsing.
//!
//! Templates are data: one TOML document per template under `templates/`,
//! compiled in as defaults and overridable from a directory at run time.

mod parse;
mod template;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::{
    parse_caption_list, parse_prefixed, parse_ve_label, parse_verdict, parse_yes_no, ParseError,
    VeLabel, VerdictKind, VerificationVerdict,
};
pub use template::{
    parse_template, render, Attachments, Bindings, PromptTemplate, RenderError, Slot, TemplateError,
    TemplateId, TemplateSet,
};

/// Image style of a dataset domain.
///
/// `RealPhoto` marks the original, human-annotated data and is never a
/// stylization target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Style {
    #[serde(rename = "real")]
    RealPhoto,
    #[serde(rename = "cartoon")]
    CartoonDrawing,
    #[serde(rename = "pencil")]
    PencilDrawing,
    #[serde(rename = "oil")]
    OilPainting,
}

impl Style {
    pub const ALL: [Style; 4] = [
        Style::RealPhoto,
        Style::CartoonDrawing,
        Style::PencilDrawing,
        Style::OilPainting,
    ];

    pub const TARGETS: [Style; 3] = [Style::CartoonDrawing, Style::PencilDrawing, Style::OilPainting];

    pub fn as_str(self) -> &'static str {
        match self {
            Style::RealPhoto => "real",
            Style::CartoonDrawing => "cartoon",
            Style::PencilDrawing => "pencil",
            Style::OilPainting => "oil",
        }
    }

    /// Phrase substituted for `{style}` in prompts, e.g. "cartoon drawing style".
    pub fn display_phrase(self) -> &'static str {
        match self {
            Style::RealPhoto => "real photo style",
            Style::CartoonDrawing => "cartoon drawing style",
            Style::PencilDrawing => "pencil drawing style",
            Style::OilPainting => "oil painting style",
        }
    }

    /// `display_phrase` with its indefinite article, for `{a_style}`.
    pub fn with_article(self) -> String {
        let phrase = self.display_phrase();
        let article = if phrase.starts_with(['a', 'e', 'i', 'o', 'u']) {
            "an"
        } else {
            "a"
        };
        format!("{article} {phrase}")
    }

    pub fn is_target(self) -> bool {
        self != Style::RealPhoto
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "real" | "real-photo" | "photo" => Ok(Style::RealPhoto),
            "cartoon" => Ok(Style::CartoonDrawing),
            "pencil" => Ok(Style::PencilDrawing),
            "oil" | "oil-painting" => Ok(Style::OilPainting),
            other => Err(format!("unknown style `{other}` (expected cartoon, pencil or oil)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn style_phrases() {
        assert_eq!(Style::CartoonDrawing.display_phrase(), "cartoon drawing style");
        assert_eq!(Style::OilPainting.with_article(), "an oil painting style");
        assert_eq!(Style::PencilDrawing.with_article(), "a pencil drawing style");
        assert!(!Style::RealPhoto.is_target());
        assert!(Style::TARGETS.iter().all(|s| s.is_target()));
        for s in Style::ALL {
            assert_eq!(s.as_str().parse::<Style>().unwrap(), s);
        }
    }
}
