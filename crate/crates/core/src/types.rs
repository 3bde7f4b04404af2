use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Vision-language task a corpus is annotated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "cap")]
    Caption,
    #[serde(rename = "vqa")]
    Vqa,
    #[serde(rename = "ve")]
    Ve,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Caption, Task::Vqa, Task::Ve];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Caption => "cap",
            Task::Vqa => "vqa",
            Task::Ve => "ve",
        }
    }

    /// Long name used in system prompts ("image captioning").
    pub fn long_name(self) -> &'static str {
        match self {
            Task::Caption => "image captioning",
            Task::Vqa => "visual question answering",
            Task::Ve => "visual entailment",
        }
    }

    /// What the annotator produces alongside the image, as phrased in system prompts.
    pub fn targets(self) -> &'static str {
        match self {
            Task::Caption => "its captions",
            Task::Vqa => "its questions",
            Task::Ve => "its corresponding hypothesis",
        }
    }

    /// Name of the per-image annotation unit in reports.
    pub fn unit_name(self) -> &'static str {
        match self {
            Task::Caption => "captions",
            Task::Vqa => "questions",
            Task::Ve => "hypotheses",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cap" | "caption" | "captioning" => Ok(Task::Caption),
            "vqa" => Ok(Task::Vqa),
            "ve" => Ok(Task::Ve),
            other => Err(format!("unknown task `{other}` (expected cap, vqa or ve)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "val" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Answer of a yes/no question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn as_word(self) -> &'static str {
        match self {
            YesNo::Yes => "Yes",
            YesNo::No => "No",
        }
    }
}

impl From<bool> for YesNo {
    fn from(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}
