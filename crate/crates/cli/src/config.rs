//! Configuration file schema and the merge with flags and environment.
//!
//! ```toml
//! [provider]
//! chat_base_url = "https://api.openai.com/v1"
//! image_base_url = "https://api.openai.com/v1"
//! chat_model = "gpt-4o-2024-05-13"
//! image_model = "dall-e-3"
//! api_key_env = "OPENAI_API_KEY"   # name of the variable, never the key
//! timeout_secs = 120
//! max_retries = 4
//! # temperature = 1.0
//! # top_p = 1.0
//!
//! [provider.pricing]
//! input_per_1k_tokens = 0.005
//! output_per_1k_tokens = 0.015
//! per_image = 0.04
//!
//! [pipeline]
//! patience = 10
//! caption_count = 5
//! image_size = [1024, 1024]
//! session_mode = "persistent"      # or "fresh"
//! transport_counts_against_patience = false
//! jobs = 4
//! seed = 0
//! # templates_dir = "templates"
//! ```
//!
//! Flags win over `FORGE_*` environment variables, which win over the file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use forge_core::annotate::AnnotateConfig;
use forge_core::provider::{Pricing, RetryPolicy, SamplingParams, DEFAULT_CHAT_MODEL, DEFAULT_IMAGE_MODEL};
use forge_core::stylize::{SessionMode, StylizeConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub chat_base_url: String,
    pub image_base_url: String,
    pub chat_model: String,
    pub image_model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub pricing: Pricing,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            chat_base_url: "https://api.openai.com/v1".into(),
            image_base_url: "https://api.openai.com/v1".into(),
            chat_model: DEFAULT_CHAT_MODEL.into(),
            image_model: DEFAULT_IMAGE_MODEL.into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            max_retries: 4,
            temperature: None,
            top_p: None,
            pricing: Pricing::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub patience: u32,
    pub caption_count: usize,
    pub image_size: [u32; 2],
    pub session_mode: SessionMode,
    pub transport_counts_against_patience: bool,
    pub jobs: usize,
    pub seed: u64,
    pub templates_dir: Option<PathBuf>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            patience: 10,
            caption_count: 5,
            image_size: [1024, 1024],
            session_mode: SessionMode::Persistent,
            transport_counts_against_patience: false,
            jobs: 4,
            seed: 0,
            templates_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub provider: ProviderSection,
    pub pipeline: PipelineSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Values a flag (or its environment variable) may override.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub patience: Option<u32>,
    pub caption_count: Option<usize>,
    pub jobs: Option<usize>,
    pub session_mode: Option<SessionMode>,
    pub chat_model: Option<String>,
    pub image_model: Option<String>,
    pub chat_base_url: Option<String>,
    pub image_base_url: Option<String>,
    pub templates_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn apply(mut self, o: &Overrides) -> Result<Self, CliError> {
        let p = &mut self.pipeline;
        p.patience = o.patience.unwrap_or(p.patience);
        p.caption_count = o.caption_count.unwrap_or(p.caption_count);
        p.jobs = o.jobs.unwrap_or(p.jobs);
        p.session_mode = o.session_mode.unwrap_or(p.session_mode);
        if o.templates_dir.is_some() {
            p.templates_dir.clone_from(&o.templates_dir);
        }
        let v = &mut self.provider;
        for (slot, value) in [
            (&mut v.chat_model, &o.chat_model),
            (&mut v.image_model, &o.image_model),
            (&mut v.chat_base_url, &o.chat_base_url),
            (&mut v.image_base_url, &o.image_base_url),
        ] {
            if let Some(value) = value {
                slot.clone_from(value);
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.pipeline;
        if p.patience == 0 {
            return Err(CliError::config("patience must be at least 1"));
        }
        if p.caption_count == 0 {
            return Err(CliError::config("caption_count must be at least 1"));
        }
        if p.image_size.contains(&0) {
            return Err(CliError::config("image_size entries must be positive"));
        }
        let v = &self.provider;
        if v.chat_model.trim().is_empty() || v.image_model.trim().is_empty() {
            return Err(CliError::config("model ids must not be empty"));
        }
        for (name, x) in [("temperature", v.temperature), ("top_p", v.top_p)] {
            if x.is_some_and(|x| !x.is_finite() || x < 0.0) {
                return Err(CliError::config(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }

    fn sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.provider.temperature,
            top_p: self.provider.top_p,
            model_id: self.provider.chat_model.clone(),
        }
    }

    pub fn stylize(&self) -> StylizeConfig {
        let [w, h] = self.pipeline.image_size;
        StylizeConfig {
            patience: self.pipeline.patience,
            image_size: (w, h),
            image_model: self.provider.image_model.clone(),
            sampling: self.sampling(),
            session_mode: self.pipeline.session_mode,
            transport_counts_against_patience: self.pipeline.transport_counts_against_patience,
        }
    }

    pub fn annotate(&self) -> AnnotateConfig {
        AnnotateConfig {
            patience: self.pipeline.patience,
            caption_count: self.pipeline.caption_count,
            sampling: self.sampling(),
            transport_counts_against_patience: self.pipeline.transport_counts_against_patience,
        }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.provider.max_retries,
            ..RetryPolicy::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.provider.timeout_secs)
    }
}
