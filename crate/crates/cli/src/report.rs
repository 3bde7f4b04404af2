//! The `run.json` written next to every run.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use forge_core::provider::Provider;
use forge_core::runs::RunSummary;

use crate::config::FileConfig;
use crate::error::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Started when a command begins; completed by [`RunReport::finish`].
pub struct RunReport {
    command: String,
    manifest: PathBuf,
    config: FileConfig,
    started_at: u64,
}

#[derive(Serialize)]
pub struct FinishedReport {
    schema_version: u32,
    command: String,
    forge_version: &'static str,
    manifest: PathBuf,
    started_at: u64,
    finished_at: u64,
    /// Effective configuration. Holds the name of the key variable, never the key.
    config: FileConfig,
    summary: RunSummary,
    cost_usd: f64,
    calls: usize,
    live_calls: u64,
    omissions: usize,
}

impl RunReport {
    pub fn start(command: &str, config: &FileConfig, manifest: &Path) -> Self {
        Self {
            command: command.to_string(),
            manifest: manifest.to_path_buf(),
            config: config.clone(),
            started_at: now(),
        }
    }

    pub fn finish(self, summary: &RunSummary, provider: Option<&Provider>, omissions: usize) -> FinishedReport {
        FinishedReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command: self.command,
            forge_version: env!("CARGO_PKG_VERSION"),
            manifest: self.manifest,
            started_at: self.started_at,
            finished_at: now(),
            config: self.config,
            summary: summary.clone(),
            cost_usd: provider.map_or(0.0, |p| p.ledger().total()),
            calls: provider.map_or(0, |p| p.ledger().len()),
            live_calls: provider.map_or(0, |p| p.live_calls()),
            omissions,
        }
    }
}

impl FinishedReport {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("run report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}
