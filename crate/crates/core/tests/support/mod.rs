#![allow(dead_code)]

pub mod oracle;
pub mod replies;
pub mod sweep;
pub mod tables;
pub mod toy;

use std::path::PathBuf;

/// The checked-in fixture tree at the workspace root.
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}
