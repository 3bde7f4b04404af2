//! Regenerates the toy corpus and its replay session.
//!
//! ```text
//! cargo run -p forge-core --example make_toy_fixtures [-- <dir>]
//! ```
//!
//! The default target is `fixtures/toy` at the workspace root.

#[path = "../tests/support/toy.rs"]
mod toy;

use std::path::PathBuf;

fn main() {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy"));
    toy::write_corpus(&dir).expect("write corpus");
    let session = dir.join("session.json");
    if session.exists() {
        std::fs::remove_file(&session).expect("remove old session");
    }
    let work = tempfile::tempdir().expect("temp dir");
    toy::record_session(&dir, &session, work.path()).expect("record session");
    println!("wrote {}", dir.display());
}
