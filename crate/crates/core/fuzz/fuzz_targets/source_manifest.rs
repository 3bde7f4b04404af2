#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::dataset::SourceSet;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SourceSet::parse(std::path::Path::new("fuzz.jsonl"), text);
    }
});
