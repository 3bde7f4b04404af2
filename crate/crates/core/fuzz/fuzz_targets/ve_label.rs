#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::promptkit::parse_ve_label;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_ve_label(text);
    }
});
