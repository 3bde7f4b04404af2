#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::promptkit::parse_prefixed;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for prefix in ["Paraphrased Question:", "Paraphrased Hypothesis:", ""] {
            if let Ok(s) = parse_prefixed(prefix, text) {
                assert!(!s.is_empty() && s.trim() == s);
            }
        }
    }
});
