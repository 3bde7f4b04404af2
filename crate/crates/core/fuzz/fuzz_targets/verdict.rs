#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::promptkit::{parse_verdict, parse_yes_no, VerdictKind};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_yes_no(text);
        if let Ok(v) = parse_verdict(VerdictKind::AnswerVerify, text) {
            assert_eq!(v.raw_response, text);
        }
    }
});
