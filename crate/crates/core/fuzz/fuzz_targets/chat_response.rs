#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::provider::http::parse_chat_response;

fuzz_target!(|data: &[u8]| {
    if let Some((&status, rest)) = data.split_first() {
        if let Ok(text) = std::str::from_utf8(rest) {
            let _ = parse_chat_response(200 + u16::from(status % 4) * 100, None, text);
        }
    }
});
