#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::provider::replay::Session;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = Session::parse(text) {
            assert_eq!(Session::parse(&s.to_json()).unwrap().len(), s.len());
        }
    }
});
