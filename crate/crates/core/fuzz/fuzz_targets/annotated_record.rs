#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::dataset::AnnotatedRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<AnnotatedRecord>(data) {
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<AnnotatedRecord>(&text).unwrap(), r);
    }
});
