#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::mmd::{decode_vldg, encode_vldg};

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = decode_vldg(data) {
        let again = decode_vldg(&encode_vldg(&set)).expect("re-encoded file decodes");
        assert_eq!(again.ids, set.ids);
    }
});
