#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::promptkit::parse_caption_list;

fuzz_target!(|data: &[u8]| {
    if let Some((&n, rest)) = data.split_first() {
        if let Ok(text) = std::str::from_utf8(rest) {
            let n = usize::from(n % 8);
            if let Ok(captions) = parse_caption_list(n, text) {
                assert_eq!(captions.len(), n);
            }
        }
    }
});
