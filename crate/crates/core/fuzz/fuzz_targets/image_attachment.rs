#![no_main]

use libfuzzer_sys::fuzz_target;
use forge_core::provider::ImageAttachment;

fuzz_target!(|data: &[u8]| {
    let _ = ImageAttachment::from_bytes(data.to_vec());
});
