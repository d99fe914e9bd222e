#![no_main]

use libfuzzer_sys::fuzz_target;
use splitfss::transport::{decode_frame, encode_frame};

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = decode_frame(data) {
        // anything that decodes must re-encode to the identical bytes
        assert_eq!(encode_frame(&frame), data);
    }
});
