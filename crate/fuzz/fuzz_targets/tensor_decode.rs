#![no_main]

use libfuzzer_sys::fuzz_target;
use splitfss::transport::{tensor_from_bytes, tensor_to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = tensor_from_bytes(data) {
        assert_eq!(tensor_to_bytes(&t), data);
    }
});
