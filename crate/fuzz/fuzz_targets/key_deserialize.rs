#![no_main]

use libfuzzer_sys::fuzz_target;
use splitfss::fss::{dcf, deserialize_key, dpf, serialize_key, DcfKey, DpfKey};

fuzz_target!(|data: &[u8]| {
    if let Ok(key) = deserialize_key(data) {
        assert_eq!(serialize_key(&key), data);
        // a decoded key must evaluate without panicking at any in-domain
        // point under both tree walks
        let mask = if key.domain_bits == 64 {
            u64::MAX
        } else {
            (1u64 << key.domain_bits) - 1
        };
        let x = data.iter().fold(0u64, |a, &b| a.rotate_left(8) ^ b as u64) & mask;
        let _ = dpf::eval(&DpfKey(key.clone()), x);
        let _ = dcf::eval(&DcfKey(key), x);
    }
});
