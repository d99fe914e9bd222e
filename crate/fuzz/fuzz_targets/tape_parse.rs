#![no_main]

use libfuzzer_sys::fuzz_target;
use splitfss::protocol::material::parse_tape;

fuzz_target!(|data: &[u8]| {
    let _ = parse_tape(data);
});
