#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| fairlicit_core::fuzz_checks::response_payload(data));
