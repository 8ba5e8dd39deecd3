#![no_main]

//! Run configurations are user-written JSON; parsing plus cross-field
//! validation must be total.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = nssinet::config::RunConfig::from_str(text);
    }
});
