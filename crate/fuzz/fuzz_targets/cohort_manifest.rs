#![no_main]

//! Cohort manifests arrive from disk and may be hand-edited; the parser and
//! its semantic validation must never panic on malformed input.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = nssinet::cohort::parse_manifest_str(text);
    }
});
