#![no_main]

//! Raw subject files are headerless little-endian f32; shapes come from the
//! manifest and can disagree with the file arbitrarily.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    // Small shape triple from the first bytes, then decode the rest.
    let trials = (data[0] % 4) as usize + 1;
    let channels = (data[1] % 8) as usize + 1;
    let samples = (data[2] % 64) as usize + 1;
    let _ = nssinet::cohort::decode_trial_bytes(&data[3..], trials, channels, samples);
});
