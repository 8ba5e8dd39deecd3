#![no_main]

//! Checkpoints are a JSON header plus raw tensor bytes; truncations, length
//! overflows and header garbage must all be rejected without panicking.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = nssinet::netcore::checkpoint::from_bytes(data);
});
