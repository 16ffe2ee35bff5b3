#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    novapipe_core::fuzzing::artifact(data);
});
