#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::domain::read_entities;

fuzz_target!(|data: &[u8]| {
    let _ = read_entities(data);
});
