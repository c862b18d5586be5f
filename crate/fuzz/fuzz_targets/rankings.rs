#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::retrieval::read_rankings;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = read_rankings(text);
});
