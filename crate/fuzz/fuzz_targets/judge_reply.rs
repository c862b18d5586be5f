#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::rerank::judge::{parse_analysis, parse_pointwise, parse_verdict};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_pointwise(text);
    let _ = parse_verdict(text);
    if let Some(analysis) = parse_analysis(text) {
        assert!(!analysis.trim().is_empty());
    }
});
