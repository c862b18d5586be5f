#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::manifest::{read_manifests, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_json(text) {
        let _ = cfg.validate();
    }
    let _ = read_manifests(text);
});
