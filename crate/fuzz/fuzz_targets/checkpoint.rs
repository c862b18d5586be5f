#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::encoder::EncoderParams;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = EncoderParams::from_checkpoint(data) {
        let bytes = params.to_checkpoint();
        let again = EncoderParams::from_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.to_checkpoint(), bytes);
    }
});
