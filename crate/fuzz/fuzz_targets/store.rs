#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::store::EmbeddingStore;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = EmbeddingStore::from_bytes(data) {
        let bytes = store.to_bytes();
        let again = EmbeddingStore::from_bytes(&bytes).expect("re-encoded store decodes");
        assert_eq!(again.to_bytes(), bytes);
        assert_eq!(again.len(), store.len());
    }
});
