#![no_main]

use libfuzzer_sys::fuzz_target;
use mir_core::corpus::ingest;

// Input is three streams separated by 0xFF bytes: proposals, papers, citations.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |b| *b == 0xFF);
    let proposals = parts.next().unwrap_or_default();
    let papers = parts.next().unwrap_or_default();
    let citations = parts.next().unwrap_or_default();
    if let Ok(out) = ingest(proposals, papers, citations) {
        for e in out.mag.all_edges() {
            assert!(out.mag.proposal(&e.proposal_id).is_ok());
            assert!(out.mag.paper(&e.paper_id).is_ok());
        }
    }
});
