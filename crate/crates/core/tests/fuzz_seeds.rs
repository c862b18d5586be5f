//! The checked-in fuzz seeds exercise the decoders' accepting paths.

use std::fs;
use std::path::PathBuf;

use mir_core::corpus::ingest;
use mir_core::domain::read_entities;
use mir_core::encoder::EncoderParams;
use mir_core::manifest::{read_manifests, RunConfig};
use mir_core::rerank::judge::{parse_pointwise, parse_verdict};
use mir_core::retrieval::read_rankings;
use mir_core::store::EmbeddingStore;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn binary_seeds_decode_and_reencode() {
    for (name, bytes) in seeds("checkpoint") {
        let p = EncoderParams::from_checkpoint(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(p.to_checkpoint(), bytes, "{name}");
    }
    for (name, bytes) in seeds("store") {
        let s = EmbeddingStore::from_bytes(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(s.to_bytes(), bytes, "{name}");
    }
}

#[test]
fn ingest_seeds() {
    for (name, bytes) in seeds("ingest") {
        let mut parts = bytes.splitn(3, |b| *b == 0xFF);
        let (p, l, c) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        let out = ingest(p, l, c).unwrap();
        match name.as_str() {
            "tiny" => {
                assert!(out.rejects.is_empty(), "{:?}", out.rejects);
                assert_eq!(out.mag.all_edges().count(), 4);
            }
            _ => assert!(!out.rejects.is_empty(), "{name}"),
        }
    }
    for (name, bytes) in seeds("entities") {
        let (table, rejects) = read_entities(&bytes[..]).unwrap();
        assert!(!table.is_empty() && !rejects.is_empty(), "{name}");
    }
}

#[test]
fn text_seeds() {
    for (name, bytes) in seeds("judge_reply") {
        let t = text(&bytes);
        let parsed = parse_pointwise(t).is_some() || parse_verdict(t).is_some();
        assert!(parsed, "{name}");
    }
    for (name, bytes) in seeds("rankings") {
        assert!(!read_rankings(text(&bytes)).unwrap().is_empty(), "{name}");
    }
    for (name, bytes) in seeds("run_config") {
        let t = text(&bytes);
        assert!(RunConfig::from_json(t).is_ok() || read_manifests(t).is_ok(), "{name}");
    }
}
