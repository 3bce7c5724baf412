use std::path::{Path, PathBuf};

use stabprobe::store::{
    decode_tensor, encode_tensor, ingest_jsonl, load_tensor, CheckpointIndex, DatasetKind,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

#[test]
fn golden_tensor_decodes_to_known_contents() {
    let t = load_tensor(&fixture("golden_tiny.stab")).unwrap();
    assert_eq!(t.name(), "tiny");
    assert_eq!(t.meta().kind, DatasetKind::Analysis);
    let runs: Vec<&str> = t.runs().iter().map(|r| r.0.as_str()).collect();
    assert_eq!(runs, ["r0", "r1", "r2"]);
    assert_eq!(t.checkpoints(), [CheckpointIndex(10), CheckpointIndex(20)]);
    assert_eq!(t.example_ids(), ["a", "b", "c"]);
    assert_eq!(t.row(1, 1), [1.0, 0.5, 1.0]);
    assert_eq!(t.row(2, 0), [1.0, 1.0, 0.0]);
}

#[test]
fn ingest_reproduces_golden_bytes() {
    let golden = std::fs::read(fixture("golden_tiny.stab")).unwrap();
    let t = ingest_jsonl(&fixture("tiny.jsonl"), None).unwrap();
    assert_eq!(encode_tensor(&t), golden);
    assert_eq!(decode_tensor(&golden).unwrap(), t);
}
