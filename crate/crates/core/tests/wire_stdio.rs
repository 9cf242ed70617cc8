//! Stdio transport against an external process. Skipped when `python3` is
//! not on PATH.

use std::fs;
use std::process::Command;

use descrank::densevec::{embed, DenseError, WireClient};
use descrank::{EmbeddingProvider, Scorer};

const SERVER: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    op = req.get("op")
    if op == "info":
        out = {"name": "toy", "dim": 3, "normalizes": False}
    elif op == "embed":
        out = {"vectors": [[float(len(t)), 1.0, -0.5] for t in req["texts"]]}
    elif op == "score":
        out = {"scores": [float(len(q) - len(d)) for q, d in req["pairs"]]}
    else:
        out = {"error": "unknown op"}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
"#;

fn python() -> bool {
    Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn stdio_provider_round_trip() {
    if !python() {
        eprintln!("python3 unavailable; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("server.py");
    fs::write(&script, SERVER).unwrap();
    let addr = format!("stdio:python3 {}", script.display());

    let mut e = WireClient::connect(&addr).unwrap().into_embedder().unwrap();
    assert_eq!(e.info().dim, 3);
    assert!(!e.info().normalizes);
    let rows = embed(&mut e, &["ab".into(), "abcd".into()]).unwrap();
    assert_eq!(rows.row(0), [2.0, 1.0, -0.5]);
    assert_eq!(rows.row(1), [4.0, 1.0, -0.5]);

    let scores = e.client_mut().score(&[("abc".into(), "a".into()), ("a".into(), "abc".into())]).unwrap();
    assert_eq!(scores, [2.0, -2.0]);

    // empty text list is rejected before anything is sent
    assert!(matches!(embed(&mut e, &[]), Err(DenseError::EmptyInput)));
}
