//! Scorer protocol: recorded transcripts, the HTTP transport and prediction
//! files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use proptest::prelude::*;
use stressbench::dataset::{Dataset, ManifestSchema, SampleRecord};
use stressbench::scorer::conformance::{check_in_process, parse_transcript};
use stressbench::scorer::protocol::{decode_batch, encode_batch};
use stressbench::scorer::stub::EchoScorer;
use stressbench::scorer::{
    format_score, load_precomputed, respond_line, write_scores, HttpScorer, InputSpec,
    ScoreMatrix, Scorer, ScorerInfo,
};
use stressbench::ImageBuffer;

fn transcript_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transcripts")
}

fn echo_info() -> ScorerInfo {
    ScorerInfo {
        classes: vec!["a".into(), "b".into()],
        input: InputSpec { channels: 1, height: 2, width: 2 },
        identity: "echo-stub".into(),
    }
}

#[test]
fn transcripts_replay_in_process() {
    let mut files: Vec<PathBuf> = std::fs::read_dir(transcript_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(files.len() >= 2);
    for path in files {
        let exchanges = parse_transcript(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(!exchanges.is_empty());
        let mut scorer = EchoScorer::new(echo_info());
        for step in check_in_process(&exchanges, &mut scorer).unwrap() {
            assert!(step.passed, "{} step {}: {}", path.display(), step.index, step.detail);
        }
    }
}

#[test]
fn transcript_mismatch_is_reported() {
    let text = "> {\"type\":\"hello\",\"protocol\":1}\n< {\"type\":\"info\",\"protocol\":1,\"classes\":[\"x\"],\"input\":{\"channels\":1,\"height\":2,\"width\":2},\"identity\":\"echo-stub\"}\n";
    let exchanges = parse_transcript(text).unwrap();
    let out = check_in_process(&exchanges, &mut EchoScorer::new(echo_info())).unwrap();
    assert!(!out[0].passed);
    assert!(parse_transcript("< {}\n").is_err());
    assert!(parse_transcript("> {}\n").is_err());
}

proptest! {
    #[test]
    fn batches_round_trip_through_base64(
        n in 1usize..4,
        c in prop_oneof![Just(1usize), Just(3usize)],
        h in 1usize..6,
        w in 1usize..6,
        seed in any::<u64>(),
    ) {
        let images: Vec<ImageBuffer> = (0..n)
            .map(|k| {
                let px = (0..c * h * w)
                    .map(|i| ((seed.wrapping_mul(31).wrapping_add((k * 1000 + i) as u64) % 997) as f32) / 996.0)
                    .collect();
                ImageBuffer::new(c, h, w, px).unwrap()
            })
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let req = encode_batch(9, &images, &ids).unwrap();
        let json = serde_json::to_value(&req).unwrap();
        prop_assert_eq!(&json["shape"], &serde_json::json!([n, c, h, w]));
        let decoded = decode_batch(
            [n, c, h, w],
            json["dtype"].as_str().unwrap(),
            json["data"].as_str().unwrap(),
        )
        .unwrap();
        prop_assert_eq!(decoded, images);
    }
}

/// Serves the protocol over HTTP on an ephemeral port until `requests` POSTs
/// have been answered.
fn spawn_http_echo(requests: usize) -> (String, std::thread::JoinHandle<()>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/score", server.server_addr().to_ip().unwrap());
    let handle = std::thread::spawn(move || {
        let mut scorer = EchoScorer::new(echo_info());
        for _ in 0..requests {
            let mut req = server.recv().unwrap();
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let reply = respond_line(&body, &mut scorer);
            req.respond(tiny_http::Response::from_string(reply)).unwrap();
        }
    });
    (url, handle)
}

#[test]
fn http_scorer_handshakes_and_scores() {
    let (url, server) = spawn_http_echo(3);
    let mut scorer = HttpScorer::connect(&url, Duration::from_secs(10)).unwrap();
    assert_eq!(scorer.info(), &echo_info());
    let images = vec![
        ImageBuffer::new(1, 2, 2, vec![0.0, 0.5, 0.5, 1.0]).unwrap(),
        ImageBuffer::filled(1, 2, 2, 0.25).unwrap(),
    ];
    let ids = vec!["p".to_string(), "q".to_string()];
    let rows = scorer.score_batch(&images, &ids).unwrap();
    assert_eq!(rows, vec![vec![0.5, 0.5], vec![0.25, 0.25]]);
    let wrong = vec![ImageBuffer::filled(1, 3, 3, 0.1).unwrap()];
    let err = scorer.score_batch(&wrong, &ids[..1]).unwrap_err();
    assert!(err.to_string().contains("does not match declared input"), "{err}");
    server.join().unwrap();
}

#[test]
fn http_scorer_reports_unreachable_endpoint() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = HttpScorer::connect(&format!("http://127.0.0.1:{port}/"), Duration::from_secs(2))
        .err()
        .unwrap();
    assert!(err.to_string().contains("POST"), "{err}");
}

fn tiny_dataset(ids: &[&str]) -> Dataset {
    Dataset {
        name: "t".into(),
        schema: ManifestSchema {
            classes: vec!["a".into(), "b".into()],
            attributes: vec![],
        },
        samples: ids
            .iter()
            .map(|id| SampleRecord {
                id: (*id).into(),
                image_path: format!("{id}.png"),
                labels: vec![0, 1],
                attributes: BTreeMap::new(),
            })
            .collect(),
        root: PathBuf::from("."),
    }
}

#[test]
fn prediction_files_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(&["s1", "s2", "s3"]);
    let rows = vec![
        vec![0.1f32, 0.000123],
        vec![1.0, 0.0],
        vec![std::f32::consts::FRAC_1_PI, 0.99999994],
    ];
    let m = ScoreMatrix::from_rows(ds.ids(), rows, 2).unwrap();
    let path = dir.path().join("p.csv");
    write_scores(&path, &m, ds.class_names(), Some("gamma:+1")).unwrap();
    let back = load_precomputed(&path, &ds, "gamma:+1").unwrap();
    assert_eq!(back.matrix, m);
    assert!(load_precomputed(&path, &ds, "gamma:+2").is_err());
    assert_eq!(format_score(0.1), "0.100000001");
    assert_eq!(format_score(0.000123), "0.000123000005");
}

#[test]
fn prediction_files_align_to_dataset_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "id,b,a\nz,0.2,0.8\ns2,0.4,0.6\ns1,0.3,0.7\n").unwrap();
    let loaded = load_precomputed(&path, &tiny_dataset(&["s1", "s2"]), "clean").unwrap();
    assert_eq!(loaded.matrix.row(0), &[0.7, 0.3]);
    assert_eq!(loaded.matrix.row(1), &[0.6, 0.4]);
    assert_eq!(loaded.unknown_ids, vec!["z".to_string()]);
    let err = load_precomputed(&path, &tiny_dataset(&["s1", "s9"]), "clean").unwrap_err();
    assert!(err.to_string().contains("s9"), "{err}");
}
