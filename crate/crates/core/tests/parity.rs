//! Transform outputs against torchvision fixtures (see
//! `tools/gen_parity_fixtures.py`).

use std::path::{Path, PathBuf};

use stressbench::perturb::{self, PerturbationKind, PerturbationSpec, SeverityTable};
use stressbench::ImageBuffer;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parity")
}

struct Case {
    input: String,
    kind: PerturbationKind,
    level: i32,
    parameter: f64,
    output: String,
}

fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(fixture_dir().join("manifest.csv")).unwrap();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            Case {
                input: rec[0].to_string(),
                kind: rec[1].parse().unwrap(),
                level: rec[2].parse().unwrap(),
                parameter: rec[3].parse().unwrap(),
                output: rec[4].to_string(),
            }
        })
        .collect()
}

#[test]
fn fixtures_cover_every_default_spec() {
    let cases = cases();
    let inputs: std::collections::BTreeSet<&str> = cases.iter().map(|c| c.input.as_str()).collect();
    assert!(inputs.len() >= 20);
    let tags: std::collections::BTreeSet<String> = cases
        .iter()
        .map(|c| perturb::spec_tag(c.kind, c.level))
        .collect();
    let suite: std::collections::BTreeSet<String> =
        perturb::default_suite().iter().map(|s| s.tag()).collect();
    assert_eq!(tags, suite);
    assert_eq!(cases.len(), inputs.len() * 30);
}

#[test]
fn outputs_match_within_one_level() {
    let table = SeverityTable::default();
    let dir = fixture_dir();
    let mut worst = (0u8, String::new());
    for case in cases() {
        let spec = PerturbationSpec::new(case.kind, case.level, &table).unwrap();
        assert!(
            (spec.parameter - case.parameter).abs() < 1e-12,
            "{}: parameter {} vs fixture {}",
            spec.tag(),
            spec.parameter,
            case.parameter
        );
        let input = ImageBuffer::open(dir.join(&case.input)).unwrap();
        let expected = ImageBuffer::open(dir.join(&case.output)).unwrap();
        let ours = perturb::apply(&spec, &input).unwrap();
        assert_eq!(
            (ours.channels(), ours.height(), ours.width()),
            (expected.channels(), expected.height(), expected.width())
        );
        let diff = ours
            .to_u8()
            .iter()
            .zip(expected.to_u8())
            .map(|(a, b)| a.abs_diff(b))
            .max()
            .unwrap();
        if diff > worst.0 {
            worst = (diff, case.output.clone());
        }
    }
    assert!(worst.0 <= 1, "max error {} levels in {}", worst.0, worst.1);
}
