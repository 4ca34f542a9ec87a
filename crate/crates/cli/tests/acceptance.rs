//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary (`harness = false`).

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{bin, fixtures, stderr, stdout, stressbench};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stressbench::dataset::{
    resolve_subgroups, AttrValue, AttributeDecl, AttributeType, Dataset, Literal, ManifestSchema,
    SampleRecord, SubgroupDef,
};
use stressbench::harness::summarize_monotonic;
use stressbench::metrics::{
    calibration_bins, cell_metrics, confusion_at, ece, roc_auc, select_threshold, stratified_eval,
    ConfusionCounts, MetricName, ThresholdPolicy, ThresholdVector,
};
use stressbench::perturb::{
    self, adjust_contrast, adjust_gamma, adjust_sharpness, default_suite, gaussian_blur,
    PerturbationKind, PerturbationSpec, SeverityTable,
};
use stressbench::report::{read_results, METADATA_FILE, RESULTS_FILE};
use stressbench::scorer::ScoreMatrix;
use stressbench::ImageBuffer;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn s(p: impl AsRef<Path>) -> String {
    p.as_ref().display().to_string()
}

// ---- transform parity ----

fn transform_parity() -> Check {
    let start = Instant::now();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/parity");
    let text = std::fs::read_to_string(dir.join("manifest.csv")).map_err(|e| e.to_string())?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let table = SeverityTable::default();
    let mut inputs = std::collections::BTreeSet::new();
    let mut tags = std::collections::BTreeSet::new();
    let mut worst = 0u8;
    let mut cases = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let kind: PerturbationKind = rec[1].parse().map_err(|e| format!("{e}"))?;
        let level: i32 = rec[2].parse().map_err(|e| format!("{e}"))?;
        let spec = PerturbationSpec::new(kind, level, &table).map_err(|e| e.to_string())?;
        let input = ImageBuffer::open(dir.join(&rec[0])).map_err(|e| e.to_string())?;
        let expected = ImageBuffer::open(dir.join(&rec[4])).map_err(|e| e.to_string())?;
        let ours = perturb::apply(&spec, &input).map_err(|e| e.to_string())?;
        ensure!(
            (ours.channels(), ours.height(), ours.width())
                == (expected.channels(), expected.height(), expected.width()),
            "{}: shape differs for {}",
            spec.tag(),
            &rec[0]
        );
        let diff = ours
            .to_u8()
            .iter()
            .zip(expected.to_u8())
            .map(|(a, b)| a.abs_diff(b))
            .max()
            .unwrap_or(0);
        worst = worst.max(diff);
        inputs.insert(rec[0].to_string());
        tags.insert(spec.tag());
        cases += 1;
    }
    let elapsed = start.elapsed();
    let suite: std::collections::BTreeSet<String> = default_suite().iter().map(|s| s.tag()).collect();
    ensure!(inputs.len() >= 20, "only {} fixture images", inputs.len());
    ensure!(tags == suite, "fixtures cover {} of 30 specs", tags.len());
    ensure!(worst <= 1, "max abs error {worst}/255");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "{cases} cases over {} images, max error {worst}/255, {:.1}s",
        inputs.len(),
        elapsed.as_secs_f64()
    ))
}

// ---- transform micro-oracles ----

fn gray(h: usize, w: usize, px: &[f32]) -> ImageBuffer {
    ImageBuffer::new(1, h, w, px.to_vec()).unwrap()
}

fn transform_micro_oracles() -> Check {
    let close = |a: f32, b: f32| (a - b).abs() <= 1e-6;
    let mut n = 0;
    let mut check = |ok: bool, what: &str| -> Result<(), String> {
        n += 1;
        if ok {
            Ok(())
        } else {
            Err(what.to_string())
        }
    };
    // mean luma 0.4; factor 2 blends to 2x - 0.4
    let img = gray(1, 2, &[0.2, 0.6]);
    let c = adjust_contrast(&img, 2.0).map_err(|e| e.to_string())?;
    check(close(c.pixels()[0], 0.0) && close(c.pixels()[1], 0.8), "contrast blend factor 2")?;
    let c = adjust_contrast(&img, 0.0).map_err(|e| e.to_string())?;
    check(c.pixels().iter().all(|&p| close(p, 0.4)), "contrast factor 0 gives mean")?;
    let c = adjust_contrast(&img, 0.5).map_err(|e| e.to_string())?;
    check(close(c.pixels()[0], 0.3) && close(c.pixels()[1], 0.5), "contrast blend factor 0.5")?;

    for (x, g) in [(0.25f32, 0.5f32), (0.5, 2.0), (0.64, 1.5), (0.3, 1.0 / 1.5)] {
        let out = adjust_gamma(&gray(1, 1, &[x]), g, 1.0).map_err(|e| e.to_string())?;
        check(close(out.pixels()[0], x.powf(g)), &format!("gamma {x}^{g}"))?;
    }

    let mut px = [0.0f32; 9];
    px[4] = 1.0;
    let smooth = adjust_sharpness(&gray(3, 3, &px), 0.0).map_err(|e| e.to_string())?;
    check(close(smooth.pixels()[4], 5.0 / 13.0), "sharpness kernel center 5/13")?;
    let sharp = adjust_sharpness(&gray(3, 3, &px), 2.0).map_err(|e| e.to_string())?;
    check(close(sharp.pixels()[4], 1.0), "sharpness factor 2 clamps to 1")?;

    let constant = gray(7, 9, &[0.42; 63]);
    for sigma in [0.6f32, 1.8, 3.6] {
        let out = gaussian_blur(&constant, sigma).map_err(|e| e.to_string())?;
        check(out.pixels().iter().all(|&p| close(p, 0.42)), &format!("blur sigma {sigma} fixed point"))?;
    }
    Ok(format!("{n} hand-computed examples within 1e-6"))
}

// ---- metric oracles ----

fn instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=max_n);
    let grid = rng.random_range(2..=10);
    let scores = (0..n)
        .map(|_| {
            if rng.random_bool(0.7) {
                rng.random_range(0..=grid) as f64 / grid as f64
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.4) as u8).collect();
    labels[0] = 1;
    labels[1] = 0;
    (scores, labels)
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_err = 0.0f64;
    let mut tied = 0;
    for i in 0..1000 {
        let (sc, l) = instance(&mut rng, 50);
        let mut sorted = sc.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        tied += (sorted.len() < sc.len()) as usize;
        let auc = roc_auc(&sc, &l).map_err(|e| e.to_string())?.ok_or("undefined AUC")?;
        let oracle = brute_auc(&sc, &l);
        max_err = max_err.max((auc - oracle).abs());
        ensure!((auc - oracle).abs() <= 1e-12, "instance {i}: {auc} vs pair count {oracle}");
        let flipped: Vec<f64> = sc.iter().map(|v| 1.0 - v).collect();
        let comp = roc_auc(&flipped, &l).map_err(|e| e.to_string())?.ok_or("undefined AUC")?;
        ensure!((comp - (1.0 - auc)).abs() <= 1e-12, "instance {i}: complement {comp} vs {}", 1.0 - auc);
    }
    Ok(format!("1000 instances ({tied} with ties), max error {max_err:e}, complement symmetric"))
}

fn sweep_oracle(scores: &[f64], labels: &[u8]) -> f64 {
    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if labels.iter().all(|&l| l == 0) || distinct.len() < 2 {
        return 0.5;
    }
    let mut best = (f64::NAN, -1.0);
    for w in distinct.windows(2) {
        let t = (w[0] + w[1]) / 2.0;
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&sc, &l) in scores.iter().zip(labels) {
            match (sc >= t, l == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let f1 = (2 * tp) as f64 / (2 * tp + fp + fn_) as f64;
        if f1 >= best.1 {
            best = (t, f1);
        }
    }
    best.0
}

fn threshold_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for i in 0..200 {
        let (sc, l) = instance(&mut rng, 40);
        let chosen = select_threshold(&sc, &l, ThresholdPolicy::F1OptimalOnClean)
            .map_err(|e| e.to_string())?
            .threshold;
        let want = sweep_oracle(&sc, &l);
        ensure!(chosen == want, "instance {i}: {chosen} vs sweep {want}");
    }
    Ok("200 instances match the exhaustive midpoint sweep exactly".into())
}

fn ece_checks() -> Check {
    let hand = [
        (vec![1.0, 1.0], vec![1u8, 0], 1, 0.5),
        (vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 1, 0], 15, 0.0),
        (vec![0.25, 0.75], vec![0, 1], 2, 0.25),
    ];
    for (sc, l, bins, want) in &hand {
        let got = ece(sc, l, *bins).map_err(|e| e.to_string())?;
        ensure!(got == Some(*want), "ECE {sc:?}/{l:?} with {bins} bins: {got:?} vs {want}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for i in 0..500 {
        let (sc, l) = instance(&mut rng, 60);
        let bins = rng.random_range(1..=20);
        let b = calibration_bins(&sc, &l, bins).map_err(|e| e.to_string())?;
        ensure!(b.total() == sc.len(), "instance {i}: bins hold {} of {}", b.total(), sc.len());
        let e = ece(&sc, &l, bins).map_err(|e| e.to_string())?.ok_or("undefined ECE")?;
        ensure!((0.0..=1.0).contains(&e), "instance {i}: ECE {e}");
    }
    Ok(format!("{} hand cases exact, 500 random instances conserve N and stay in [0,1]", hand.len()))
}

// ---- suite structure ----

fn suite_structure() -> Check {
    let suite = default_suite();
    ensure!(suite.len() == 30, "default suite has {} specs", suite.len());
    let blur = suite.iter().filter(|s| s.kind == PerturbationKind::Blur).count();
    ensure!(blur == 6, "{blur} blur specs");
    for kind in [
        PerturbationKind::Gamma,
        PerturbationKind::Contrast,
        PerturbationKind::Brightness,
        PerturbationKind::Sharpness,
    ] {
        let mut levels: Vec<i32> = suite.iter().filter(|s| s.kind == kind).map(|s| s.level).collect();
        levels.sort();
        ensure!(levels == [-3, -2, -1, 1, 2, 3], "{kind}: levels {levels:?}");
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("in.png");
    ImageBuffer::filled(1, 32, 32, 0.5).unwrap().save_png(&input).map_err(|e| e.to_string())?;
    let sheet = dir.path().join("sheet.png");
    let o = stressbench(["perturb", &s(&input), "-o", &s(&sheet), "--grid"]);
    ensure!(o.status.success(), "perturb --grid failed: {}", stderr(&o));
    let out = stdout(&o);
    ensure!(out.starts_with("wrote 30 tiles"), "CLI said: {}", out.lines().next().unwrap_or(""));
    Ok("30 specs (4 kinds x 6 signed levels + 6 blur), CLI grid rendered 30 tiles".into())
}

// ---- end-to-end synthetic runs ----

struct E2e {
    dir: tempfile::TempDir,
}

impl E2e {
    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn synth(&self) -> Result<(), String> {
        let o = stressbench(["synth", "--out", &s(self.data())]);
        ensure!(o.status.success(), "synth failed: {}", stderr(&o));
        Ok(())
    }

    fn run(&self, name: &str, batch: usize) -> Result<PathBuf, String> {
        let out = self.dir.path().join(name);
        let data = self.data();
        let cmd = format!(
            "'{}' stub-scorer --config '{}' --mode degrade --scores '{}'",
            bin().display(),
            data.join("config.toml").display(),
            data.join("stub_scores.csv").display()
        );
        let o = stressbench([
            "run",
            "--config",
            &s(data.join("config.toml")),
            "--out",
            &s(&out),
            "--scorer-cmd",
            &cmd,
            "--batch-size",
            &batch.to_string(),
        ]);
        ensure!(o.status.code() == Some(0), "run exited {:?}: {}", o.status.code(), stderr(&o));
        ensure!(stdout(&o).contains("31 passes"), "run output: {}", stdout(&o));
        Ok(out)
    }
}

fn end_to_end(e2e: &E2e) -> Check {
    let start = Instant::now();
    e2e.synth()?;
    let out = e2e.run("a", 8)?;
    let elapsed = start.elapsed();
    let rt = read_results(&out).map_err(|e| e.to_string())?;
    rt.check_complete().map_err(|e| e.to_string())?;
    let spec: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(e2e.data().join("synth.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let expected = spec["expected_auc"].as_f64().ok_or("synth.json lacks expected_auc")?;
    ensure!(spec["spec"]["n"] == 100 && spec["spec"]["size"] == 64, "unexpected synth defaults: {spec}");
    let subgroups: std::collections::BTreeSet<&str> = rt.rows.iter().map(|r| r.subgroup.as_str()).collect();
    ensure!(subgroups.len() == 1 + 3 + 2, "subgroups {subgroups:?}");

    let mut worst_dev = 0.0f64;
    for class in &rt.meta.classes {
        let clean = rt
            .get(class, "All", None, 0, MetricName::Auc)
            .and_then(|r| r.value.value())
            .ok_or(format!("no clean AUC for {class}"))?;
        worst_dev = worst_dev.max((clean - expected).abs());
    }
    ensure!(worst_dev <= 0.02, "clean AUC off the closed form {expected:.6} by {worst_dev}");

    let trends = summarize_monotonic(&rt, MetricName::Auc, 0.0);
    ensure!(trends.len() == 2 * 6 * 9, "{} trends", trends.len());
    for t in &trends {
        ensure!(t.monotone == Some(true), "not monotone: {t:?}");
        let mut prev = t.clean.ok_or("undefined clean AUC")?;
        for v in &t.values {
            let v = v.ok_or("undefined AUC")?;
            ensure!(v < prev, "not strictly decreasing: {}/{}/{} {:?}", t.class, t.subgroup, t.kind, t.values);
            prev = v;
        }
    }
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "31 passes, {} trends strictly decreasing, clean AUC within {worst_dev:.4} of {expected:.6}, {:.1}s",
        trends.len(),
        elapsed.as_secs_f64()
    ))
}

fn determinism(e2e: &E2e) -> Check {
    let a = e2e.dir.path().join("a");
    let b = e2e.run("b", 8)?;
    let c = e2e.run("c", 32)?;
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    for name in [RESULTS_FILE, METADATA_FILE] {
        ensure!(read(a.join(name))? == read(b.join(name))?, "{name} differs between identical runs");
    }
    let mut plots: Vec<PathBuf> = std::fs::read_dir(a.join("plots"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    plots.sort();
    ensure!(!plots.is_empty(), "no plots written");
    for p in &plots {
        let name = p.file_name().unwrap();
        ensure!(read(p.clone())? == read(b.join("plots").join(name))?, "{name:?} differs");
    }
    let ra = read_results(&a).map_err(|e| e.to_string())?;
    let rc = read_results(&c).map_err(|e| e.to_string())?;
    ensure!(ra.rows.len() == rc.rows.len(), "row counts differ across batch sizes");
    for (x, y) in ra.rows.iter().zip(&rc.rows) {
        ensure!(x == y, "batch 8 vs 32: {x:?} vs {y:?}");
    }
    Ok(format!("results, metadata and {} SVGs byte-identical; batch 8 vs 32 identical values", plots.len()))
}

// ---- stratification ----

fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> (Dataset, ScoreMatrix) {
    let schema = ManifestSchema {
        classes: vec!["a".into(), "b".into()],
        attributes: vec![
            AttributeDecl { name: "race".into(), kind: AttributeType::Categorical },
            AttributeDecl { name: "age".into(), kind: AttributeType::Numeric },
        ],
    };
    let races = ["White", "Asian", "Black"];
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for i in 0..n {
        let mut attributes = BTreeMap::new();
        let race = if rng.random_bool(0.05) {
            AttrValue::Unknown
        } else {
            AttrValue::Text(races[rng.random_range(0..3)].into())
        };
        attributes.insert("race".into(), race);
        attributes.insert("age".into(), AttrValue::Number(rng.random_range(18..90) as f64));
        samples.push(SampleRecord {
            id: format!("s{i}"),
            image_path: format!("s{i}.png"),
            labels: vec![rng.random_bool(0.5) as u8, rng.random_bool(0.3) as u8],
            attributes,
        });
        rows.push(vec![(rng.random_range(0..=20) as f32) / 20.0, rng.random::<f32>()]);
    }
    let ds = Dataset { name: "rand".into(), schema, samples, root: PathBuf::from(".") };
    let scores = ScoreMatrix::from_rows(ds.ids(), rows, 2).unwrap();
    (ds, scores)
}

fn stratification() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut cells = 0;
    for round in 0..50 {
        let (ds, scores) = random_dataset(&mut rng, 120);
        let defs: Vec<SubgroupDef> = ["White", "Asian", "Black"]
            .iter()
            .map(|r| SubgroupDef::equals(r, "race", Literal::Text((*r).into())))
            .chain([SubgroupDef::range("age<40", "age", None, Some((40.0, false)))])
            .collect();
        let partition = resolve_subgroups(&defs, &ds).map_err(|e| e.to_string())?;
        let thresholds = ThresholdVector { thresholds: vec![0.5, 0.35], provenance: ThresholdPolicy::Fixed };
        let rows = stratified_eval(&scores, &ds, &partition, &thresholds, 15, None, 0).map_err(|e| e.to_string())?;
        for (c, class) in ds.class_names().iter().enumerate() {
            let mut disjoint = ConfusionCounts::default();
            for group in &partition.groups {
                let sc: Vec<f64> = group.indices.iter().map(|&i| scores.get(i, c) as f64).collect();
                let l: Vec<u8> = group.indices.iter().map(|&i| ds.samples[i].labels[c]).collect();
                let alone = cell_metrics(&sc, &l, thresholds.thresholds[c], 15).map_err(|e| e.to_string())?;
                for metric in MetricName::ALL {
                    let row = rows
                        .iter()
                        .find(|r| &r.class == class && r.subgroup == group.name && r.metric == metric)
                        .ok_or("missing row")?;
                    let (got, want) = (row.value.value(), alone.get(metric));
                    ensure!(
                        got.map(f64::to_bits) == want.map(f64::to_bits),
                        "round {round} {class}/{}/{metric}: {got:?} vs {want:?}",
                        group.name
                    );
                    cells += 1;
                }
                if group.name != "All" && group.name != "age<40" {
                    disjoint = disjoint + alone.counts;
                }
            }
            let known: Vec<usize> =
                (0..ds.len()).filter(|&i| ds.samples[i].attributes["race"].is_known()).collect();
            let sc: Vec<f64> = known.iter().map(|&i| scores.get(i, c) as f64).collect();
            let l: Vec<u8> = known.iter().map(|&i| ds.samples[i].labels[c]).collect();
            let pooled = confusion_at(&sc, &l, thresholds.thresholds[c]).map_err(|e| e.to_string())?;
            ensure!(disjoint == pooled, "round {round} {class}: {disjoint:?} vs pooled {pooled:?}");
        }
    }
    Ok(format!("{cells} subgroup cells bit-exact; disjoint race counts sum to pooled"))
}

// ---- published subgroup grid ----

fn published_grid() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = fixtures().join("published_grid/config.toml");
    let o = stressbench(["metrics", "--config", &s(&config), "--out", &s(dir.path())]);
    ensure!(o.status.success(), "metrics failed: {}", stderr(&o));
    let mut reader = csv::Reader::from_path(dir.path().join("disparity.csv")).map_err(|e| e.to_string())?;
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if &rec[0] == "No Finding" && &rec[1] == "AUC" && &rec[2] == "clean" {
            let gap: f64 = rec[4].parse().map_err(|e| format!("gap `{}`: {e}", &rec[4]))?;
            ensure!(gap == 0.01, "gap {gap}");
            return Ok(format!("subgroup AUCs {} -> gap {gap}, worst {}", &rec[6], &rec[5]));
        }
    }
    Err("no clean AUC row in disparity.csv".into())
}

fn main() {
    let e2e = E2e { dir: tempfile::tempdir().expect("tempdir") };
    let checks: Vec<Criterion<'_>> = vec![
        ("transform parity", Box::new(transform_parity)),
        ("transform micro-oracles", Box::new(transform_micro_oracles)),
        ("AUC oracle equivalence", Box::new(auc_oracle)),
        ("threshold sweep oracle", Box::new(threshold_oracle)),
        ("ECE", Box::new(ece_checks)),
        ("suite structure", Box::new(suite_structure)),
        ("end-to-end synthetic run", Box::new(|| end_to_end(&e2e))),
        ("stratification soundness", Box::new(stratification)),
        ("determinism", Box::new(|| determinism(&e2e))),
        ("published subgroup grid ingestion", Box::new(published_grid)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
