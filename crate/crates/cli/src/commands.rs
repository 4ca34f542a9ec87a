use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::Serialize;
use stressbench::config::StressConfig;
use stressbench::dataset::{self, Dataset, SubgroupPartition};
use stressbench::harness::{
    self, LiveScoring, PrecomputedScoring, ResultTable, RunOutcome, ScoreProvider, StressJob,
    ThresholdSource,
};
use stressbench::metrics::{MetricName, ThresholdVector};
use stressbench::perturb::{self, PerturbationSpec, SuiteConfig};
use stressbench::report;
use stressbench::scorer::conformance::{self, RawProcess};
use stressbench::scorer::{ProcessScorer, Scorer};
use stressbench::synth::{self, CategoricalSpec, NumericSpec, SynthSpec};
use stressbench::ImageBuffer;

use crate::{
    CompareArgs, ConformanceArgs, MetricsArgs, PerturbArgs, RunArgs, Status, SuiteArgs, SynthArgs,
    ValidateArgs,
};

pub const CONFIG_ECHO: &str = "run_config.toml";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const RUN_LOG: &str = "run_log.json";
pub const DISPARITY_FILE: &str = "disparity.csv";
pub const TRENDS_FILE: &str = "trends.json";
pub const PLOTS_DIR: &str = "plots";

fn suite_config(config: Option<&Path>) -> anyhow::Result<SuiteConfig> {
    Ok(match config {
        Some(p) => StressConfig::load(p)?.suite,
        None => SuiteConfig::default(),
    })
}

pub fn perturb(a: PerturbArgs) -> anyhow::Result<Status> {
    let suite_cfg = suite_config(a.config.as_deref())?;
    let img = ImageBuffer::open(&a.input)?;
    if a.grid {
        let suite = perturb::build_suite(&suite_cfg)?;
        let (sheet, tiles) = perturb::contact_sheet(&img, &suite, a.columns, a.tile)?;
        sheet.save_png(&a.output)?;
        println!("wrote {} tiles to {}", tiles.len(), a.output.display());
        for t in &tiles {
            println!("{}\t{}\t{}", t.row, t.col, t.tag);
        }
    } else {
        let (kind, level) = (a.kind.expect("clap requires kind"), a.level.expect("clap requires level"));
        let spec = PerturbationSpec::new(kind, level, &suite_cfg.severity)?;
        perturb::apply(&spec, &img)?.save_png(&a.output)?;
        println!("{} (parameter {}) -> {}", spec.tag(), spec.parameter, a.output.display());
    }
    Ok(Status::Complete)
}

pub fn suite(a: SuiteArgs) -> anyhow::Result<Status> {
    let cfg = suite_config(a.config.as_deref())?;
    let suite = perturb::build_suite(&cfg)?;
    println!("tag\tkind\tlevel\tparameter");
    for s in &suite {
        println!("{}\t{}\t{}\t{}", s.tag(), s.kind, s.level, s.parameter);
    }
    println!("# {} perturbations", suite.len());
    Ok(Status::Complete)
}

struct Loaded {
    config: StressConfig,
    dataset: Dataset,
    partition: SubgroupPartition,
}

fn load(config: StressConfig) -> anyhow::Result<Loaded> {
    let manifest = &config.dataset.manifest;
    let dataset = dataset::load_manifest(manifest, &config.dataset.schema(), &config.dataset.name)
        .with_context(|| format!("loading manifest {}", manifest.display()))?;
    let partition = dataset::resolve_subgroups(&config.subgroup_defs()?, &dataset)?;
    for g in &partition.groups {
        if g.excluded_unknown > 0 {
            log::warn!(
                "subgroup `{}`: {} sample(s) with unknown attribute excluded",
                g.name,
                g.excluded_unknown
            );
        }
    }
    Ok(Loaded {
        config,
        dataset,
        partition,
    })
}

fn load_config(path: &Path) -> anyhow::Result<StressConfig> {
    StressConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Writes results, disparities, trends and plots for a finished table.
fn write_reports(rt: &ResultTable, out: &Path, tolerance: f64, plots: bool) -> anyhow::Result<()> {
    report::write_results(rt, out)?;
    report::write_disparity(&report::disparity_table(rt), out.join(DISPARITY_FILE))?;
    if !rt.meta.suite.is_empty() {
        let trends: Vec<_> = MetricName::ALL
            .into_iter()
            .flat_map(|m| harness::summarize_monotonic(rt, m, tolerance))
            .collect();
        write_json(&out.join(TRENDS_FILE), &trends)?;
    }
    if plots {
        for metric in MetricName::ALL {
            report::emit_plots(rt, metric, out.join(PLOTS_DIR))?;
        }
    }
    Ok(())
}

fn scorer_command(cmd: &str) -> anyhow::Result<Vec<String>> {
    let parts = shlex::split(cmd).with_context(|| format!("cannot split scorer command `{cmd}`"))?;
    if parts.is_empty() {
        bail!("empty scorer command");
    }
    Ok(parts)
}

pub fn run(a: RunArgs) -> anyhow::Result<Status> {
    let started = unix_now();
    let clock = Instant::now();
    let mut config = load_config(&a.config)?;
    let ev = &mut config.evaluation;
    if let Some(p) = a.threshold_policy {
        ev.threshold_policy = p.into();
    }
    if let Some(b) = a.ece_bins {
        ev.ece_bins = b;
    }
    if let Some(b) = a.batch_size {
        ev.batch_size = b;
    }
    if let Some(r) = a.retries {
        ev.retries = r;
    }
    if a.scorer.scorer_cmd.is_some() || a.scorer.scorer_url.is_some() || a.scorer.predictions.is_some() {
        config.scorer = Default::default();
        config.scorer.command = a.scorer.scorer_cmd.as_deref().map(scorer_command).transpose()?;
        config.scorer.url = a.scorer.scorer_url.clone();
        config.scorer.predictions = a.scorer.predictions.clone();
    }
    config.validate()?;
    let workers = match a.workers {
        Some(0) => bail!("--workers must be >= 1"),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let thresholds = match &a.frozen_thresholds {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let v: ThresholdVector = serde_json::from_str(&text)
                .with_context(|| format!("parsing thresholds in {}", p.display()))?;
            ThresholdSource::Frozen(v)
        }
        None => ThresholdSource::Policy(config.evaluation.threshold_policy),
    };

    let loaded = load(config)?;
    let config = &loaded.config;
    let suite = perturb::build_suite(&config.suite)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    std::fs::write(a.out.join(CONFIG_ECHO), config.to_toml())
        .with_context(|| format!("writing {}", a.out.join(CONFIG_ECHO).display()))?;

    let job = StressJob {
        dataset: &loaded.dataset,
        partition: &loaded.partition,
        suite,
        severity: config.suite.severity,
        thresholds,
        n_bins: config.evaluation.ece_bins,
        retries: config.evaluation.retries,
        out_dir: Some(a.out.clone()),
        keep_images: a.keep_images,
        grid_hash: config.grid_hash(),
    };

    let mut provider: Box<dyn ScoreProvider + '_> = if let Some(p) = &config.scorer.predictions {
        Box::new(PrecomputedScoring::new(&loaded.dataset, p.clone()))
    } else {
        let handshake = Duration::from_secs(a.handshake_timeout);
        let job_timeout = Duration::from_secs(a.job_timeout);
        let mut scorers: Vec<Box<dyn Scorer>> = Vec::with_capacity(workers);
        for _ in 0..workers {
            if let Some(cmd) = &config.scorer.command {
                scorers.push(Box::new(ProcessScorer::launch(cmd.clone(), handshake, job_timeout)?));
            } else if let Some(url) = &config.scorer.url {
                scorers.push(http_scorer(url, job_timeout)?);
            } else {
                bail!("no scorer given: use --scorer-cmd, --scorer-url, --predictions or a [scorer] config section");
            }
        }
        let mut live = LiveScoring::new(&loaded.dataset, scorers, config.evaluation.batch_size)?;
        if a.keep_images {
            live = live.keep_images(a.out.join("images"));
        }
        Box::new(live)
    };

    let outcome = harness::run_stress(&job, provider.as_mut(), a.resume)?;
    drop(provider);
    write_json(&a.out.join(THRESHOLDS_FILE), &outcome.clean.thresholds)?;
    write_reports(&outcome.table, &a.out, config.evaluation.monotone_tolerance, true)?;
    write_run_log(&a.out, &outcome, started, clock.elapsed(), workers)?;
    print_summary(&outcome, config.evaluation.monotone_tolerance);
    Ok(if outcome.is_complete() {
        Status::Complete
    } else {
        Status::Partial
    })
}

#[cfg(feature = "http")]
fn http_scorer(url: &str, timeout: Duration) -> anyhow::Result<Box<dyn Scorer>> {
    Ok(Box::new(stressbench::scorer::HttpScorer::connect(url, timeout)?))
}

#[cfg(not(feature = "http"))]
fn http_scorer(_url: &str, _timeout: Duration) -> anyhow::Result<Box<dyn Scorer>> {
    bail!("this build has no HTTP support")
}

fn write_run_log(
    out: &Path,
    outcome: &RunOutcome,
    started: f64,
    elapsed: Duration,
    workers: usize,
) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct RunLog<'a> {
        started_unix: f64,
        finished_unix: f64,
        elapsed_seconds: f64,
        workers: usize,
        scored: &'a [String],
        failed: &'a [String],
        warnings: &'a [String],
    }
    write_json(
        &out.join(RUN_LOG),
        &RunLog {
            started_unix: started,
            finished_unix: unix_now(),
            elapsed_seconds: elapsed.as_secs_f64(),
            workers,
            scored: &outcome.scored,
            failed: &outcome.failed,
            warnings: &outcome.warnings,
        },
    )
}

fn print_summary(outcome: &RunOutcome, tolerance: f64) {
    let rt = &outcome.table;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} passes, {} rows, {} failed",
        1 + rt.meta.suite.len(),
        rt.rows.len(),
        outcome.failed.len()
    );
    let trends = harness::summarize_monotonic(rt, MetricName::Auc, tolerance);
    let monotone = trends.iter().filter(|t| t.monotone == Some(true)).count();
    println!("AUC trends monotone: {monotone}/{}", trends.len());
    for (c, class) in rt.meta.classes.iter().enumerate() {
        let clean = rt
            .get(class, dataset::ALL_GROUP, None, 0, MetricName::Auc)
            .and_then(|r| r.value.value());
        println!(
            "{class}: clean AUC {} at threshold {}",
            clean.map_or("NA".into(), |v| format!("{v:.4}")),
            rt.meta.thresholds.thresholds[c]
        );
    }
}

pub fn metrics(a: MetricsArgs) -> anyhow::Result<Status> {
    let mut config = load_config(&a.config)?;
    if let Some(p) = a.threshold_policy {
        config.evaluation.threshold_policy = p.into();
    }
    if let Some(b) = a.ece_bins {
        config.evaluation.ece_bins = b;
    }
    config.validate()?;
    let predictions = a
        .predictions
        .clone()
        .or_else(|| config.scorer.predictions.clone())
        .context("no prediction file: pass --predictions or set scorer.predictions")?;
    let loaded = load(config)?;
    let config = &loaded.config;
    let job = StressJob {
        dataset: &loaded.dataset,
        partition: &loaded.partition,
        suite: Vec::new(),
        severity: config.suite.severity,
        thresholds: ThresholdSource::Policy(config.evaluation.threshold_policy),
        n_bins: config.evaluation.ece_bins,
        retries: 0,
        out_dir: None,
        keep_images: false,
        grid_hash: config.grid_hash(),
    };
    let mut provider = PrecomputedScoring::new(&loaded.dataset, predictions);
    let outcome = harness::run_stress(&job, &mut provider, false)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    std::fs::write(a.out.join(CONFIG_ECHO), config.to_toml())?;
    write_json(&a.out.join(THRESHOLDS_FILE), &outcome.clean.thresholds)?;
    write_reports(&outcome.table, &a.out, config.evaluation.monotone_tolerance, false)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("class\tmetric\tgap\tworst\tundefined");
    for row in report::disparity_table(&outcome.table) {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            row.class,
            row.metric,
            row.gap.map_or("NA".into(), |g| g.to_string()),
            row.worst.as_deref().unwrap_or("NA"),
            row.undefined.join(";")
        );
    }
    Ok(Status::Complete)
}

/// Parses `name=value:p,value:p`.
pub fn parse_attribute(s: &str) -> anyhow::Result<CategoricalSpec> {
    let (name, rest) = s
        .split_once('=')
        .with_context(|| format!("attribute `{s}`: expected name=value:p,..."))?;
    let categories = rest
        .split(',')
        .map(|part| {
            let (v, p) = part
                .rsplit_once(':')
                .with_context(|| format!("attribute `{name}`: `{part}` is not value:p"))?;
            let p: f64 = p
                .parse()
                .with_context(|| format!("attribute `{name}`: bad proportion `{p}`"))?;
            Ok((v.to_string(), p))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(CategoricalSpec {
        name: name.to_string(),
        categories,
    })
}

fn parse_numeric(s: &str) -> anyhow::Result<NumericSpec> {
    let parsed = s.split_once('=').and_then(|(name, range)| {
        let (lo, hi) = range.split_once(':')?;
        Some(NumericSpec {
            name: name.to_string(),
            min: lo.parse().ok()?,
            max: hi.parse().ok()?,
        })
    });
    parsed.with_context(|| format!("numeric attribute `{s}`: expected name=min:max"))
}

pub fn synth(a: SynthArgs) -> anyhow::Result<Status> {
    let defaults = SynthSpec::default();
    let prevalence = if a.prevalence.is_empty() {
        vec![0.5; a.classes.len()]
    } else {
        a.prevalence.clone()
    };
    let categorical = if a.attributes.is_empty() {
        defaults.categorical
    } else {
        a.attributes
            .iter()
            .map(|s| parse_attribute(s))
            .collect::<anyhow::Result<_>>()?
    };
    let spec = SynthSpec {
        seed: a.seed,
        n: a.n,
        size: a.size,
        classes: a.classes.clone(),
        prevalence,
        categorical,
        numeric: a.numeric.iter().map(|s| parse_numeric(s)).collect::<anyhow::Result<_>>()?,
        separability: a.separability,
    };
    let out = synth::generate(&spec, &a.out)?;
    println!(
        "wrote {} samples to {} (expected clean AUC {:.6})",
        out.dataset.len(),
        a.out.display(),
        spec.expected_auc()
    );
    Ok(Status::Complete)
}

pub fn validate(a: ValidateArgs) -> anyhow::Result<Status> {
    let loaded = load(load_config(&a.config)?)?;
    let report = dataset::validate(&loaded.dataset, a.check_files);
    println!("{} samples", report.n_samples);
    for (class, n) in &report.positives {
        println!("class {class}: {n} positive");
    }
    for (attr, hist) in &report.histograms {
        let parts: Vec<String> = hist.iter().map(|(v, n)| format!("{v}={n}")).collect();
        println!("attribute {attr}: {}", parts.join(", "));
    }
    for g in &loaded.partition.groups {
        println!("subgroup {}: {} samples", g.name, g.indices.len());
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.missing_files.is_empty() {
        bail!(
            "{} image file(s) missing, first: {}",
            report.missing_files.len(),
            report.missing_files[0]
        );
    }
    Ok(Status::Complete)
}

fn opt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |v| v.to_string())
}

pub fn compare(a: CompareArgs) -> anyhow::Result<Status> {
    let ra = report::read_results(&a.a).with_context(|| format!("reading {}", a.a.display()))?;
    let rb = report::read_results(&a.b).with_context(|| format!("reading {}", a.b.display()))?;
    let cmp = harness::compare_runs(&ra, &rb)?;
    std::fs::create_dir_all(&a.out)?;
    let cells_path = a.out.join("comparison.csv");
    let mut w = csv_writer(&cells_path)?;
    w.write_record(["class", "subgroup", "kind", "level", "metric", "a", "b", "diff"])?;
    for c in &cmp.cells {
        w.write_record([
            c.class.clone(),
            c.subgroup.clone(),
            harness::kind_name(c.kind).to_string(),
            c.level.to_string(),
            c.metric.to_string(),
            opt(c.a),
            opt(c.b),
            opt(c.diff),
        ])?;
    }
    w.flush()?;
    let stab_path = a.out.join("stability.csv");
    let mut w = csv_writer(&stab_path)?;
    w.write_record(["kind", "class", "subgroup", "metric", "stability_a", "stability_b"])?;
    for s in &cmp.stability {
        w.write_record([
            s.kind.to_string(),
            s.class.clone(),
            s.subgroup.clone(),
            s.metric.to_string(),
            opt(s.stability_a),
            opt(s.stability_b),
        ])?;
    }
    w.flush()?;
    let max = cmp
        .cells
        .iter()
        .filter_map(|c| c.diff)
        .map(f64::abs)
        .fold(0.0, f64::max);
    println!("{} cells compared, max |diff| {max}", cmp.cells.len());
    Ok(Status::Complete)
}

fn csv_writer(path: &PathBuf) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn conformance(a: ConformanceArgs) -> anyhow::Result<Status> {
    let command = scorer_command(&a.scorer_cmd)?;
    let mut failures = 0;
    for path in &a.transcript {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let exchanges = conformance::parse_transcript(&text)?;
        let mut process = RawProcess::spawn(&command, Duration::from_secs(a.timeout))?;
        let outcomes = conformance::run_transcript(&exchanges, |line| process.exchange(line))?;
        for o in &outcomes {
            if o.passed {
                println!("PASS {} #{}", path.display(), o.index);
            } else {
                failures += 1;
                println!("FAIL {} #{}: {}", path.display(), o.index, o.detail);
            }
        }
    }
    if failures > 0 {
        bail!("{failures} transcript step(s) failed");
    }
    Ok(Status::Complete)
}
