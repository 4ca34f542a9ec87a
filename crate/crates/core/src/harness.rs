//! Progressive stress runs.
//!
//! A run scores the clean test set, freezes per-class thresholds, then scores
//! every perturbation of the suite and stratifies each pass into metric rows.
//! With an output directory, every finished pass is cached as a prediction
//! CSV and recorded in `state.json`, so an interrupted or partially failed run
//! can be resumed and produces the same table as an uninterrupted one.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SubgroupPartition};
use crate::metrics::{
    select_threshold, stratified_eval, MetricName, MetricResult, MetricValue, ThresholdPolicy,
    ThresholdVector,
};
use crate::perturb::{self, PerturbationKind, PerturbationSpec, SeverityTable};
use crate::scorer::{self, ScoreMatrix, Scorer, ScorerInfo};
use crate::{Error, ImageBuffer, Result};

pub const STATE_FILE: &str = "state.json";
pub const CLEAN_SCORES_FILE: &str = "clean_scores.csv";
pub const SCORES_DIR: &str = "scores";

/// Where the operating thresholds come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSource {
    /// Derive from this run's clean scores.
    Policy(ThresholdPolicy),
    /// Reuse thresholds frozen elsewhere, e.g. on the development domain.
    Frozen(ThresholdVector),
}

#[derive(Debug, Clone)]
pub struct StressJob<'a> {
    pub dataset: &'a Dataset,
    pub partition: &'a SubgroupPartition,
    pub suite: Vec<PerturbationSpec>,
    pub severity: SeverityTable,
    pub thresholds: ThresholdSource,
    pub n_bins: usize,
    pub retries: usize,
    /// Cache directory for scores and resume state.
    pub out_dir: Option<PathBuf>,
    /// Keep perturbed images under `out_dir/images/` for debugging.
    pub keep_images: bool,
    pub grid_hash: String,
}

/// Produces score matrices for the clean set (`None`) or one perturbation.
pub trait ScoreProvider {
    fn info(&self) -> &ScorerInfo;
    fn score(&mut self, spec: Option<&PerturbationSpec>) -> Result<ScoreMatrix>;
    fn reset(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Scores images live through one or more scorers, one worker thread each.
pub struct LiveScoring<'a> {
    dataset: &'a Dataset,
    scorers: Vec<Box<dyn Scorer + 'a>>,
    batch_size: usize,
    keep_images: Option<PathBuf>,
}

impl<'a> LiveScoring<'a> {
    pub fn new(dataset: &'a Dataset, scorers: Vec<Box<dyn Scorer + 'a>>, batch_size: usize) -> Result<Self> {
        let first = scorers
            .first()
            .ok_or_else(|| Error::InvalidParameter("at least one scorer is required".into()))?;
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        let info = first.info().clone();
        if scorers.iter().any(|s| s.info() != &info) {
            return Err(Error::Protocol(
                "parallel scorers declared different identities".into(),
            ));
        }
        info.check_classes(dataset.class_names())?;
        Ok(Self {
            dataset,
            scorers,
            batch_size,
            keep_images: None,
        })
    }

    pub fn keep_images(mut self, dir: PathBuf) -> Self {
        self.keep_images = Some(dir);
        self
    }
}

/// The read-only part of [`LiveScoring`] shared by worker threads.
#[derive(Clone, Copy)]
struct Prep<'a> {
    dataset: &'a Dataset,
    keep_images: Option<&'a Path>,
}

impl Prep<'_> {
    fn prepare(
        &self,
        index: usize,
        spec: Option<&PerturbationSpec>,
        info: &ScorerInfo,
    ) -> Result<ImageBuffer> {
        let img = ImageBuffer::open(self.dataset.image_path(index))?;
        let img = match spec {
            Some(spec) => perturb::apply(spec, &img)?,
            None => img,
        };
        if let Some(dir) = self.keep_images {
            let tag = spec.map_or_else(|| "clean".to_string(), file_stem);
            let dir = dir.join(tag);
            std::fs::create_dir_all(&dir)
                .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            img.save_png(dir.join(format!("{}.png", sanitize(&self.dataset.samples[index].id))))?;
        }
        img.with_channels(info.input.channels)?
            .resize_bilinear(info.input.height, info.input.width)
    }
}

fn score_chunk(
    live: Prep<'_>,
    scorer: &mut dyn Scorer,
    indices: &[usize],
    spec: Option<&PerturbationSpec>,
) -> Result<Vec<Vec<f32>>> {
    let info = scorer.info().clone();
    let images = indices
        .iter()
        .map(|&i| live.prepare(i, spec, &info))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = indices
        .iter()
        .map(|&i| live.dataset.samples[i].id.clone())
        .collect();
    let rows = scorer.score_batch(&images, &ids)?;
    scorer::check_rows(&rows, &ids, &info.classes)?;
    Ok(rows)
}

impl ScoreProvider for LiveScoring<'_> {
    fn info(&self) -> &ScorerInfo {
        self.scorers[0].info()
    }

    fn score(&mut self, spec: Option<&PerturbationSpec>) -> Result<ScoreMatrix> {
        let n = self.dataset.len();
        let n_classes = self.dataset.class_names().len();
        let chunks: Vec<Vec<usize>> = (0..n)
            .collect::<Vec<_>>()
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect();
        let results: Mutex<Vec<Option<Vec<Vec<f32>>>>> = Mutex::new(vec![None; chunks.len()]);
        let first_error: Mutex<Option<(usize, Error)>> = Mutex::new(None);
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);

        let live = Prep {
            dataset: self.dataset,
            keep_images: self.keep_images.as_deref(),
        };
        {
            let chunks = &chunks;
            std::thread::scope(|scope| {
                for scorer in self.scorers.iter_mut() {
                    let (results, first_error, next, stop) =
                        (&results, &first_error, &next, &stop);
                    scope.spawn(move || loop {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let c = next.fetch_add(1, Ordering::SeqCst);
                        if c >= chunks.len() {
                            break;
                        }
                        match score_chunk(live, scorer.as_mut(), &chunks[c], spec) {
                            Ok(rows) => results.lock().unwrap()[c] = Some(rows),
                            Err(e) => {
                                stop.store(true, Ordering::SeqCst);
                                let mut slot = first_error.lock().unwrap();
                                // keep the error of the earliest chunk for stable messages
                                if slot.as_ref().is_none_or(|(prev, _)| c < *prev) {
                                    *slot = Some((c, e));
                                }
                                break;
                            }
                        }
                    });
                }
            });
        }
        if let Some((_, e)) = first_error.into_inner().unwrap() {
            return Err(e);
        }
        let rows: Vec<Vec<f32>> = results
            .into_inner()
            .unwrap()
            .into_iter()
            .flat_map(|r| r.expect("every chunk scored"))
            .collect();
        ScoreMatrix::from_rows(self.dataset.ids(), rows, n_classes)
    }

    fn reset(&mut self) -> Result<()> {
        for s in &mut self.scorers {
            s.reset()?;
        }
        Ok(())
    }
}

/// Reads scores for every condition from one prediction CSV with a
/// `perturbation` column (`clean` for the unperturbed pass).
pub struct PrecomputedScoring<'a> {
    dataset: &'a Dataset,
    path: PathBuf,
    info: ScorerInfo,
}

impl<'a> PrecomputedScoring<'a> {
    pub fn new(dataset: &'a Dataset, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let info = ScorerInfo {
            classes: dataset.class_names().to_vec(),
            input: scorer::InputSpec {
                channels: 1,
                height: 1,
                width: 1,
            },
            identity: format!("precomputed:{}", path.display()),
        };
        Self {
            dataset,
            path,
            info,
        }
    }
}

impl ScoreProvider for PrecomputedScoring<'_> {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score(&mut self, spec: Option<&PerturbationSpec>) -> Result<ScoreMatrix> {
        let tag = spec.map_or_else(|| scorer::CLEAN_TAG.to_string(), PerturbationSpec::tag);
        Ok(scorer::load_precomputed(&self.path, self.dataset, &tag)?.matrix)
    }
}

/// Resume state written next to the cached scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub grid_hash: String,
    pub scorer_identity: String,
    pub thresholds: ThresholdVector,
    pub completed: Vec<String>,
    pub failed: Vec<String>,
}

impl JobState {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(STATE_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(STATE_FILE);
        let tmp = dir.join(format!("{STATE_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.+".contains(c) { c } else { '_' })
        .collect()
}

fn file_stem(spec: &PerturbationSpec) -> String {
    if spec.kind.is_bidirectional() {
        format!("{}_{:+}", spec.kind, spec.level)
    } else {
        format!("{}_{}", spec.kind, spec.level)
    }
}

fn cached_scores_path(dir: &Path, spec: &PerturbationSpec) -> PathBuf {
    dir.join(SCORES_DIR).join(format!("{}.csv", file_stem(spec)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub name: String,
    pub size: usize,
    pub excluded_unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub tag: String,
    pub kind: PerturbationKind,
    pub level: i32,
    pub parameter: f64,
}

/// Everything needed to interpret a result table. Deliberately free of
/// wall-clock data so identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema: String,
    pub dataset: String,
    pub n_samples: usize,
    pub classes: Vec<String>,
    pub subgroups: Vec<SubgroupSummary>,
    pub severity: SeverityTable,
    pub suite: Vec<SuiteEntry>,
    pub thresholds: ThresholdVector,
    pub ece_bins: usize,
    pub grid_hash: String,
    pub scorer_identity: String,
    pub failed_specs: Vec<String>,
}

pub const METADATA_SCHEMA: &str = "stressbench-run/1";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<MetricResult>,
    pub meta: RunMetadata,
}

/// Canonical row order: dataset, class, subgroup, kind name (`clean` for the
/// unperturbed pass), level, metric name; all textual keys compared
/// lexicographically.
pub fn sort_rows(rows: &mut [MetricResult]) {
    rows.sort_by(|a, b| {
        let ka = (&a.dataset, &a.class, &a.subgroup, kind_name(a.kind), a.level, a.metric.as_str());
        let kb = (&b.dataset, &b.class, &b.subgroup, kind_name(b.kind), b.level, b.metric.as_str());
        ka.cmp(&kb)
    });
}

pub fn kind_name(kind: Option<PerturbationKind>) -> &'static str {
    kind.map_or("clean", PerturbationKind::name)
}

impl ResultTable {
    pub fn get(
        &self,
        class: &str,
        subgroup: &str,
        kind: Option<PerturbationKind>,
        level: i32,
        metric: MetricName,
    ) -> Option<&MetricResult> {
        self.rows.iter().find(|r| {
            r.class == class
                && r.subgroup == subgroup
                && r.kind == kind
                && r.level == level
                && r.metric == metric
        })
    }

    /// `(1 + specs) x classes x subgroups (with All) x metrics`.
    pub fn expected_rows(&self) -> usize {
        (1 + self.meta.suite.len())
            * self.meta.classes.len()
            * self.meta.subgroups.len()
            * MetricName::ALL.len()
    }

    /// Every (condition, class, subgroup, metric) cell exactly once.
    pub fn check_complete(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            let key = (
                r.class.clone(),
                r.subgroup.clone(),
                kind_name(r.kind),
                r.level,
                r.metric,
            );
            if !seen.insert(key) {
                return Err(Error::GridMismatch(format!(
                    "duplicate cell {}/{}/{}/{}/{}",
                    r.class,
                    r.subgroup,
                    kind_name(r.kind),
                    r.level,
                    r.metric
                )));
            }
        }
        if seen.len() != self.expected_rows() {
            return Err(Error::GridMismatch(format!(
                "{} cells present, {} expected",
                seen.len(),
                self.expected_rows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanRun {
    pub scores: ScoreMatrix,
    pub thresholds: ThresholdVector,
    pub rows: Vec<MetricResult>,
    pub warnings: Vec<String>,
}

fn freeze_thresholds(
    source: &ThresholdSource,
    scores: &ScoreMatrix,
    ds: &Dataset,
) -> Result<(ThresholdVector, Vec<String>)> {
    match source {
        ThresholdSource::Frozen(v) => {
            if v.thresholds.len() != ds.class_names().len() {
                return Err(Error::Alignment(format!(
                    "{} frozen thresholds for {} classes",
                    v.thresholds.len(),
                    ds.class_names().len()
                )));
            }
            Ok((v.clone(), Vec::new()))
        }
        ThresholdSource::Policy(policy) => {
            let mut thresholds = Vec::new();
            let mut warnings = Vec::new();
            for (c, class) in ds.class_names().iter().enumerate() {
                let choice = select_threshold(&scores.column(c), &ds.class_labels(c), *policy)?;
                if let Some(w) = choice.warning {
                    warnings.push(format!("class `{class}`: {w}"));
                }
                thresholds.push(choice.threshold);
            }
            Ok((
                ThresholdVector {
                    thresholds,
                    provenance: *policy,
                },
                warnings,
            ))
        }
    }
}

/// Scores the unperturbed set, freezes thresholds and emits level-0 rows.
pub fn run_clean(job: &StressJob<'_>, provider: &mut dyn ScoreProvider) -> Result<CleanRun> {
    let scores = provider.score(None)?;
    let (thresholds, warnings) = freeze_thresholds(&job.thresholds, &scores, job.dataset)?;
    let rows = stratified_eval(&scores, job.dataset, job.partition, &thresholds, job.n_bins, None, 0)?;
    if let Some(dir) = &job.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        scorer::write_scores(
            dir.join(CLEAN_SCORES_FILE),
            &scores,
            job.dataset.class_names(),
            None,
        )?;
    }
    Ok(CleanRun {
        scores,
        thresholds,
        rows,
        warnings,
    })
}

fn failed_rows(job: &StressJob<'_>, spec: &PerturbationSpec) -> Vec<MetricResult> {
    let mut rows = Vec::new();
    for class in job.dataset.class_names() {
        for group in &job.partition.groups {
            for metric in MetricName::ALL {
                rows.push(MetricResult {
                    dataset: job.dataset.name.clone(),
                    class: class.clone(),
                    subgroup: group.name.clone(),
                    kind: Some(spec.kind),
                    level: spec.level,
                    metric,
                    value: MetricValue::Failed,
                    n: group.indices.len(),
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub table: ResultTable,
    pub clean: CleanRun,
    /// Tags of specs that still failed after retries.
    pub failed: Vec<String>,
    /// Tags actually scored in this invocation (excludes cached ones).
    pub scored: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Runs the clean pass and the whole sweep. With `resume`, a matching
/// `state.json` in the output directory supplies thresholds and finished
/// passes, and only missing or failed specs are scored.
pub fn run_stress(job: &StressJob<'_>, provider: &mut dyn ScoreProvider, resume: bool) -> Result<RunOutcome> {
    let identity = provider.info().identity.clone();
    let previous = match (&job.out_dir, resume) {
        (Some(dir), true) => JobState::load(dir)?,
        _ => None,
    };
    if let Some(state) = &previous {
        if state.grid_hash != job.grid_hash {
            return Err(Error::GridMismatch(format!(
                "cannot resume: state was written for config {} but this job is {}",
                state.grid_hash, job.grid_hash
            )));
        }
    }

    let clean = match (&previous, &job.out_dir) {
        (Some(state), Some(dir)) if dir.join(CLEAN_SCORES_FILE).exists() => {
            let scores =
                scorer::load_precomputed(dir.join(CLEAN_SCORES_FILE), job.dataset, scorer::CLEAN_TAG)?
                    .matrix;
            let thresholds = state.thresholds.clone();
            let rows = stratified_eval(
                &scores,
                job.dataset,
                job.partition,
                &thresholds,
                job.n_bins,
                None,
                0,
            )?;
            CleanRun {
                scores,
                thresholds,
                rows,
                warnings: Vec::new(),
            }
        }
        _ => run_clean(job, provider)?,
    };
    let mut warnings = clean.warnings.clone();

    let mut state = JobState {
        grid_hash: job.grid_hash.clone(),
        scorer_identity: identity.clone(),
        thresholds: clean.thresholds.clone(),
        completed: Vec::new(),
        failed: Vec::new(),
    };
    if let Some(dir) = &job.out_dir {
        std::fs::create_dir_all(dir.join(SCORES_DIR))
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        state.save(dir)?;
    }
    let done_before: BTreeSet<String> = previous
        .map(|s| s.completed.into_iter().collect())
        .unwrap_or_default();

    let mut rows = clean.rows.clone();
    let mut scored = Vec::new();
    for spec in &job.suite {
        let tag = spec.tag();
        let cached = match &job.out_dir {
            Some(dir) if done_before.contains(&tag) => {
                let path = cached_scores_path(dir, spec);
                path.exists()
                    .then(|| scorer::load_precomputed(&path, job.dataset, &tag))
                    .transpose()?
                    .map(|p| p.matrix)
            }
            _ => None,
        };
        let result = match cached {
            Some(m) => Ok(m),
            None => {
                scored.push(tag.clone());
                let mut attempt = provider.score(Some(spec));
                let mut tries = 0;
                while attempt.is_err() && tries < job.retries {
                    tries += 1;
                    log::warn!(
                        "{tag}: attempt {tries} failed ({}), retrying",
                        attempt.as_ref().err().map(ToString::to_string).unwrap_or_default()
                    );
                    provider.reset()?;
                    attempt = provider.score(Some(spec));
                }
                attempt
            }
        };
        match result {
            Ok(scores) => {
                if let Some(dir) = &job.out_dir {
                    scorer::write_scores(
                        cached_scores_path(dir, spec),
                        &scores,
                        job.dataset.class_names(),
                        Some(&tag),
                    )?;
                }
                rows.extend(stratified_eval(
                    &scores,
                    job.dataset,
                    job.partition,
                    &clean.thresholds,
                    job.n_bins,
                    Some(spec.kind),
                    spec.level,
                )?);
                state.completed.push(tag);
            }
            Err(e) => {
                warnings.push(format!("{tag}: failed after {} retries: {e}", job.retries));
                rows.extend(failed_rows(job, spec));
                state.failed.push(tag);
            }
        }
        if let Some(dir) = &job.out_dir {
            state.save(dir)?;
        }
    }

    sort_rows(&mut rows);
    let meta = RunMetadata {
        schema: METADATA_SCHEMA.to_string(),
        dataset: job.dataset.name.clone(),
        n_samples: job.dataset.len(),
        classes: job.dataset.class_names().to_vec(),
        subgroups: job
            .partition
            .groups
            .iter()
            .map(|g| SubgroupSummary {
                name: g.name.clone(),
                size: g.indices.len(),
                excluded_unknown: g.excluded_unknown,
            })
            .collect(),
        severity: job.severity,
        suite: job
            .suite
            .iter()
            .map(|s| SuiteEntry {
                tag: s.tag(),
                kind: s.kind,
                level: s.level,
                parameter: s.parameter,
            })
            .collect(),
        thresholds: clean.thresholds.clone(),
        ece_bins: job.n_bins,
        grid_hash: job.grid_hash.clone(),
        scorer_identity: identity,
        failed_specs: state.failed.clone(),
    };
    let table = ResultTable { rows, meta };
    table.check_complete()?;
    Ok(RunOutcome {
        table,
        clean,
        failed: state.failed,
        scored,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSummary {
    pub class: String,
    pub subgroup: String,
    pub kind: PerturbationKind,
    /// `-1` or `+1`; blur is always `+1`.
    pub sign: i32,
    pub metric: MetricName,
    pub clean: Option<f64>,
    /// Levels ordered by magnitude, with their values.
    pub levels: Vec<i32>,
    pub values: Vec<Option<f64>>,
    /// `None` when any value in the sequence is undefined or failed.
    pub monotone: Option<bool>,
    /// Clean value minus the worst value (sign-adjusted for metrics where
    /// lower is better).
    pub max_drop: Option<f64>,
}

/// Non-increasing check (within `eps`) for metrics where higher is better,
/// non-decreasing for FPR and ECE.
pub fn is_monotone(values: &[f64], higher_is_better: bool, eps: f64) -> bool {
    values.windows(2).all(|w| {
        if higher_is_better {
            w[1] <= w[0] + eps
        } else {
            w[1] >= w[0] - eps
        }
    })
}

/// (class, subgroup, kind, sign)
type TrendKey = (String, String, PerturbationKind, i32);

pub fn summarize_monotonic(rt: &ResultTable, metric: MetricName, eps: f64) -> Vec<TrendSummary> {
    let mut cells: BTreeMap<TrendKey, Vec<(i32, MetricValue)>> = BTreeMap::new();
    let mut clean: BTreeMap<(String, String), MetricValue> = BTreeMap::new();
    for r in rt.rows.iter().filter(|r| r.metric == metric) {
        match r.kind {
            None => {
                clean.insert((r.class.clone(), r.subgroup.clone()), r.value);
            }
            Some(kind) => cells
                .entry((r.class.clone(), r.subgroup.clone(), kind, r.level.signum()))
                .or_default()
                .push((r.level, r.value)),
        }
    }
    let hib = metric.higher_is_better();
    cells
        .into_iter()
        .map(|((class, subgroup, kind, sign), mut seq)| {
            seq.sort_by_key(|(level, _)| level.abs());
            let values: Vec<Option<f64>> = seq.iter().map(|(_, v)| v.value()).collect();
            let defined: Option<Vec<f64>> = values.iter().copied().collect();
            let clean_value = clean
                .get(&(class.clone(), subgroup.clone()))
                .and_then(|v| v.value());
            let monotone = defined.as_ref().map(|v| is_monotone(v, hib, eps));
            let worst = values.iter().flatten().copied().reduce(|a, b| {
                if hib {
                    a.min(b)
                } else {
                    a.max(b)
                }
            });
            let max_drop = match (clean_value, worst) {
                (Some(c), Some(w)) => Some(if hib { c - w } else { w - c }),
                _ => None,
            };
            TrendSummary {
                class,
                subgroup,
                kind,
                sign,
                metric,
                clean: clean_value,
                levels: seq.iter().map(|(l, _)| *l).collect(),
                values,
                monotone,
                max_drop,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDiff {
    pub class: String,
    pub subgroup: String,
    pub kind: Option<PerturbationKind>,
    pub level: i32,
    pub metric: MetricName,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `b - a` when both are defined.
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub kind: PerturbationKind,
    pub class: String,
    pub subgroup: String,
    pub metric: MetricName,
    /// Max |metric(level) - metric(clean)| over the kind's levels; lower is
    /// more robust.
    pub stability_a: Option<f64>,
    pub stability_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunComparison {
    pub cells: Vec<CellDiff>,
    pub stability: Vec<StabilityRow>,
}

type CellKey = (String, String, &'static str, i32, MetricName);

fn index(rt: &ResultTable) -> BTreeMap<CellKey, &MetricResult> {
    rt.rows
        .iter()
        .map(|r| {
            (
                (r.class.clone(), r.subgroup.clone(), kind_name(r.kind), r.level, r.metric),
                r,
            )
        })
        .collect()
}

fn stability(rt: &ResultTable) -> BTreeMap<(PerturbationKind, String, String, MetricName), Option<f64>> {
    let mut out: BTreeMap<_, Option<f64>> = BTreeMap::new();
    let cells = index(rt);
    for r in &rt.rows {
        let Some(kind) = r.kind else { continue };
        let clean = cells
            .get(&(r.class.clone(), r.subgroup.clone(), "clean", 0, r.metric))
            .and_then(|c| c.value.value());
        let delta = match (clean, r.value.value()) {
            (Some(c), Some(v)) => Some((v - c).abs()),
            _ => None,
        };
        let slot = out
            .entry((kind, r.class.clone(), r.subgroup.clone(), r.metric))
            .or_insert(Some(0.0));
        *slot = match (*slot, delta) {
            (Some(s), Some(d)) => Some(s.max(d)),
            _ => None,
        };
    }
    out
}

/// Paired comparison of two runs over the same grid.
pub fn compare_runs(a: &ResultTable, b: &ResultTable) -> Result<RunComparison> {
    let mut problems = Vec::new();
    if a.meta.dataset != b.meta.dataset {
        problems.push(format!("dataset `{}` vs `{}`", a.meta.dataset, b.meta.dataset));
    }
    if a.meta.classes != b.meta.classes {
        problems.push(format!("classes {:?} vs {:?}", a.meta.classes, b.meta.classes));
    }
    let tags = |rt: &ResultTable| rt.meta.suite.iter().map(|s| s.tag.clone()).collect::<Vec<_>>();
    if tags(a) != tags(b) {
        problems.push(format!("suite {:?} vs {:?}", tags(a), tags(b)));
    }
    let groups = |rt: &ResultTable| rt.meta.subgroups.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
    if groups(a) != groups(b) {
        problems.push(format!("subgroups {:?} vs {:?}", groups(a), groups(b)));
    }
    let (ia, ib) = (index(a), index(b));
    if problems.is_empty() && ia.keys().ne(ib.keys()) {
        problems.push("result cells differ".into());
    }
    if !problems.is_empty() {
        return Err(Error::GridMismatch(problems.join("; ")));
    }

    let cells = ia
        .iter()
        .map(|(key, ra)| {
            let rb = ib[key];
            let (va, vb) = (ra.value.value(), rb.value.value());
            CellDiff {
                class: ra.class.clone(),
                subgroup: ra.subgroup.clone(),
                kind: ra.kind,
                level: ra.level,
                metric: ra.metric,
                a: va,
                b: vb,
                diff: va.zip(vb).map(|(x, y)| y - x),
            }
        })
        .collect();
    let (sa, sb) = (stability(a), stability(b));
    let stability = sa
        .iter()
        .map(|((kind, class, subgroup, metric), va)| StabilityRow {
            kind: *kind,
            class: class.clone(),
            subgroup: subgroup.clone(),
            metric: *metric,
            stability_a: *va,
            stability_b: sb
                .get(&(*kind, class.clone(), subgroup.clone(), *metric))
                .copied()
                .flatten(),
        })
        .collect();
    Ok(RunComparison { cells, stability })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_examples() {
        assert!(is_monotone(&[0.90, 0.85, 0.80], true, 0.0));
        assert!(!is_monotone(&[0.90, 0.92, 0.80], true, 0.0));
        assert!(is_monotone(&[0.90, 0.904, 0.80], true, 0.005));
        assert!(is_monotone(&[0.1, 0.2, 0.2], false, 0.0));
        assert!(!is_monotone(&[0.3, 0.2], false, 0.0));
    }

    #[test]
    fn file_stems_are_safe() {
        let t = SeverityTable::default();
        let s = PerturbationSpec::new(PerturbationKind::Gamma, -2, &t).unwrap();
        assert_eq!(file_stem(&s), "gamma_-2");
        let s = PerturbationSpec::new(PerturbationKind::Blur, 4, &t).unwrap();
        assert_eq!(file_stem(&s), "blur_4");
        assert_eq!(sanitize("a/b c"), "a_b_c");
    }
}
