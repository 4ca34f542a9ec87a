//! Threshold-agnostic and operating-point metrics.
//!
//! Undefined values (a class absent from a subgroup, an empty bin set) are
//! `None`, never zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SubgroupPartition};
use crate::scorer::ScoreMatrix;
use crate::{Error, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Alignment(format!(
            "{a} scores but {b} labels"
        )));
    }
    Ok(())
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. Computed from midranks in
/// `O(n log n)`. `None` when either class is empty.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    check_len(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks (1-based) over positives; midranks are multiples of 1/2
    // so this stays exact in f64 for any realistic n.
    let mut rank_sum = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_in_tie = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += midrank * pos_in_tie as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos as f64 * n_neg as f64)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Tallies predictions with the rule `score >= threshold` is positive.
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    check_len(scores.len(), labels.len())?;
    let mut c = ConfusionCounts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
}

pub fn rates(c: &ConfusionCounts) -> Rates {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Rates {
        tpr: ratio(c.tp, c.tp + c.fn_),
        fpr: ratio(c.fp, c.fp + c.tn),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    Fixed,
    F1OptimalOnClean,
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "f1-optimal-on-clean" => Ok(Self::F1OptimalOnClean),
            other => Err(Error::InvalidParameter(format!(
                "unknown threshold policy `{other}` (expected `fixed` or `f1-optimal-on-clean`)"
            ))),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::F1OptimalOnClean => "f1-optimal-on-clean",
        })
    }
}

pub const FIXED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// Set when the policy could not be honoured and fell back to 0.5.
    pub warning: Option<String>,
}

/// Chooses an operating threshold from clean scores.
///
/// The F1 policy considers the midpoints between consecutive distinct scores
/// and keeps the one with the highest F1, preferring the larger threshold on
/// ties.
pub fn select_threshold(
    scores: &[f64],
    labels: &[u8],
    policy: ThresholdPolicy,
) -> Result<ThresholdChoice> {
    check_len(scores.len(), labels.len())?;
    let fallback = |why: &str| ThresholdChoice {
        threshold: FIXED_THRESHOLD,
        warning: Some(format!("{why}; falling back to fixed {FIXED_THRESHOLD}")),
    };
    if policy == ThresholdPolicy::Fixed {
        return Ok(ThresholdChoice {
            threshold: FIXED_THRESHOLD,
            warning: None,
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Ok(fallback("no positive labels"));
    }

    let mut pairs: Vec<(f64, u8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Walk distinct score values from the top. Before stepping below value v,
    // every sample with score >= v is predicted positive, which is exactly the
    // prediction set of the midpoint threshold between v and the next lower
    // distinct value.
    let mut best: Option<(f64, f64)> = None;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut end = pairs.len();
    while end > 0 {
        let v = pairs[end - 1].0;
        let mut start = end;
        while start > 0 && pairs[start - 1].0 == v {
            start -= 1;
            if pairs[start].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if start == 0 {
            break;
        }
        let below = pairs[start - 1].0;
        let threshold = (below + v) / 2.0;
        let fn_ = n_pos - tp;
        let f1 = (2 * tp) as f64 / (2 * tp + fp + fn_) as f64;
        // thresholds decrease along the walk, so only strict improvements win
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((threshold, f1));
        }
        end = start;
    }
    match best {
        Some((threshold, _)) => Ok(ThresholdChoice {
            threshold,
            warning: None,
        }),
        None => Ok(fallback("fewer than two distinct scores")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBin {
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationBins {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Equal-width bins on `[0, 1]`; bin `b` holds `[b/B, (b+1)/B)` except the
/// last, which is closed on the right.
pub fn calibration_bins(scores: &[f64], labels: &[u8], n_bins: usize) -> Result<CalibrationBins> {
    check_len(scores.len(), labels.len())?;
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be >= 1".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf = vec![0.0f64; n_bins];
    let mut pos = vec![0usize; n_bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = ((s * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1);
        count[b] += 1;
        conf[b] += s;
        pos[b] += l as usize;
    }
    let bins = (0..n_bins)
        .map(|b| CalibrationBin {
            count: count[b],
            mean_confidence: (count[b] > 0).then(|| conf[b] / count[b] as f64),
            accuracy: (count[b] > 0).then(|| pos[b] as f64 / count[b] as f64),
        })
        .collect();
    Ok(CalibrationBins { bins })
}

/// Expected calibration error: `sum_b (n_b / N) * |accuracy_b - confidence_b|`.
pub fn ece(scores: &[f64], labels: &[u8], n_bins: usize) -> Result<Option<f64>> {
    let bins = calibration_bins(scores, labels, n_bins)?;
    let n = bins.total();
    if n == 0 {
        return Ok(None);
    }
    let total: f64 = bins
        .bins
        .iter()
        .filter_map(|b| match (b.accuracy, b.mean_confidence) {
            (Some(acc), Some(conf)) => Some(b.count as f64 / n as f64 * (acc - conf).abs()),
            _ => None,
        })
        .sum();
    Ok(Some(total.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "AUC")]
    Auc,
    #[serde(rename = "F1")]
    F1,
    #[serde(rename = "TPR")]
    Tpr,
    #[serde(rename = "FPR")]
    Fpr,
    #[serde(rename = "ECE")]
    Ece,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Auc,
        MetricName::F1,
        MetricName::Tpr,
        MetricName::Fpr,
        MetricName::Ece,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Auc => "AUC",
            MetricName::F1 => "F1",
            MetricName::Tpr => "TPR",
            MetricName::Fpr => "FPR",
            MetricName::Ece => "ECE",
        }
    }

    /// AUC, F1 and TPR improve upwards; FPR and ECE improve downwards.
    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricName::Auc | MetricName::F1 | MetricName::Tpr)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric `{s}`")))
    }
}

/// Cell value: a number, undefined for this cell, or missing because the
/// perturbation pass failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined,
    Failed,
}

impl MetricValue {
    pub fn from_option(v: Option<f64>) -> Self {
        v.map_or(MetricValue::Undefined, MetricValue::Defined)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            _ => None,
        }
    }
}

/// One long-format result row. `kind == None` with `level == 0` is the clean
/// pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub dataset: String,
    pub class: String,
    pub subgroup: String,
    pub kind: Option<crate::perturb::PerturbationKind>,
    pub level: i32,
    pub metric: MetricName,
    pub value: MetricValue,
    pub n: usize,
}

/// Frozen per-class operating thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub thresholds: Vec<f64>,
    pub provenance: ThresholdPolicy,
}

/// Metrics of one (class, subgroup) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub ece: Option<f64>,
    pub counts: ConfusionCounts,
    pub n: usize,
}

impl CellMetrics {
    pub fn get(&self, metric: MetricName) -> Option<f64> {
        match metric {
            MetricName::Auc => self.auc,
            MetricName::F1 => self.f1,
            MetricName::Tpr => self.tpr,
            MetricName::Fpr => self.fpr,
            MetricName::Ece => self.ece,
        }
    }
}

pub fn cell_metrics(scores: &[f64], labels: &[u8], threshold: f64, n_bins: usize) -> Result<CellMetrics> {
    let counts = confusion_at(scores, labels, threshold)?;
    let r = rates(&counts);
    Ok(CellMetrics {
        auc: roc_auc(scores, labels)?,
        f1: r.f1,
        tpr: r.tpr,
        fpr: r.fpr,
        ece: ece(scores, labels, n_bins)?,
        counts,
        n: scores.len(),
    })
}

/// Computes every metric for every class x subgroup (including `All`).
///
/// Rows come out class-major, then subgroup in partition order, then metric
/// in [`MetricName::ALL`] order.
pub fn stratified_eval(
    scores: &ScoreMatrix,
    ds: &Dataset,
    partition: &SubgroupPartition,
    thresholds: &ThresholdVector,
    n_bins: usize,
    kind: Option<crate::perturb::PerturbationKind>,
    level: i32,
) -> Result<Vec<MetricResult>> {
    if scores.ids() != ds.ids().as_slice() {
        return Err(Error::Alignment(
            "score rows are not aligned with the dataset sample order".into(),
        ));
    }
    if scores.n_classes() != ds.class_names().len() || thresholds.thresholds.len() != scores.n_classes() {
        return Err(Error::Alignment(format!(
            "{} score columns, {} classes, {} thresholds",
            scores.n_classes(),
            ds.class_names().len(),
            thresholds.thresholds.len()
        )));
    }
    let mut rows = Vec::new();
    for (c, class) in ds.class_names().iter().enumerate() {
        let column = scores.column(c);
        for group in &partition.groups {
            let s: Vec<f64> = group.indices.iter().map(|&i| column[i]).collect();
            let l: Vec<u8> = group.indices.iter().map(|&i| ds.samples[i].labels[c]).collect();
            let cell = cell_metrics(&s, &l, thresholds.thresholds[c], n_bins)?;
            for metric in MetricName::ALL {
                rows.push(MetricResult {
                    dataset: ds.name.clone(),
                    class: class.clone(),
                    subgroup: group.name.clone(),
                    kind,
                    level,
                    metric,
                    value: MetricValue::from_option(cell.get(metric)),
                    n: cell.n,
                });
            }
        }
    }
    Ok(rows)
}
