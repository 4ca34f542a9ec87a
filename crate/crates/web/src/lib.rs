//! Browser bindings for the stressbench demo page: perturbation previews, a
//! metric explorer for pasted scores, and a simulated severity sweep.
//!
//! Each export is a thin wrapper over a plain Rust function so the logic can
//! be tested natively.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stressbench::metrics::{
    calibration_bins, confusion_at, ece, rates, roc_auc, select_threshold, ThresholdPolicy,
};
use stressbench::perturb::{self, default_suite, PerturbationKind, PerturbationSpec, SeverityTable};
use stressbench::report::{render_chart, PlotSettings};
use stressbench::scorer::stub::degradation_weight;
use stressbench::{Error, ImageBuffer, Result};
use wasm_bindgen::prelude::*;

/// Uploaded images are scaled so their longer side is at most this many
/// pixels before any transform runs.
pub const MAX_SIDE: usize = 320;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn load(bytes: &[u8]) -> Result<ImageBuffer> {
    let img = ImageBuffer::decode(bytes)?;
    let side = img.height().max(img.width());
    if side <= MAX_SIDE {
        return Ok(img);
    }
    let scale = MAX_SIDE as f64 / side as f64;
    let h = ((img.height() as f64 * scale).round() as usize).max(1);
    let w = ((img.width() as f64 * scale).round() as usize).max(1);
    img.resize_bilinear(h, w)
}

/// Tags of the default suite in order, e.g. `gamma:-3`.
#[wasm_bindgen]
pub fn suite_tags() -> Vec<String> {
    default_suite().iter().map(|s| s.tag()).collect()
}

/// Applies one perturbation and returns PNG bytes.
pub fn perturb_image(bytes: &[u8], kind: &str, level: i32) -> Result<Vec<u8>> {
    let kind: PerturbationKind = kind.parse()?;
    let spec = PerturbationSpec::new(kind, level, &SeverityTable::default())?;
    Ok(perturb::apply(&spec, &load(bytes)?)?.encode_png())
}

#[wasm_bindgen(js_name = perturbImage)]
pub fn perturb_image_js(bytes: &[u8], kind: &str, level: i32) -> std::result::Result<Vec<u8>, JsError> {
    perturb_image(bytes, kind, level).map_err(js)
}

/// All 30 default perturbations on one PNG, six per row.
pub fn contact_sheet(bytes: &[u8], tile: usize) -> Result<Vec<u8>> {
    let (sheet, _) = perturb::contact_sheet(&load(bytes)?, &default_suite(), 6, tile)?;
    Ok(sheet.encode_png())
}

#[wasm_bindgen(js_name = contactSheet)]
pub fn contact_sheet_js(bytes: &[u8], tile: usize) -> std::result::Result<Vec<u8>, JsError> {
    contact_sheet(bytes, tile).map_err(js)
}

#[derive(Debug, Serialize)]
pub struct Evaluation {
    pub n: usize,
    pub positives: usize,
    pub auc: Option<f64>,
    pub f1_optimal_threshold: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
    pub ece: Option<f64>,
    /// Per bin: `[count, mean confidence, accuracy]`, empty bins as nulls.
    pub bins: Vec<(usize, Option<f64>, Option<f64>)>,
    pub warning: Option<String>,
}

/// Parses `score,label` lines (comma, tab or space separated). A first line
/// that does not parse is taken as a header.
pub fn parse_scores(text: &str) -> Result<(Vec<f64>, Vec<u8>)> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split([',', '\t', ' '])
            .filter(|f| !f.is_empty())
            .collect();
        let parsed = match fields.as_slice() {
            [s, l] => s.parse::<f64>().ok().zip(match *l {
                "0" => Some(0u8),
                "1" => Some(1u8),
                _ => None,
            }),
            _ => None,
        };
        match parsed {
            Some((s, l)) if (0.0..=1.0).contains(&s) => {
                scores.push(s);
                labels.push(l);
            }
            None if i == 0 => continue,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "line {}: expected `score,label` with score in [0,1] and label 0 or 1, got `{line}`",
                    i + 1
                )))
            }
        }
    }
    if scores.is_empty() {
        return Err(Error::InvalidParameter("no scores given".into()));
    }
    Ok((scores, labels))
}

/// Metrics for pasted scores at `threshold`, or at the F1-optimal threshold
/// when it is `None`.
pub fn evaluate(text: &str, threshold: Option<f64>, n_bins: usize) -> Result<Evaluation> {
    let (scores, labels) = parse_scores(text)?;
    let choice = select_threshold(&scores, &labels, ThresholdPolicy::F1OptimalOnClean)?;
    let t = threshold.unwrap_or(choice.threshold);
    let counts = confusion_at(&scores, &labels, t)?;
    let r = rates(&counts);
    let bins = calibration_bins(&scores, &labels, n_bins)?
        .bins
        .iter()
        .map(|b| (b.count, b.mean_confidence, b.accuracy))
        .collect();
    Ok(Evaluation {
        n: scores.len(),
        positives: labels.iter().filter(|&&l| l == 1).count(),
        auc: roc_auc(&scores, &labels)?,
        f1_optimal_threshold: choice.threshold,
        threshold: t,
        tp: counts.tp,
        fp: counts.fp,
        tn: counts.tn,
        fn_: counts.fn_,
        tpr: r.tpr,
        fpr: r.fpr,
        f1: r.f1,
        ece: ece(&scores, &labels, n_bins)?,
        bins,
        warning: choice.warning,
    })
}

#[wasm_bindgen(js_name = evaluateScores)]
pub fn evaluate_js(text: &str, threshold: Option<f64>, n_bins: usize) -> std::result::Result<String, JsError> {
    let e = evaluate(text, threshold, n_bins).map_err(js)?;
    serde_json::to_string(&e).map_err(|e| JsError::new(&e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct SeverityCurve {
    pub kind: String,
    pub levels: Vec<i32>,
    pub auc: Vec<f64>,
    pub expected_clean_auc: f64,
    pub svg: String,
}

/// Simulated sweep for one kind: balanced labels, clean scores on evenly
/// spaced quantiles of overlapping uniform supports, and label-adverse noise
/// mixed in with the harness's degradation weight at each level.
pub fn severity_curve(kind: &str, separability: f64, n: usize, seed: u64) -> Result<SeverityCurve> {
    let kind: PerturbationKind = kind.parse()?;
    if !(0.0..=1.0).contains(&separability) || n < 2 {
        return Err(Error::InvalidParameter("need separability in [0,1] and n >= 2".into()));
    }
    let l = 1.0 - separability / 2.0;
    let pos = n / 2;
    let neg = n - pos;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..pos {
        scores.push(1.0 - l + l * (k as f64 + 0.5) / pos as f64);
        noise.push(rng.random::<f64>() * 0.5);
        labels.push(1u8);
    }
    for k in 0..neg {
        scores.push(l * (k as f64 + 0.5) / neg as f64);
        noise.push(0.5 + rng.random::<f64>() * 0.5);
        labels.push(0u8);
    }
    let auc_at = |level: i32| -> Result<f64> {
        let w = if level == 0 { 0.0 } else { degradation_weight(kind, level) as f64 };
        let mixed: Vec<f64> = scores
            .iter()
            .zip(&noise)
            .map(|(&s, &u)| (1.0 - w) * s + w * u)
            .collect();
        Ok(roc_auc(&mixed, &labels)?.unwrap_or(f64::NAN))
    };
    let lo = if kind.is_bidirectional() { -kind.max_level() } else { 0 };
    let levels: Vec<i32> = (lo..=kind.max_level()).collect();
    let auc = levels.iter().map(|&lv| auc_at(lv)).collect::<Result<Vec<f64>>>()?;
    let points: Vec<(i32, Option<f64>)> = levels.iter().copied().zip(auc.iter().map(|&a| Some(a))).collect();
    let svg = render_chart(
        &PlotSettings::default(),
        &format!("Simulated AUC under {kind}"),
        "AUC",
        kind,
        &[("All".to_string(), 0, points)],
    );
    let expected_clean_auc = if l <= 0.5 { 1.0 } else { 1.0 - (2.0 * l - 1.0).powi(2) / (2.0 * l * l) };
    Ok(SeverityCurve { kind: kind.to_string(), levels, auc, expected_clean_auc, svg })
}

#[wasm_bindgen(js_name = severityCurve)]
pub fn severity_curve_js(kind: &str, separability: f64, n: usize, seed: u64) -> std::result::Result<String, JsError> {
    let c = severity_curve(kind, separability, n, seed).map_err(js)?;
    serde_json::to_string(&c).map_err(|e| JsError::new(&e.to_string()))
}
