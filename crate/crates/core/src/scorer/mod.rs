//! Obtaining per-class probability scores.
//!
//! Scores come from an external process speaking the NDJSON protocol in
//! [`protocol`] (or the same JSON bodies over HTTP), from precomputed
//! prediction files, or from the in-process stubs used for testing.

pub mod conformance;
#[cfg(feature = "http")]
mod http;
mod precomputed;
mod process;
pub mod protocol;
mod serve;
pub mod stub;

use serde::{Deserialize, Serialize};

use crate::{Error, ImageBuffer, Result};

#[cfg(feature = "http")]
pub use http::HttpScorer;
pub use precomputed::{format_score, CLEAN_TAG, load_precomputed, write_scores, PrecomputedScores};
pub use process::ProcessScorer;
pub use serve::{respond_line, serve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputSpec {
    pub fn of(img: &ImageBuffer) -> Self {
        Self {
            channels: img.channels(),
            height: img.height(),
            width: img.width(),
        }
    }
}

/// What a scorer declares during the handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerInfo {
    pub classes: Vec<String>,
    pub input: InputSpec,
    pub identity: String,
}

impl ScorerInfo {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Protocol("scorer declared no classes".into()));
        }
        let s = self.input;
        if !(s.channels == 1 || s.channels == 3) || s.height == 0 || s.width == 0 {
            return Err(Error::Protocol(format!(
                "invalid input spec {}x{}x{}",
                s.channels, s.height, s.width
            )));
        }
        Ok(())
    }

    /// The scorer's classes must equal the dataset's, order included.
    pub fn check_classes(&self, dataset_classes: &[String]) -> Result<()> {
        if self.classes == dataset_classes {
            return Ok(());
        }
        let missing: Vec<&str> = dataset_classes
            .iter()
            .filter(|c| !self.classes.contains(c))
            .map(String::as_str)
            .collect();
        let extra: Vec<&str> = self
            .classes
            .iter()
            .filter(|c| !dataset_classes.contains(c))
            .map(String::as_str)
            .collect();
        let detail = if missing.is_empty() && extra.is_empty() {
            format!(
                "same classes in a different order: scorer {:?}, dataset {:?}",
                self.classes, dataset_classes
            )
        } else {
            format!(
                "missing from scorer: [{}]; unknown to dataset: [{}]",
                missing.join(", "),
                extra.join(", ")
            )
        };
        Err(Error::ClassMismatch(detail))
    }
}

/// Anything that maps batches of images to per-class probabilities.
pub trait Scorer: Send {
    fn info(&self) -> &ScorerInfo;

    /// One row per image, `info().classes.len()` entries per row, all in
    /// `[0, 1]`.
    fn score_batch(&mut self, images: &[ImageBuffer], ids: &[String]) -> Result<Vec<Vec<f32>>>;

    /// Called before retrying after a failure; process-backed scorers respawn.
    fn reset(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Checks shape and range of a scorer response.
pub fn check_rows(rows: &[Vec<f32>], ids: &[String], classes: &[String]) -> Result<()> {
    if rows.len() != ids.len() {
        return Err(Error::Protocol(format!(
            "expected {} score rows, got {}",
            ids.len(),
            rows.len()
        )));
    }
    for (row, id) in rows.iter().zip(ids) {
        if row.len() != classes.len() {
            return Err(Error::Protocol(format!(
                "row for `{id}` has {} values, expected {}",
                row.len(),
                classes.len()
            )));
        }
        for (&v, class) in row.iter().zip(classes) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ScoreRange {
                    id: id.clone(),
                    class: class.clone(),
                    value: v as f64,
                });
            }
        }
    }
    Ok(())
}

/// `n_samples x n_classes` scores, rows aligned to `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    ids: Vec<String>,
    n_classes: usize,
    values: Vec<f32>,
}

impl ScoreMatrix {
    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f32>>, n_classes: usize) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Alignment(format!(
                "{} ids but {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let mut values = Vec::with_capacity(ids.len() * n_classes);
        for (row, id) in rows.iter().zip(&ids) {
            if row.len() != n_classes {
                return Err(Error::Alignment(format!(
                    "row `{id}` has {} values, expected {n_classes}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::ScoreRange {
                    id: id.clone(),
                    class: String::new(),
                    value: *v as f64,
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            ids,
            n_classes,
            values,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn get(&self, i: usize, class: usize) -> f32 {
        self.values[i * self.n_classes + class]
    }

    /// One class across all samples, widened to f64 for metric computation.
    pub fn column(&self, class: usize) -> Vec<f64> {
        (0..self.n_samples())
            .map(|i| self.get(i, class) as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(classes: &[&str]) -> ScorerInfo {
        ScorerInfo {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            input: InputSpec {
                channels: 1,
                height: 8,
                width: 8,
            },
            identity: "test".into(),
        }
    }

    #[test]
    fn class_mismatch_names_missing_classes() {
        let ds: Vec<String> = (0..14).map(|i| format!("c{i}")).collect();
        let full = ScorerInfo {
            classes: ds.clone(),
            ..info(&[])
        };
        assert!(full.check_classes(&ds).is_ok());
        let err = info(&["c0", "c1"]).check_classes(&ds).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::ClassMismatch(_)));
        assert!(msg.contains("c2") && msg.contains("c13"), "{msg}");
        let swapped = info(&["c1", "c0"]);
        assert!(swapped
            .check_classes(&["c0".into(), "c1".into()])
            .unwrap_err()
            .to_string()
            .contains("different order"));
    }

    #[test]
    fn row_checks() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let classes = vec!["x".to_string()];
        assert!(check_rows(&[vec![0.1], vec![0.9]], &ids, &classes).is_ok());
        assert!(check_rows(&[vec![0.1]], &ids, &classes).is_err());
        let err = check_rows(&[vec![0.1], vec![1.2]], &ids, &classes).unwrap_err();
        assert!(matches!(err, Error::ScoreRange { ref id, .. } if id == "b"));
        assert!(check_rows(&[vec![0.1], vec![f32::NAN]], &ids, &classes).is_err());
    }

    #[test]
    fn matrix_access() {
        let m = ScoreMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            2,
        )
        .unwrap();
        assert_eq!(m.row(1), &[0.3, 0.4]);
        assert_eq!(m.column(0), vec![0.1f32 as f64, 0.3f32 as f64]);
        assert!(ScoreMatrix::from_rows(vec!["a".into()], vec![vec![0.1]], 2).is_err());
    }
}
