//! Prediction CSV files: `id`, an optional `perturbation` column, then one
//! column per class. Scores are written as plain decimals rounded to 9
//! significant digits, which is enough to reload every `f32` bit-exactly.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::ScoreMatrix;
use crate::dataset::Dataset;
use crate::{Error, Result};

pub const CLEAN_TAG: &str = "clean";
const TAG_COLUMN: &str = "perturbation";

/// Formats a score with 9 significant digits, no exponent.
pub fn format_score(v: f32) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.8e}", v as f64);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    out
}

/// Writes scores for the given ids. With `tag`, a `perturbation` column is
/// added.
pub fn write_scores(
    path: impl AsRef<Path>,
    matrix: &ScoreMatrix,
    classes: &[String],
    tag: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["id".to_string()];
    if tag.is_some() {
        header.push(TAG_COLUMN.to_string());
    }
    header.extend(classes.iter().cloned());
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (i, id) in matrix.ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        if let Some(tag) = tag {
            row.push(tag.to_string());
        }
        row.extend(matrix.row(i).iter().map(|&v| format_score(v)));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedScores {
    pub matrix: ScoreMatrix,
    /// Ids present in the file but not in the dataset.
    pub unknown_ids: Vec<String>,
}

/// Loads predictions for `tag` aligned to the dataset order.
///
/// Files without a `perturbation` column hold a single condition and are
/// accepted for any tag. Missing ids are an error; unknown ids are reported
/// and ignored.
pub fn load_precomputed(path: impl AsRef<Path>, ds: &Dataset, tag: &str) -> Result<PrecomputedScores> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let id_col = header.iter().position(|h| h == "id").ok_or_else(|| {
        Error::Alignment(format!("{}: no `id` column", path.display()))
    })?;
    let tag_col = header.iter().position(|h| h == TAG_COLUMN);
    let class_cols: Vec<usize> = ds
        .class_names()
        .iter()
        .map(|c| {
            header.iter().position(|h| h == c).ok_or_else(|| {
                Error::Alignment(format!("{}: no column for class `{c}`", path.display()))
            })
        })
        .collect::<Result<_>>()?;

    let wanted: HashMap<&str, usize> = ds
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut rows: Vec<Option<Vec<f32>>> = vec![None; ds.len()];
    let mut unknown = Vec::new();
    let mut seen_unknown = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if let Some(tc) = tag_col {
            if record.get(tc).map(str::trim) != Some(tag) {
                continue;
            }
        }
        let id = record.get(id_col).unwrap_or("").trim();
        let Some(&idx) = wanted.get(id) else {
            if seen_unknown.insert(id.to_string()) {
                unknown.push(id.to_string());
            }
            continue;
        };
        if rows[idx].is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
        let mut row = Vec::with_capacity(class_cols.len());
        for (&col, class) in class_cols.iter().zip(ds.class_names()) {
            let cell = record.get(col).unwrap_or("").trim();
            let v: f32 = cell.parse().map_err(|_| {
                Error::Alignment(format!(
                    "{}, data row {}: score `{cell}` for class `{class}` is not a number",
                    path.display(),
                    r + 1
                ))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ScoreRange {
                    id: id.to_string(),
                    class: class.clone(),
                    value: v as f64,
                });
            }
            row.push(v);
        }
        rows[idx] = Some(row);
    }
    let missing: Vec<String> = rows
        .iter()
        .zip(&ds.samples)
        .filter(|(r, _)| r.is_none())
        .map(|(_, s)| s.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    if !unknown.is_empty() {
        log::warn!(
            "{}: ignoring {} row(s) with ids not in the dataset",
            path.display(),
            unknown.len()
        );
    }
    let matrix = ScoreMatrix::from_rows(
        ds.ids(),
        rows.into_iter().map(Option::unwrap).collect(),
        ds.class_names().len(),
    )?;
    Ok(PrecomputedScores {
        matrix,
        unknown_ids: unknown,
    })
}
