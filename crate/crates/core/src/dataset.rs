//! Sample manifests and subgroup definitions.
//!
//! A manifest is a UTF-8 CSV file:
//!
//! ```text
//! # stressbench-manifest v1
//! id,image_path,<class 1>,...,<class K>,<attribute 1>,...
//! ```
//!
//! The version comment is optional on input and always written on output.
//! Class columns hold `0` or `1`; labels must be binarized before ingestion.
//! Attribute cells that are empty, `NA` or `unknown` load as
//! [`AttrValue::Unknown`] and are never imputed. Relative image paths are
//! resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MANIFEST_VERSION_LINE: &str = "# stressbench-manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeType {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDecl {
    pub name: String,
    #[serde(rename = "type", default = "categorical")]
    pub kind: AttributeType,
}

fn categorical() -> AttributeType {
    AttributeType::Categorical
}

/// Class list plus attribute declarations, in manifest column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSchema {
    pub classes: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDecl>,
}

impl ManifestSchema {
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["id".to_string(), "image_path".to_string()];
        cols.extend(self.classes.iter().cloned());
        cols.extend(self.attributes.iter().map(|a| a.name.clone()));
        cols
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::config("dataset.classes", "at least one class is required"));
        }
        let mut seen = HashSet::new();
        for (i, name) in self.header().iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(Error::config(
                    format!("dataset column {i}"),
                    format!("column `{name}` declared twice"),
                ));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttrValue {
    Text(String),
    Number(f64),
    Unknown,
}

impl AttrValue {
    pub fn is_known(&self) -> bool {
        !matches!(self, AttrValue::Unknown)
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Text(s) => f.write_str(s),
            AttrValue::Number(v) => write!(f, "{v}"),
            AttrValue::Unknown => f.write_str("unknown"),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("unknown")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    /// Path exactly as written in the manifest.
    pub image_path: String,
    pub labels: Vec<u8>,
    pub attributes: BTreeMap<String, AttrValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub schema: ManifestSchema,
    pub samples: Vec<SampleRecord>,
    /// Directory that relative image paths are resolved against.
    pub root: PathBuf,
}

impl Dataset {
    pub fn class_names(&self) -> &[String] {
        &self.schema.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn image_path(&self, index: usize) -> PathBuf {
        let p = Path::new(&self.samples[index].image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Labels of one class across all samples.
    pub fn class_labels(&self, class: usize) -> Vec<u8> {
        self.samples.iter().map(|s| s.labels[class]).collect()
    }
}

/// Loads a manifest. The header must equal `schema.header()` exactly.
pub fn load_manifest(path: impl AsRef<Path>, schema: &ManifestSchema, name: &str) -> Result<Dataset> {
    let path = path.as_ref();
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected = schema.header();
    if header != expected {
        return Err(Error::Manifest {
            path: path.to_path_buf(),
            row: 1,
            message: format!(
                "header {:?} does not match schema {:?}",
                header, expected
            ),
        });
    }

    let n_classes = schema.classes.len();
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let err = |message: String| Error::Manifest {
            path: path.to_path_buf(),
            row,
            message,
        };
        let record = record.map_err(|e| err(e.to_string()))?;
        if record.len() != expected.len() {
            return Err(err(format!(
                "expected {} columns, found {}",
                expected.len(),
                record.len()
            )));
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(err("empty id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let image_path = record[1].trim().to_string();
        let mut labels = Vec::with_capacity(n_classes);
        for (c, class) in schema.classes.iter().enumerate() {
            let cell = record[2 + c].trim();
            match cell {
                "0" => labels.push(0),
                "1" => labels.push(1),
                "" => return Err(err(format!("missing label for class `{class}`"))),
                other => {
                    return Err(err(format!(
                        "label for class `{class}` must be 0 or 1, got `{other}`"
                    )))
                }
            }
        }
        let mut attributes = BTreeMap::new();
        for (a, decl) in schema.attributes.iter().enumerate() {
            let cell = record[2 + n_classes + a].trim();
            let value = if is_missing(cell) {
                AttrValue::Unknown
            } else {
                match decl.kind {
                    AttributeType::Categorical => AttrValue::Text(cell.to_string()),
                    AttributeType::Numeric => AttrValue::Number(cell.parse().map_err(|_| {
                        err(format!("attribute `{}` is numeric, got `{cell}`", decl.name))
                    })?),
                }
            };
            attributes.insert(decl.name.clone(), value);
        }
        samples.push(SampleRecord {
            id,
            image_path,
            labels,
            attributes,
        });
    }

    Ok(Dataset {
        name: name.to_string(),
        schema: schema.clone(),
        samples,
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

pub fn write_manifest(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(MANIFEST_VERSION_LINE);
    out.push('\n');
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(ds.schema.header())
        .map_err(|e| Error::csv(path, e))?;
    for s in &ds.samples {
        let mut row = vec![s.id.clone(), s.image_path.clone()];
        row.extend(s.labels.iter().map(|l| l.to_string()));
        for decl in &ds.schema.attributes {
            row.push(match s.attributes.get(&decl.name) {
                Some(AttrValue::Unknown) | None => String::new(),
                Some(v) => v.to_string(),
            });
        }
        writer.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e.into_error()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// A literal in an equality predicate; numbers compare numerically against
/// numeric attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Equals(Literal),
    Range {
        lower: Option<(f64, bool)>,
        upper: Option<(f64, bool)>,
    },
}

impl Predicate {
    fn matches(&self, value: &AttrValue) -> bool {
        match (self, value) {
            (_, AttrValue::Unknown) => false,
            (Predicate::Equals(Literal::Text(want)), AttrValue::Text(got)) => want == got,
            (Predicate::Equals(Literal::Number(want)), AttrValue::Number(got)) => want == got,
            (Predicate::Equals(Literal::Text(want)), AttrValue::Number(got)) => {
                want.parse::<f64>().map(|w| w == *got).unwrap_or(false)
            }
            (Predicate::Equals(Literal::Number(want)), AttrValue::Text(got)) => {
                got.parse::<f64>().map(|g| g == *want).unwrap_or(false)
            }
            (Predicate::Range { lower, upper }, AttrValue::Number(v)) => {
                let above = match lower {
                    Some((lo, true)) => *v >= *lo,
                    Some((lo, false)) => *v > *lo,
                    None => true,
                };
                let below = match upper {
                    Some((hi, true)) => *v <= *hi,
                    Some((hi, false)) => *v < *hi,
                    None => true,
                };
                above && below
            }
            (Predicate::Range { .. }, AttrValue::Text(_)) => false,
        }
    }
}

/// Raw config form of a subgroup: `equals`, or any of `gt`/`ge` with
/// `lt`/`le`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupEntry {
    pub name: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<Literal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub le: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupDef {
    pub name: String,
    pub attribute: String,
    pub predicate: Predicate,
}

impl SubgroupDef {
    pub fn equals(name: &str, attribute: &str, value: Literal) -> Self {
        Self {
            name: name.into(),
            attribute: attribute.into(),
            predicate: Predicate::Equals(value),
        }
    }

    pub fn range(
        name: &str,
        attribute: &str,
        lower: Option<(f64, bool)>,
        upper: Option<(f64, bool)>,
    ) -> Self {
        Self {
            name: name.into(),
            attribute: attribute.into(),
            predicate: Predicate::Range { lower, upper },
        }
    }

    pub fn from_entry(entry: &SubgroupEntry, field: &str) -> Result<Self> {
        if entry.name.trim().is_empty() {
            return Err(Error::config(format!("{field}.name"), "must not be empty"));
        }
        if entry.name == ALL_GROUP {
            return Err(Error::config(
                format!("{field}.name"),
                format!("`{ALL_GROUP}` is reserved for the whole dataset"),
            ));
        }
        let lower = match (entry.gt, entry.ge) {
            (Some(_), Some(_)) => {
                return Err(Error::config(field, "give at most one of `gt` and `ge`"))
            }
            (Some(v), None) => Some((v, false)),
            (None, Some(v)) => Some((v, true)),
            (None, None) => None,
        };
        let upper = match (entry.lt, entry.le) {
            (Some(_), Some(_)) => {
                return Err(Error::config(field, "give at most one of `lt` and `le`"))
            }
            (Some(v), None) => Some((v, false)),
            (None, Some(v)) => Some((v, true)),
            (None, None) => None,
        };
        let predicate = match (&entry.equals, lower.is_some() || upper.is_some()) {
            (Some(v), false) => Predicate::Equals(v.clone()),
            (None, true) => Predicate::Range { lower, upper },
            (Some(_), true) => {
                return Err(Error::config(
                    field,
                    "`equals` cannot be combined with range bounds",
                ))
            }
            (None, false) => {
                return Err(Error::config(
                    field,
                    "needs `equals` or at least one of `gt`/`ge`/`lt`/`le`",
                ))
            }
        };
        Ok(Self {
            name: entry.name.clone(),
            attribute: entry.attribute.clone(),
            predicate,
        })
    }

    pub fn to_entry(&self) -> SubgroupEntry {
        let mut entry = SubgroupEntry {
            name: self.name.clone(),
            attribute: self.attribute.clone(),
            equals: None,
            gt: None,
            ge: None,
            lt: None,
            le: None,
        };
        match &self.predicate {
            Predicate::Equals(v) => entry.equals = Some(v.clone()),
            Predicate::Range { lower, upper } => {
                match lower {
                    Some((v, true)) => entry.ge = Some(*v),
                    Some((v, false)) => entry.gt = Some(*v),
                    None => {}
                }
                match upper {
                    Some((v, true)) => entry.le = Some(*v),
                    Some((v, false)) => entry.lt = Some(*v),
                    None => {}
                }
            }
        }
        entry
    }
}

pub const ALL_GROUP: &str = "All";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgroup {
    pub name: String,
    pub indices: Vec<usize>,
    /// Samples left out because the attribute was unknown.
    pub excluded_unknown: usize,
}

/// Resolved subgroups. `groups[0]` is always the implicit `All` group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupPartition {
    pub groups: Vec<Subgroup>,
}

impl SubgroupPartition {
    pub fn all(&self) -> &Subgroup {
        &self.groups[0]
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }
}

pub fn resolve_subgroups(defs: &[SubgroupDef], ds: &Dataset) -> Result<SubgroupPartition> {
    let mut names = HashSet::new();
    let mut groups = vec![Subgroup {
        name: ALL_GROUP.to_string(),
        indices: (0..ds.len()).collect(),
        excluded_unknown: 0,
    }];
    for (i, def) in defs.iter().enumerate() {
        let field = format!("subgroups[{i}]");
        let Some(decl) = ds.schema.attribute(&def.attribute) else {
            return Err(Error::config(
                format!("{field}.attribute"),
                format!("attribute `{}` is not declared in the manifest schema", def.attribute),
            ));
        };
        if matches!(def.predicate, Predicate::Range { .. }) && decl.kind != AttributeType::Numeric {
            return Err(Error::config(
                field,
                format!("range predicate over categorical attribute `{}`", def.attribute),
            ));
        }
        if !names.insert(def.name.as_str()) {
            return Err(Error::config(
                format!("{field}.name"),
                format!("subgroup `{}` defined twice", def.name),
            ));
        }
        let mut indices = Vec::new();
        let mut excluded_unknown = 0;
        for (idx, sample) in ds.samples.iter().enumerate() {
            let value = sample
                .attributes
                .get(&def.attribute)
                .unwrap_or(&AttrValue::Unknown);
            if !value.is_known() {
                excluded_unknown += 1;
            } else if def.predicate.matches(value) {
                indices.push(idx);
            }
        }
        groups.push(Subgroup {
            name: def.name.clone(),
            indices,
            excluded_unknown,
        });
    }
    Ok(SubgroupPartition { groups })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    /// `(class, positives)` in class order.
    pub positives: Vec<(String, usize)>,
    /// Per attribute, value -> count (unknown values under `"unknown"`).
    pub histograms: BTreeMap<String, BTreeMap<String, usize>>,
    /// Image paths that do not exist; empty unless files were checked.
    pub missing_files: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn validate(ds: &Dataset, check_files: bool) -> ValidationReport {
    let mut warnings = Vec::new();
    let positives: Vec<(String, usize)> = ds
        .class_names()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let n = ds.samples.iter().filter(|s| s.labels[c] == 1).count();
            (name.clone(), n)
        })
        .collect();
    for (name, n) in &positives {
        if *n == 0 {
            warnings.push(format!("class `{name}` has no positive samples; AUC is undefined"));
        } else if *n == ds.len() {
            warnings.push(format!("class `{name}` has no negative samples; AUC is undefined"));
        }
    }
    let mut histograms = BTreeMap::new();
    for decl in &ds.schema.attributes {
        let mut hist: BTreeMap<String, usize> = BTreeMap::new();
        for s in &ds.samples {
            let key = s
                .attributes
                .get(&decl.name)
                .map(|v| v.to_string())
                .unwrap_or_else(|| "unknown".into());
            *hist.entry(key).or_default() += 1;
        }
        if let Some(n) = hist.get("unknown") {
            warnings.push(format!("attribute `{}` is unknown for {n} sample(s)", decl.name));
        }
        histograms.insert(decl.name.clone(), hist);
    }
    let missing_files = if check_files {
        (0..ds.len())
            .filter(|&i| !ds.image_path(i).is_file())
            .map(|i| ds.samples[i].image_path.clone())
            .collect()
    } else {
        Vec::new()
    };
    if !missing_files.is_empty() {
        warnings.push(format!("{} image file(s) missing", missing_files.len()));
    }
    ValidationReport {
        n_samples: ds.len(),
        positives,
        histograms,
        missing_files,
        warnings,
    }
}
