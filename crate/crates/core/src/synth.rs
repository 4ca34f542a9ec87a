//! Seeded synthetic datasets for end-to-end testing without a real model.
//!
//! [`generate`] writes grayscale textured PNGs, a manifest, a clean score
//! file for the stub scorers, a starter `config.toml` and `synth.json`
//! (the spec plus the AUC implied by the score construction).
//!
//! Clean scores for class `c` are deterministic quantiles: the `k`-th of
//! `m` negatives gets `L * (k + 0.5) / m` and the `k`-th of `p` positives gets
//! `1 - L + L * (k + 0.5) / p`, with `L = 1 - separability / 2`, shuffled
//! over samples. For uniform negatives on `[0, L]` and positives on
//! `[1 - L, 1]` the AUC is `1 - (2L - 1)^2 / (2L^2)` when `L > 1/2`, else 1.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSection, StressConfig};
use crate::dataset::{
    self, AttrValue, AttributeDecl, AttributeType, Dataset, ManifestSchema, SampleRecord,
    SubgroupEntry,
};
use crate::scorer::{self, ScoreMatrix};
use crate::{Error, ImageBuffer, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const SCORES_FILE: &str = "stub_scores.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SPEC_FILE: &str = "synth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    /// `(value, proportion)`; proportions must sum to 1.
    pub categories: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSpec {
    pub name: String,
    /// Inclusive integer range drawn uniformly.
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n: usize,
    pub size: usize,
    pub classes: Vec<String>,
    /// Positive fraction per class.
    pub prevalence: Vec<f64>,
    pub categorical: Vec<CategoricalSpec>,
    pub numeric: Vec<NumericSpec>,
    /// 0 gives chance-level scores, 1 perfectly separated ones.
    pub separability: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n: 100,
            size: 64,
            classes: vec!["Finding A".into(), "Finding B".into()],
            prevalence: vec![0.5, 0.5],
            categorical: vec![
                CategoricalSpec {
                    name: "race".into(),
                    categories: vec![
                        ("White".into(), 0.4),
                        ("Asian".into(), 0.3),
                        ("Black".into(), 0.3),
                    ],
                },
                CategoricalSpec {
                    name: "sex".into(),
                    categories: vec![("Female".into(), 0.5), ("Male".into(), 0.5)],
                },
            ],
            numeric: Vec::new(),
            separability: 0.8,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.size < 3 {
            return bad("image size must be >= 3".into());
        }
        if self.classes.is_empty() || self.prevalence.len() != self.classes.len() {
            return bad(format!(
                "{} classes but {} prevalences",
                self.classes.len(),
                self.prevalence.len()
            ));
        }
        if let Some(p) = self.prevalence.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("prevalence {p} outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.separability) {
            return bad(format!("separability {} outside [0, 1]", self.separability));
        }
        for attr in &self.categorical {
            largest_remainder(self.n, &attr.categories.iter().map(|c| c.1).collect::<Vec<_>>())
                .map_err(|e| Error::InvalidParameter(format!("attribute `{}`: {e}", attr.name)))?;
        }
        if let Some(a) = self.numeric.iter().find(|a| a.min > a.max) {
            return bad(format!("attribute `{}`: min > max", a.name));
        }
        Ok(())
    }

    /// Half-width of the score support for each label.
    pub fn spread(&self) -> f64 {
        1.0 - self.separability / 2.0
    }

    /// AUC of the continuous score construction.
    pub fn expected_auc(&self) -> f64 {
        let l = self.spread();
        if l <= 0.5 {
            1.0
        } else {
            1.0 - (2.0 * l - 1.0).powi(2) / (2.0 * l * l)
        }
    }
}

/// Splits `n` by `proportions`: floors first, then the remaining units go to
/// the largest fractional parts, earlier entries winning ties.
pub fn largest_remainder(n: usize, proportions: &[f64]) -> Result<Vec<usize>> {
    if proportions.is_empty() {
        return Err(Error::InvalidParameter("no proportions given".into()));
    }
    if proportions.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidParameter("proportions must be >= 0".into()));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "proportions sum to {sum}, expected 1"
        )));
    }
    let quotas: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Smooth random texture in roughly `[0.15, 0.85]`: an 8x8 random grid
/// upsampled bilinearly, plus fine per-pixel noise.
fn texture(rng: &mut ChaCha8Rng, size: usize) -> Result<ImageBuffer> {
    let coarse: Vec<f32> = (0..64).map(|_| rng.random_range(0.2f32..0.8)).collect();
    let img = ImageBuffer::new(1, 8, 8, coarse)?.resize_bilinear(size, size)?;
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| (p + rng.random_range(-0.05f32..0.05)).clamp(0.15, 0.85))
        .collect();
    ImageBuffer::new(1, size, size, pixels)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub scores: ScoreMatrix,
    pub config: StressConfig,
    pub files: Vec<PathBuf>,
}

fn shuffled_assignment<T: Clone>(rng: &mut ChaCha8Rng, values: &[(T, usize)]) -> Vec<T> {
    let mut out: Vec<T> = values
        .iter()
        .flat_map(|(v, k)| std::iter::repeat_n(v.clone(), *k))
        .collect();
    out.shuffle(rng);
    out
}

/// Generates the dataset into `dir`; everything flows from `spec.seed`.
pub fn generate(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<SynthOutput> {
    spec.validate()?;
    let dir = dir.as_ref();
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir)
        .map_err(|e| Error::io(format!("creating {}", image_dir.display()), e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let width = n.to_string().len().max(4);
    let ids: Vec<String> = (1..=n).map(|i| format!("s{i:0width$}")).collect();

    let mut attrs: Vec<Vec<AttrValue>> = Vec::new();
    for a in &spec.categorical {
        let props: Vec<f64> = a.categories.iter().map(|c| c.1).collect();
        let counts = largest_remainder(n, &props)?;
        let values: Vec<(String, usize)> = a
            .categories
            .iter()
            .map(|c| c.0.clone())
            .zip(counts)
            .collect();
        attrs.push(
            shuffled_assignment(&mut rng, &values)
                .into_iter()
                .map(AttrValue::Text)
                .collect(),
        );
    }
    for a in &spec.numeric {
        attrs.push(
            (0..n)
                .map(|_| AttrValue::Number(rng.random_range(a.min..=a.max) as f64))
                .collect(),
        );
    }

    let l = spec.spread();
    let mut labels = vec![vec![0u8; spec.classes.len()]; n];
    let mut scores = vec![vec![0f32; spec.classes.len()]; n];
    for (c, &prev) in spec.prevalence.iter().enumerate() {
        let pos = largest_remainder(n, &[prev, 1.0 - prev])?[0];
        let assignment = shuffled_assignment(&mut rng, &[(1u8, pos), (0u8, n - pos)]);
        let (mut pos_scores, mut neg_scores): (Vec<f32>, Vec<f32>) = {
            let p = pos.max(1) as f64;
            let m = (n - pos).max(1) as f64;
            (
                (0..pos).map(|k| (1.0 - l + l * (k as f64 + 0.5) / p) as f32).collect(),
                (0..n - pos).map(|k| (l * (k as f64 + 0.5) / m) as f32).collect(),
            )
        };
        pos_scores.shuffle(&mut rng);
        neg_scores.shuffle(&mut rng);
        for (i, y) in assignment.into_iter().enumerate() {
            labels[i][c] = y;
            scores[i][c] = if y == 1 {
                pos_scores.pop().expect("one score per positive")
            } else {
                neg_scores.pop().expect("one score per negative")
            };
        }
    }

    let mut files = Vec::new();
    let mut samples = Vec::new();
    for i in 0..n {
        let img = texture(&mut rng, spec.size)?;
        let rel = format!("images/{}.png", ids[i]);
        let path = dir.join(&rel);
        img.save_png(&path)?;
        files.push(path);
        let mut attributes = std::collections::BTreeMap::new();
        let names = spec
            .categorical
            .iter()
            .map(|a| &a.name)
            .chain(spec.numeric.iter().map(|a| &a.name));
        for (name, column) in names.zip(&attrs) {
            attributes.insert(name.clone(), column[i].clone());
        }
        samples.push(SampleRecord {
            id: ids[i].clone(),
            image_path: rel,
            labels: labels[i].clone(),
            attributes,
        });
    }

    let schema = ManifestSchema {
        classes: spec.classes.clone(),
        attributes: spec
            .categorical
            .iter()
            .map(|a| AttributeDecl {
                name: a.name.clone(),
                kind: AttributeType::Categorical,
            })
            .chain(spec.numeric.iter().map(|a| AttributeDecl {
                name: a.name.clone(),
                kind: AttributeType::Numeric,
            }))
            .collect(),
    };
    let ds = Dataset {
        name: format!("synth-{}", spec.seed),
        schema: schema.clone(),
        samples,
        root: dir.to_path_buf(),
    };
    let manifest = dir.join(MANIFEST_FILE);
    dataset::write_manifest(&ds, &manifest)?;
    files.push(manifest);

    let matrix = ScoreMatrix::from_rows(ids, scores, spec.classes.len())?;
    let scores_path = dir.join(SCORES_FILE);
    scorer::write_scores(&scores_path, &matrix, &spec.classes, None)?;
    files.push(scores_path);

    let config = StressConfig {
        dataset: DatasetSection {
            name: ds.name.clone(),
            manifest: PathBuf::from(MANIFEST_FILE),
            classes: spec.classes.clone(),
            attributes: schema.attributes.clone(),
        },
        suite: Default::default(),
        subgroups: spec
            .categorical
            .iter()
            .flat_map(|a| {
                a.categories.iter().map(|(value, _)| SubgroupEntry {
                    name: value.clone(),
                    attribute: a.name.clone(),
                    equals: Some(dataset::Literal::Text(value.clone())),
                    ..Default::default()
                })
            })
            .collect(),
        evaluation: Default::default(),
        scorer: Default::default(),
    };
    config.validate()?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, config.to_toml())
        .map_err(|e| Error::io(format!("writing {}", config_path.display()), e))?;
    files.push(config_path);

    #[derive(Serialize)]
    struct SpecFile<'a> {
        spec: &'a SynthSpec,
        expected_auc: f64,
    }
    let spec_path = dir.join(SPEC_FILE);
    let mut json = serde_json::to_string_pretty(&SpecFile {
        spec,
        expected_auc: spec.expected_auc(),
    })?;
    json.push('\n');
    std::fs::write(&spec_path, json)
        .map_err(|e| Error::io(format!("writing {}", spec_path.display()), e))?;
    files.push(spec_path);

    let mut config = config;
    config.resolve_paths(dir);
    Ok(SynthOutput {
        dataset: ds,
        scores: matrix,
        config,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(100, &[0.78, 0.15, 0.07]).unwrap(), vec![78, 15, 7]);
        assert_eq!(largest_remainder(10, &[0.78, 0.15, 0.07]).unwrap(), vec![8, 1, 1]);
        assert_eq!(largest_remainder(3, &[0.5, 0.5]).unwrap(), vec![2, 1]);
        assert!(largest_remainder(10, &[0.5, 0.6]).is_err());
        assert!(largest_remainder(10, &[1.5, -0.5]).is_err());
    }

    #[test]
    fn expected_auc_endpoints() {
        let mut s = SynthSpec { separability: 1.0, ..SynthSpec::default() };
        assert_eq!(s.expected_auc(), 1.0);
        s.separability = 0.0;
        assert!((s.expected_auc() - 0.5).abs() < 1e-12);
    }
}
