//! The declarative run configuration (TOML).
//!
//! ```toml
//! [dataset]
//! name = "dev"
//! manifest = "manifest.csv"            # relative to this file
//! classes = ["No Finding", "Pleural Effusion"]
//! attributes = [
//!   { name = "race" },
//!   { name = "sex" },
//!   { name = "age", type = "numeric" },
//! ]
//!
//! [suite.severity]                     # all optional, defaults shown
//! gamma_base = 1.5
//! contrast_base = 1.4
//! brightness_base = 1.3
//! sharpness_base = 2.0
//! blur_sigma_step = 0.6
//!
//! [suite.levels]                       # optional; omitted kinds run every level
//! gamma = [-2, 2]
//! blur = [2]
//!
//! [[subgroups]]
//! name = "White"
//! attribute = "race"
//! equals = "White"
//!
//! [[subgroups]]
//! name = "Young"
//! attribute = "age"
//! lt = 39                              # also gt / ge / le
//!
//! [evaluation]                         # all optional, defaults shown
//! threshold_policy = "f1-optimal-on-clean"   # or "fixed"
//! ece_bins = 15
//! monotone_tolerance = 0.005
//! batch_size = 32
//! retries = 2
//!
//! [scorer]                             # exactly one of these, or none if
//! command = ["python3", "adapter.py"]  # the scorer is given on the CLI
//! # url = "http://localhost:8080/score"
//! # predictions = "predictions.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{AttributeDecl, ManifestSchema, SubgroupDef, SubgroupEntry};
use crate::metrics::ThresholdPolicy;
use crate::perturb::SuiteConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    pub manifest: PathBuf,
    pub classes: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<AttributeDecl>,
}

impl DatasetSection {
    pub fn schema(&self) -> ManifestSchema {
        ManifestSchema {
            classes: self.classes.clone(),
            attributes: self.attributes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub threshold_policy: ThresholdPolicy,
    pub ece_bins: usize,
    pub monotone_tolerance: f64,
    pub batch_size: usize,
    pub retries: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            threshold_policy: ThresholdPolicy::F1OptimalOnClean,
            ece_bins: 15,
            monotone_tolerance: 0.005,
            batch_size: 32,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default)]
    pub subgroups: Vec<SubgroupEntry>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub scorer: ScorerSection,
}

impl StressConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: StressConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<config>".into());
            Error::config(path, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.dataset.manifest.is_relative() {
            self.dataset.manifest = base.join(&self.dataset.manifest);
        }
        if let Some(p) = &mut self.scorer.predictions {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.schema();
        crate::perturb::build_suite(&self.suite)?;
        self.subgroup_defs()?;
        let e = &self.evaluation;
        if e.ece_bins == 0 {
            return Err(Error::config("evaluation.ece_bins", "must be >= 1"));
        }
        if e.batch_size == 0 {
            return Err(Error::config("evaluation.batch_size", "must be >= 1"));
        }
        if e.monotone_tolerance.is_nan() || e.monotone_tolerance < 0.0 {
            return Err(Error::config("evaluation.monotone_tolerance", "must be >= 0"));
        }
        let sources = [
            self.scorer.command.is_some(),
            self.scorer.url.is_some(),
            self.scorer.predictions.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() > 1 {
            return Err(Error::config(
                "scorer",
                "give only one of `command`, `url` and `predictions`",
            ));
        }
        if matches!(&self.scorer.command, Some(c) if c.is_empty()) {
            return Err(Error::config("scorer.command", "must not be empty"));
        }
        Ok(())
    }

    pub fn subgroup_defs(&self) -> Result<Vec<SubgroupDef>> {
        self.subgroups
            .iter()
            .enumerate()
            .map(|(i, e)| SubgroupDef::from_entry(e, &format!("subgroups[{i}]")))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the parts of the config that determine result values.
    /// Batch size, retries and the scorer source are left out so a run can be
    /// resumed with different ones.
    pub fn grid_hash(&self) -> String {
        #[derive(Serialize)]
        struct GridKey<'a> {
            dataset: &'a str,
            classes: &'a [String],
            suite: &'a SuiteConfig,
            subgroups: &'a [SubgroupEntry],
            threshold_policy: ThresholdPolicy,
            ece_bins: usize,
        }
        let key = GridKey {
            dataset: &self.dataset.name,
            classes: &self.dataset.classes,
            suite: &self.suite,
            subgroups: &self.subgroups,
            threshold_policy: self.evaluation.threshold_policy,
            ece_bins: self.evaluation.ece_bins,
        };
        let json = serde_json::to_string(&key).expect("grid key serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
name = "dev"
manifest = "m.csv"
classes = ["a", "b"]
attributes = [{ name = "sex" }, { name = "age", type = "numeric" }]

[[subgroups]]
name = "Female"
attribute = "sex"
equals = "F"

[[subgroups]]
name = "Old"
attribute = "age"
gt = 59
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = StressConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.evaluation, EvaluationSection::default());
        assert_eq!(crate::perturb::build_suite(&c.suite).unwrap().len(), 30);
        assert_eq!(c.subgroup_defs().unwrap().len(), 2);
        let again = StressConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn reduced_levels_and_bad_levels() {
        let text = format!(
            "{MINIMAL}\n[suite.levels]\ngamma=[-2,2]\ncontrast=[-2,2]\nbrightness=[-2,2]\nsharpness=[-2,2]\nblur=[2]\n"
        );
        let c = StressConfig::parse(&text).unwrap();
        assert_eq!(crate::perturb::build_suite(&c.suite).unwrap().len(), 9);

        let bad = format!("{MINIMAL}\n[suite.levels]\nblur=[0]\n");
        let err = StressConfig::parse(&bad).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "suite.levels.blur[0]"), "{err}");
    }

    #[test]
    fn unknown_keys_and_conflicts_rejected() {
        assert!(StressConfig::parse(&format!("{MINIMAL}\n[evaluation]\nbins = 3\n")).is_err());
        let both = format!("{MINIMAL}\n[scorer]\ncommand=[\"x\"]\nurl=\"http://y\"\n");
        assert!(StressConfig::parse(&both).is_err());
        let zero = format!("{MINIMAL}\n[evaluation]\nece_bins = 0\n");
        let err = StressConfig::parse(&zero).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "evaluation.ece_bins"));
    }

    #[test]
    fn grid_hash_tracks_grid_fields_only() {
        let a = StressConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.scorer.url = Some("http://elsewhere".into());
        assert_eq!(a.grid_hash(), b.grid_hash());
        b.evaluation.batch_size = 8;
        assert_eq!(a.grid_hash(), b.grid_hash());
        b.evaluation.ece_bins = 10;
        assert_ne!(a.grid_hash(), b.grid_hash());
    }
}
