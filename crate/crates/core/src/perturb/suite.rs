use serde::{Deserialize, Serialize};

use super::{PerturbationKind, PerturbationSpec, SeverityTable};
use crate::{Error, Result};

/// Which levels to run per kind. A missing entry means every admissible level;
/// an empty list drops the kind from the suite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSelection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brightness: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<Vec<i32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur: Option<Vec<i32>>,
}

impl LevelSelection {
    pub fn get(&self, kind: PerturbationKind) -> Option<&[i32]> {
        match kind {
            PerturbationKind::Gamma => self.gamma.as_deref(),
            PerturbationKind::Contrast => self.contrast.as_deref(),
            PerturbationKind::Brightness => self.brightness.as_deref(),
            PerturbationKind::Sharpness => self.sharpness.as_deref(),
            PerturbationKind::Blur => self.blur.as_deref(),
        }
    }

    pub fn set(&mut self, kind: PerturbationKind, levels: Vec<i32>) {
        let slot = match kind {
            PerturbationKind::Gamma => &mut self.gamma,
            PerturbationKind::Contrast => &mut self.contrast,
            PerturbationKind::Brightness => &mut self.brightness,
            PerturbationKind::Sharpness => &mut self.sharpness,
            PerturbationKind::Blur => &mut self.blur,
        };
        *slot = Some(levels);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub severity: SeverityTable,
    pub levels: LevelSelection,
}

/// Expands a suite config into its ordered spec list: kinds in the order
/// gamma, contrast, brightness, sharpness, blur, levels ascending within each.
pub fn build_suite(config: &SuiteConfig) -> Result<Vec<PerturbationSpec>> {
    config.severity.validate()?;
    let mut specs = Vec::new();
    for kind in PerturbationKind::ALL {
        let mut levels: Vec<i32> = match config.levels.get(kind) {
            Some(levels) => levels.to_vec(),
            None => kind.levels().to_vec(),
        };
        for (i, &level) in levels.iter().enumerate() {
            if !kind.levels().contains(&level) {
                return Err(Error::config(
                    format!("suite.levels.{kind}[{i}]"),
                    format!(
                        "level {level} is not admissible for {kind} (allowed: {:?})",
                        kind.levels()
                    ),
                ));
            }
        }
        levels.sort_unstable();
        if let Some(w) = levels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(
                format!("suite.levels.{kind}"),
                format!("level {} listed twice", w[0]),
            ));
        }
        for level in levels {
            specs.push(PerturbationSpec::new(kind, level, &config.severity)?);
        }
    }
    Ok(specs)
}

/// The 30-spec default suite.
pub fn default_suite() -> Vec<PerturbationSpec> {
    build_suite(&SuiteConfig::default()).expect("default suite is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_has_thirty_specs_in_order() {
        let suite = default_suite();
        assert_eq!(suite.len(), 30);
        let tags: Vec<String> = suite.iter().map(|s| s.tag()).collect();
        assert_eq!(tags[0], "gamma:-3");
        assert_eq!(tags[5], "gamma:+3");
        assert_eq!(tags[6], "contrast:-3");
        assert_eq!(tags[23], "sharpness:+3");
        assert_eq!(tags[24], "blur:1");
        assert_eq!(tags[29], "blur:6");
        for kind in PerturbationKind::ALL {
            assert_eq!(suite.iter().filter(|s| s.kind == kind).count(), 6);
        }
    }

    #[test]
    fn reduced_suite_has_nine_specs() {
        let mut config = SuiteConfig::default();
        for kind in &PerturbationKind::ALL[..4] {
            config.levels.set(*kind, vec![2, -2]);
        }
        config.levels.set(PerturbationKind::Blur, vec![2]);
        let suite = build_suite(&config).unwrap();
        assert_eq!(suite.len(), 9);
        assert_eq!(suite[0].level, -2);
        assert_eq!(suite[1].level, 2);
    }

    #[test]
    fn zero_level_rejected_with_field_path() {
        let mut config = SuiteConfig::default();
        config.levels.set(PerturbationKind::Contrast, vec![-1, 0, 1]);
        let err = build_suite(&config).unwrap_err();
        assert!(
            matches!(&err, Error::Config { path, .. } if path == "suite.levels.contrast[1]"),
            "{err}"
        );
    }

    #[test]
    fn duplicates_and_empty_kinds() {
        let mut config = SuiteConfig::default();
        config.levels.set(PerturbationKind::Blur, vec![2, 2]);
        assert!(build_suite(&config).is_err());
        config.levels.set(PerturbationKind::Blur, vec![]);
        assert_eq!(build_suite(&config).unwrap().len(), 24);
    }
}
