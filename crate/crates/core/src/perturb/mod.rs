//! Image perturbations with graded severities.
//!
//! Four kinds are bidirectional (levels `-3..=-1` and `1..=3`), Gaussian blur
//! is unidirectional (levels `1..=6`). A level resolves to a transform
//! parameter through a [`SeverityTable`]: `base^level` for the bidirectional
//! kinds and `step * level` for the blur sigma. Positive levels raise the raw
//! parameter, so `Gamma +k` darkens midtones and `Brightness -k` dims.

mod sheet;
mod suite;
pub mod transforms;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, ImageBuffer, Result};

pub use sheet::{contact_sheet, SheetTile, SHEET_GAP};
pub use suite::{build_suite, default_suite, LevelSelection, SuiteConfig};
pub use transforms::{
    adjust_brightness, adjust_contrast, adjust_gamma, adjust_sharpness, gaussian_blur, luma_mean,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Gamma,
    Contrast,
    Brightness,
    Sharpness,
    Blur,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 5] = [
        PerturbationKind::Gamma,
        PerturbationKind::Contrast,
        PerturbationKind::Brightness,
        PerturbationKind::Sharpness,
        PerturbationKind::Blur,
    ];

    pub fn is_bidirectional(self) -> bool {
        self != PerturbationKind::Blur
    }

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::Gamma => "gamma",
            PerturbationKind::Contrast => "contrast",
            PerturbationKind::Brightness => "brightness",
            PerturbationKind::Sharpness => "sharpness",
            PerturbationKind::Blur => "blur",
        }
    }

    /// All admissible levels in ascending order.
    pub fn levels(self) -> &'static [i32] {
        if self.is_bidirectional() {
            &[-3, -2, -1, 1, 2, 3]
        } else {
            &[1, 2, 3, 4, 5, 6]
        }
    }

    pub fn max_level(self) -> i32 {
        if self.is_bidirectional() {
            3
        } else {
            6
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown perturbation kind `{s}`")))
    }
}

/// A non-zero level admissible for its kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeverityLevel(i32);

impl SeverityLevel {
    pub fn new(kind: PerturbationKind, level: i32) -> Result<Self> {
        if kind.levels().contains(&level) {
            Ok(Self(level))
        } else {
            Err(Error::InvalidLevel {
                kind: kind.name().to_string(),
                level,
            })
        }
    }

    pub fn get(self) -> i32 {
        self.0
    }
}

/// Per-kind schedule bases. Bidirectional kinds use `base^level`, blur uses
/// `blur_sigma_step * level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeverityTable {
    pub gamma_base: f64,
    pub contrast_base: f64,
    pub brightness_base: f64,
    pub sharpness_base: f64,
    pub blur_sigma_step: f64,
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self {
            gamma_base: 1.5,
            contrast_base: 1.4,
            brightness_base: 1.3,
            sharpness_base: 2.0,
            blur_sigma_step: 0.6,
        }
    }
}

impl SeverityTable {
    pub fn validate(&self) -> Result<()> {
        let bases = [
            ("gamma_base", self.gamma_base),
            ("contrast_base", self.contrast_base),
            ("brightness_base", self.brightness_base),
            ("sharpness_base", self.sharpness_base),
        ];
        for (name, base) in bases {
            if !base.is_finite() || base <= 1.0 {
                return Err(Error::config(
                    format!("suite.severity.{name}"),
                    format!("must be a finite value > 1, got {base}"),
                ));
            }
        }
        if !self.blur_sigma_step.is_finite() || self.blur_sigma_step <= 0.0 {
            return Err(Error::config(
                "suite.severity.blur_sigma_step",
                format!("must be a finite value > 0, got {}", self.blur_sigma_step),
            ));
        }
        Ok(())
    }

    pub fn base(&self, kind: PerturbationKind) -> f64 {
        match kind {
            PerturbationKind::Gamma => self.gamma_base,
            PerturbationKind::Contrast => self.contrast_base,
            PerturbationKind::Brightness => self.brightness_base,
            PerturbationKind::Sharpness => self.sharpness_base,
            PerturbationKind::Blur => self.blur_sigma_step,
        }
    }
}

/// Maps a level to the transform parameter (factor, gamma or sigma).
pub fn resolve_severity(kind: PerturbationKind, level: i32, table: &SeverityTable) -> Result<f64> {
    let level = SeverityLevel::new(kind, level)?.get();
    Ok(match kind {
        PerturbationKind::Blur => table.blur_sigma_step * level as f64,
        _ => table.base(kind).powi(level),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub level: i32,
    pub parameter: f64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, level: i32, table: &SeverityTable) -> Result<Self> {
        Ok(Self {
            kind,
            level,
            parameter: resolve_severity(kind, level, table)?,
        })
    }

    /// Stable text key, e.g. `gamma:+2` or `blur:3`.
    pub fn tag(&self) -> String {
        spec_tag(self.kind, self.level)
    }
}

pub fn spec_tag(kind: PerturbationKind, level: i32) -> String {
    if kind.is_bidirectional() {
        format!("{}:{:+}", kind.name(), level)
    } else {
        format!("{}:{}", kind.name(), level)
    }
}

/// Parses a tag produced by [`PerturbationSpec::tag`] into `(kind, level)`.
pub fn parse_tag(tag: &str) -> Result<(PerturbationKind, i32)> {
    let (kind, level) = tag
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("malformed perturbation tag `{tag}`")))?;
    let kind: PerturbationKind = kind.parse()?;
    let level: i32 = level
        .trim_start_matches('+')
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("malformed perturbation tag `{tag}`")))?;
    SeverityLevel::new(kind, level)?;
    Ok((kind, level))
}

/// Applies a spec with its resolved parameter.
pub fn apply(spec: &PerturbationSpec, img: &ImageBuffer) -> Result<ImageBuffer> {
    let p = spec.parameter as f32;
    match spec.kind {
        PerturbationKind::Gamma => adjust_gamma(img, p, 1.0),
        PerturbationKind::Contrast => adjust_contrast(img, p),
        PerturbationKind::Brightness => adjust_brightness(img, p),
        PerturbationKind::Sharpness => adjust_sharpness(img, p),
        PerturbationKind::Blur => gaussian_blur(img, p),
    }
}
