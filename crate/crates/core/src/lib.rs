//! Progressive stress testing for image classifiers.
//!
//! A test set is pushed through a ladder of image perturbations (gamma,
//! contrast, brightness, sharpness, Gaussian blur), each perturbed copy is
//! scored by an external model, and the scores are turned into
//! subgroup-stratified AUC, F1, TPR/FPR and ECE tables, disparity summaries
//! and severity curves.
//!
//! The main pieces:
//!
//! * [`perturb`] – the five transforms, the severity schedule and the default
//!   30-spec suite.
//! * [`dataset`] – manifest loading and subgroup resolution.
//! * [`scorer`] – the NDJSON scorer protocol, precomputed prediction files and
//!   test stubs.
//! * [`metrics`] – AUC, confusion counts, thresholds, ECE and stratified tables.
//! * [`harness`] – clean baseline, perturbation sweep, resume, trends and A/B
//!   comparison.
//! * [`report`] – results CSV/JSON, disparity tables and SVG plots.

pub mod config;
pub mod dataset;
mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod perturb;
pub mod report;
pub mod scorer;
pub mod synth;

pub use error::{Error, Result};
pub use image::ImageBuffer;
