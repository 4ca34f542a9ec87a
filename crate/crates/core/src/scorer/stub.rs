//! Deterministic scorers for tests, demos and acceptance runs.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InputSpec, Scorer, ScorerInfo};
use crate::dataset::Dataset;
use crate::perturb::{self, PerturbationKind, PerturbationSpec};
use crate::{Error, ImageBuffer, Result};

/// Returns the same value for every class of every image.
pub struct ConstantScorer {
    info: ScorerInfo,
    value: f32,
}

impl ConstantScorer {
    pub fn new(info: ScorerInfo, value: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidParameter(format!(
                "constant score {value} outside [0, 1]"
            )));
        }
        Ok(Self { info, value })
    }
}

impl Scorer for ConstantScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score_batch(&mut self, images: &[ImageBuffer], _ids: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(vec![vec![self.value; self.info.classes.len()]; images.len()])
    }
}

/// Scores every class with the image's mean pixel value.
pub struct EchoScorer {
    info: ScorerInfo,
}

impl EchoScorer {
    pub fn new(info: ScorerInfo) -> Self {
        Self { info }
    }
}

impl Scorer for EchoScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score_batch(&mut self, images: &[ImageBuffer], _ids: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(images
            .iter()
            .map(|img| vec![(img.mean() as f32).clamp(0.0, 1.0); self.info.classes.len()])
            .collect())
    }
}

/// Looks scores up by sample id and ignores the pixels entirely.
pub struct TableScorer {
    info: ScorerInfo,
    table: HashMap<String, Vec<f32>>,
}

impl TableScorer {
    pub fn new(info: ScorerInfo, table: HashMap<String, Vec<f32>>) -> Self {
        Self { info, table }
    }
}

fn lookup<'a>(table: &'a HashMap<String, Vec<f32>>, id: &str) -> Result<&'a Vec<f32>> {
    table
        .get(id)
        .ok_or_else(|| Error::Protocol(format!("no score on record for id `{id}`")))
}

impl Scorer for TableScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score_batch(&mut self, _images: &[ImageBuffer], ids: &[String]) -> Result<Vec<Vec<f32>>> {
        ids.iter().map(|id| lookup(&self.table, id).cloned()).collect()
    }
}

fn fingerprint(img: &ImageBuffer) -> u64 {
    let mut h = DefaultHasher::new();
    (img.channels(), img.height(), img.width()).hash(&mut h);
    for p in img.pixels() {
        p.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Mixing weight for a perturbation level: `3/4 * |level| / (max_level + 1)`,
/// so blur reaches 9/14 and the bidirectional kinds 9/16 at their top level.
/// Stopping well short of 1 keeps small subgroups from bottoming out at
/// AUC 0 before the last level.
pub fn degradation_weight(kind: PerturbationKind, level: i32) -> f32 {
    0.75 * level.unsigned_abs() as f32 / (kind.max_level() + 1) as f32
}

/// Severity-proportional degradation.
///
/// Each sample has a clean score per class and a fixed noise draw that is
/// uniform on `[0, 1/2)` for positives and on `[1/2, 1)` for negatives. The
/// stub recognizes which suite perturbation produced an incoming image by
/// re-applying every spec to the sample's clean image, and returns
/// `(1 - w) * clean + w * noise` with `w` from [`degradation_weight`].
///
/// For a (positive, negative) pair the score difference is linear in `w` and
/// the noise part is always negative, so a concordant pair can turn
/// discordant as `w` grows but never the reverse: AUC is non-increasing in
/// severity, and strictly decreasing whenever some pair crosses between two
/// levels.
pub struct DegradeScorer {
    info: ScorerInfo,
    clean: HashMap<String, Vec<f32>>,
    noise: HashMap<String, Vec<f32>>,
    /// id -> image fingerprint -> (kind, level); clean images map to `None`.
    known: HashMap<String, HashMap<u64, Option<(PerturbationKind, i32)>>>,
    fail_kind: Option<PerturbationKind>,
}

impl DegradeScorer {
    pub fn new(
        info: ScorerInfo,
        ds: &Dataset,
        suite: &[PerturbationSpec],
        clean: HashMap<String, Vec<f32>>,
        noise_seed: u64,
    ) -> Result<Self> {
        let n_classes = info.classes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let mut noise = HashMap::new();
        let mut known = HashMap::new();
        for (i, sample) in ds.samples.iter().enumerate() {
            let draws: Vec<f32> = (0..n_classes)
                .map(|c| {
                    let u = rng.random::<f32>() * 0.5;
                    if sample.labels.get(c) == Some(&1) {
                        u
                    } else {
                        0.5 + u
                    }
                })
                .collect();
            noise.insert(sample.id.clone(), draws);
            let img = ImageBuffer::open(ds.image_path(i))?.with_channels(info.input.channels)?;
            let mut prints = HashMap::new();
            for spec in suite {
                let out = perturb::apply(spec, &img)?;
                prints.entry(fingerprint(&out)).or_insert(Some((spec.kind, spec.level)));
            }
            // clean last so it wins over a perturbation that happens to be a no-op
            prints.insert(fingerprint(&img), None);
            known.insert(sample.id.clone(), prints);
        }
        Ok(Self {
            info,
            clean,
            noise,
            known,
            fail_kind: None,
        })
    }

    /// Makes every request for an image of this kind fail, to simulate a
    /// broken scorer.
    pub fn fail_on(mut self, kind: PerturbationKind) -> Self {
        self.fail_kind = Some(kind);
        self
    }

    fn score_one(&self, img: &ImageBuffer, id: &str) -> Result<Vec<f32>> {
        let clean = lookup(&self.clean, id)?;
        let noise = lookup(&self.noise, id)?;
        let condition = self
            .known
            .get(id)
            .and_then(|prints| prints.get(&fingerprint(img)))
            .ok_or_else(|| {
                Error::Protocol(format!("image for `{id}` matches no known perturbation"))
            })?;
        let w = match condition {
            None => 0.0,
            Some((kind, _)) if Some(*kind) == self.fail_kind => {
                return Err(Error::Protocol(format!("refusing {kind} input")))
            }
            Some((kind, level)) => degradation_weight(*kind, *level),
        };
        Ok(clean
            .iter()
            .zip(noise)
            .map(|(&s, &u)| ((1.0 - w) * s + w * u).clamp(0.0, 1.0))
            .collect())
    }
}

impl Scorer for DegradeScorer {
    fn info(&self) -> &ScorerInfo {
        &self.info
    }

    fn score_batch(&mut self, images: &[ImageBuffer], ids: &[String]) -> Result<Vec<Vec<f32>>> {
        images
            .iter()
            .zip(ids)
            .map(|(img, id)| self.score_one(img, id))
            .collect()
    }
}

/// Builds a [`ScorerInfo`] for a stub whose input is the dataset's first image
/// shape.
pub fn stub_info(ds: &Dataset, identity: &str) -> Result<ScorerInfo> {
    if ds.is_empty() {
        return Err(Error::InvalidParameter("dataset has no samples".into()));
    }
    let first = ImageBuffer::open(ds.image_path(0))?;
    Ok(ScorerInfo {
        classes: ds.class_names().to_vec(),
        input: InputSpec::of(&first),
        identity: identity.to_string(),
    })
}
