use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{create_dir, write_json, DatasetManifest, Detector, ManifestEntry, SoftDetector};
use crate::canny::{canny_at_sigma, CannyParams};
use crate::elastic::{apply_field, make_field};
use crate::error::Result;
use crate::imagecore::{load_unit, save_binary, save_image, BitDepth, GrayImage};
use crate::synthetic::corpus_image;

/// Parameters of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Annotators per image.
    pub annotators: usize,
    /// Displacement strength of each annotator's warp.
    pub alpha: f64,
    pub smooth_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            count: 20,
            width: 96,
            height: 96,
            seed: 0,
            annotators: 3,
            alpha: 4.0,
            smooth_sigma: 24.0,
        }
    }
}

impl SyntheticSpec {
    /// The images alone, ids `img000, img001, ...`.
    pub fn images(&self) -> Vec<(String, GrayImage)> {
        (0..self.count)
            .map(|i| (image_id(i), corpus_image(self.seed.wrapping_add(i as u64), self.width, self.height)))
            .collect()
    }
}

fn image_id(i: usize) -> String {
    format!("img{i:03}")
}

/// Writes images, warped annotator labels of their Canny outline, soft
/// detector predictions and `manifest.json` into `dir`.
pub fn write_synthetic_corpus(spec: &SyntheticSpec, dir: &Path) -> Result<DatasetManifest> {
    create_dir(dir)?;
    let canny = CannyParams::default();
    let mut entries = Vec::new();
    for (i, (id, x)) in spec.images().into_iter().enumerate() {
        let truth = canny_at_sigma(&x, 1.0, &canny)?;
        let image = PathBuf::from(format!("{id}.png"));
        save_image(&x, dir.join(&image), BitDepth::Eight)?;
        let mut labels = Vec::new();
        for k in 0..spec.annotators {
            let seed = spec.seed.wrapping_mul(1_000_003).wrapping_add((i * spec.annotators + k) as u64);
            let f = make_field(spec.width, spec.height, spec.alpha, spec.smooth_sigma, seed)?;
            let name = PathBuf::from(format!("{id}.label{k}.png"));
            save_binary(&apply_field(&truth, &f)?, dir.join(&name), BitDepth::Eight)?;
            labels.push(name);
        }
        let prediction = PathBuf::from(format!("{id}.pred.png"));
        save_image(&SoftDetector::default().detect(&x)?, dir.join(&prediction), BitDepth::Sixteen)?;
        entries.push(ManifestEntry { id, image, labels, prediction: Some(prediction) });
    }
    let manifest = DatasetManifest { entries };
    write_json(&manifest, &dir.join("manifest.json"))?;
    DatasetManifest::load(&dir.join("manifest.json"))
}

/// Images of a manifest, for the noise study.
pub fn load_corpus(manifest: &DatasetManifest) -> Result<Vec<(String, GrayImage)>> {
    manifest
        .entries
        .iter()
        .map(|e| Ok((e.id.clone(), load_unit(&e.image)?)))
        .collect()
}
