use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, with_pool, write_json, RunConfig};
use crate::canny::overdetect;
use crate::elastic::simulate_annotators;
use crate::error::{Error, Result};
use crate::imagecore::{BinaryEdgeMap, EdgeMap, GrayImage};
use crate::metrics::{crispness, match_edges, MatchRadius, PRPoint};
use crate::refine::refine;

/// Header carried by every study output.
pub const STUDY_NOTE: &str = "Label-level study: no detector is trained. Clean labels are \
over-detected Canny maps; noisy labels average elastically warped copies. Columns report the \
average crispness (AC) of the labels and of the refined labels (confident pixels), and F at \
1 px of each against the clean labels. Mix rows replace a fraction f of the images' noisy \
labels with clean ones.";

/// Measurements of one image's labels at one displacement strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMeasure {
    pub label_crispness: Option<f64>,
    pub refined_crispness: Option<f64>,
    pub label_f: f64,
    pub refined_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub alpha: f64,
    pub label_ac: Option<f64>,
    pub refined_ac: Option<f64>,
    pub label_f: f64,
    pub refined_f: f64,
    /// Images whose crispness was undefined (empty maps), label then refined.
    pub skipped: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRow {
    pub fraction: f64,
    pub clean_images: usize,
    pub label_ac: Option<f64>,
    pub refined_ac: Option<f64>,
    pub label_f: f64,
    pub refined_f: f64,
    pub skipped: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub note: String,
    pub config: RunConfig,
    pub images: Vec<String>,
    pub noise: Vec<NoiseRow>,
    pub mix: Vec<MixRow>,
}

/// Column-per-field layout of a [`StudyReport`], for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyColumns {
    pub note: String,
    pub config: RunConfig,
    pub images: Vec<String>,
    pub noise: NoiseColumns,
    pub mix: MixColumns,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseColumns {
    pub alpha: Vec<f64>,
    pub label_ac: Vec<Option<f64>>,
    pub refined_ac: Vec<Option<f64>>,
    pub label_f: Vec<f64>,
    pub refined_f: Vec<f64>,
    pub skipped: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MixColumns {
    pub fraction: Vec<f64>,
    pub clean_images: Vec<usize>,
    pub label_ac: Vec<Option<f64>>,
    pub refined_ac: Vec<Option<f64>>,
    pub label_f: Vec<f64>,
    pub refined_f: Vec<f64>,
    pub skipped: Vec<(usize, usize)>,
}

impl StudyReport {
    pub fn columns(&self) -> StudyColumns {
        let mut noise = NoiseColumns::default();
        for r in &self.noise {
            noise.alpha.push(r.alpha);
            noise.label_ac.push(r.label_ac);
            noise.refined_ac.push(r.refined_ac);
            noise.label_f.push(r.label_f);
            noise.refined_f.push(r.refined_f);
            noise.skipped.push(r.skipped);
        }
        let mut mix = MixColumns::default();
        for r in &self.mix {
            mix.fraction.push(r.fraction);
            mix.clean_images.push(r.clean_images);
            mix.label_ac.push(r.label_ac);
            mix.refined_ac.push(r.refined_ac);
            mix.label_f.push(r.label_f);
            mix.refined_f.push(r.refined_f);
            mix.skipped.push(r.skipped);
        }
        StudyColumns {
            note: self.note.clone(),
            config: self.config.clone(),
            images: self.images.clone(),
            noise,
            mix,
        }
    }
}

/// Mean of the defined values in order, and how many were undefined.
fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (m, _) = mean_defined(values.map(Some));
    m.unwrap_or(0.0)
}

/// Aggregates one measurement per image, in image order.
fn aggregate(per_image: &[&ImageMeasure]) -> (Option<f64>, Option<f64>, f64, f64, (usize, usize)) {
    let (lac, ls) = mean_defined(per_image.iter().map(|m| m.label_crispness));
    let (rac, rs) = mean_defined(per_image.iter().map(|m| m.refined_crispness));
    let lf = mean(per_image.iter().map(|m| m.label_f));
    let rf = mean(per_image.iter().map(|m| m.refined_f));
    (lac, rac, lf, rf, (ls, rs))
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCrispness) => Ok(None),
        Err(e) => Err(e),
    }
}

fn f_at_one_pixel(pred: &BinaryEdgeMap, clean: &BinaryEdgeMap) -> Result<f64> {
    let m = match_edges(pred, std::slice::from_ref(clean), MatchRadius::Absolute(1.0))?;
    Ok(PRPoint::from_counts(1.0, m.counts).f)
}

/// Annotator seed for image `i` at strength `alpha`.
fn annotator_seed(base: u64, image: usize, alpha: f64) -> u64 {
    let mut z = base ^ (image as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ alpha.to_bits().rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn measure(
    x: &GrayImage,
    clean: &BinaryEdgeMap,
    image: usize,
    alpha: f64,
    cfg: &RunConfig,
    backend: &dyn crate::inpaint::InpaintBackend,
) -> Result<ImageMeasure> {
    let seed = annotator_seed(cfg.seed, image, alpha);
    let y: EdgeMap = simulate_annotators(clean, alpha, cfg.smooth_sigma, cfg.annotators, seed)?;
    let out = refine(x, &y, &cfg.refine, backend)?;
    let confident = out.confident(cfg.refine.eta);
    Ok(ImageMeasure {
        label_crispness: defined(crispness(&y, &cfg.nms))?,
        refined_crispness: defined(crispness(&confident.to_edge_map(), &cfg.nms))?,
        label_f: f_at_one_pixel(&y.threshold(cfg.refine.eta), clean)?,
        refined_f: f_at_one_pixel(&confident, clean)?,
    })
}

/// Runs the label-noise study over `corpus` and writes `study.json`,
/// `noise.csv` and `mix.csv` under `out_dir`.
///
/// Every alpha row averages per-image measurements taken with
/// `cfg.annotators` warped copies. Mix rows draw one seeded permutation
/// of the images; the first `round(f · n)` use their alpha = 0
/// measurements and the rest their `cfg.mix_alpha` ones, so f = 1
/// reproduces the alpha = 0 row exactly.
pub fn cmd_noise_study(corpus: &[(String, GrayImage)], cfg: &RunConfig, out_dir: &Path) -> Result<StudyReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("noise study needs at least one image".into()));
    }
    let backend = cfg.backend.build()?;
    let mut alphas: Vec<f64> = Vec::new();
    for &a in cfg.alphas.iter().chain([&0.0, &cfg.mix_alpha]) {
        if !alphas.iter().any(|b| b.to_bits() == a.to_bits()) {
            alphas.push(a);
        }
    }
    let slot = |a: f64| alphas.iter().position(|b| b.to_bits() == a.to_bits()).expect("registered");

    // measures[image][alpha slot]
    let measures: Vec<Vec<ImageMeasure>> = with_pool(cfg.parallelism, || {
        corpus
            .par_iter()
            .enumerate()
            .map(|(i, (_, x))| {
                let clean = overdetect(x, &cfg.refine.canny)?;
                alphas
                    .par_iter()
                    .map(|&a| measure(x, &clean, i, a, cfg, backend.as_ref()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let noise = cfg
        .alphas
        .iter()
        .map(|&a| {
            let k = slot(a);
            let col: Vec<&ImageMeasure> = measures.iter().map(|m| &m[k]).collect();
            let (label_ac, refined_ac, label_f, refined_f, skipped) = aggregate(&col);
            NoiseRow { alpha: a, label_ac, refined_ac, label_f, refined_f, skipped }
        })
        .collect();

    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let (k_clean, k_noisy) = (slot(0.0), slot(cfg.mix_alpha));
    let mix = cfg
        .mix_fractions
        .iter()
        .map(|&f| {
            let clean_images = ((f * n as f64).round() as usize).min(n);
            let mut use_clean = vec![false; n];
            for &i in &order[..clean_images] {
                use_clean[i] = true;
            }
            let col: Vec<&ImageMeasure> = measures
                .iter()
                .zip(&use_clean)
                .map(|(m, &c)| &m[if c { k_clean } else { k_noisy }])
                .collect();
            let (label_ac, refined_ac, label_f, refined_f, skipped) = aggregate(&col);
            MixRow { fraction: f, clean_images, label_ac, refined_ac, label_f, refined_f, skipped }
        })
        .collect();

    let report = StudyReport {
        note: STUDY_NOTE.to_string(),
        config: cfg.clone(),
        images: corpus.iter().map(|(id, _)| id.clone()).collect(),
        noise,
        mix,
    };
    create_dir(out_dir)?;
    write_json(&report.columns(), &out_dir.join("study.json"))?;
    let noise_path = out_dir.join("noise.csv");
    std::fs::write(&noise_path, noise_csv(&report)).map_err(|e| Error::io(&noise_path, e))?;
    let mix_path = out_dir.join("mix.csv");
    std::fs::write(&mix_path, mix_csv(&report)).map_err(|e| Error::io(&mix_path, e))?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn csv_header(s: &mut String) {
    for line in STUDY_NOTE.split(". ") {
        writeln!(s, "# {}", line.trim_end_matches('.')).unwrap();
    }
}

pub fn noise_csv(r: &StudyReport) -> String {
    let mut s = String::new();
    csv_header(&mut s);
    s.push_str("alpha,label_ac,refined_ac,label_f,refined_f\n");
    for row in &r.noise {
        writeln!(
            s,
            "{},{},{},{},{}",
            row.alpha,
            opt(row.label_ac),
            opt(row.refined_ac),
            row.label_f,
            row.refined_f
        )
        .unwrap();
    }
    s
}

pub fn mix_csv(r: &StudyReport) -> String {
    let mut s = String::new();
    csv_header(&mut s);
    s.push_str("fraction,clean_images,label_ac,refined_ac,label_f,refined_f\n");
    for row in &r.mix {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            row.fraction,
            row.clean_images,
            opt(row.label_ac),
            opt(row.refined_ac),
            row.label_f,
            row.refined_f
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_skips_undefined_values() {
        assert_eq!(mean_defined([Some(1.0), None, Some(0.5)].into_iter()), (Some(0.75), 1));
        assert_eq!(mean_defined([None].into_iter()), (None, 1));
    }

    #[test]
    fn seeds_differ_per_image_and_alpha() {
        let a = annotator_seed(0, 0, 10.0);
        assert_ne!(a, annotator_seed(0, 1, 10.0));
        assert_ne!(a, annotator_seed(0, 0, 20.0));
        assert_ne!(a, annotator_seed(1, 0, 10.0));
        assert_eq!(a, annotator_seed(0, 0, 10.0));
    }
}
