use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, with_pool, write_json, DatasetManifest, Detector, Fusion, ManifestEntry, RunConfig};
use crate::canny::overdetect;
use crate::error::{Error, Result};
use crate::imagecore::{ensure_same_shape, load_unit, save_binary, save_image, BitDepth, EdgeMap, GrayImage};
use crate::inpaint::InpaintBackend;
use crate::metrics::{benchmark, crispness, BenchImage, BenchmarkReport};
use crate::nms::edge_nms;
use crate::refine::{refine, RefineTrace, TerminalReason};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    Failed,
}

/// Outcome of one refined label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineEntry {
    pub id: String,
    /// Annotator index in per-annotator mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotator: Option<usize>,
    pub status: EntryStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<TerminalReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixels_added: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_patches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineSummary {
    pub config: RunConfig,
    pub per_annotator: bool,
    pub succeeded: usize,
    pub failed: usize,
    pub entries: Vec<RefineEntry>,
}

impl RefineSummary {
    pub fn exit_code(&self) -> i32 {
        super::exit_code(self.succeeded, self.failed)
    }
}

fn load_gray(path: &Path) -> Result<GrayImage> {
    load_unit(path)
}

/// Loads an entry's image and label maps and checks their shapes.
fn load_entry(e: &ManifestEntry) -> Result<(GrayImage, Vec<EdgeMap>)> {
    let x = load_gray(&e.image)?;
    if e.labels.is_empty() {
        return Err(Error::Manifest(format!("entry {:?} has no labels", e.id)));
    }
    let labels = e
        .labels
        .iter()
        .map(|p| {
            let l = load_unit(p)?;
            ensure_same_shape(&x, &l)?;
            Ok(l)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((x, labels))
}

/// Pixelwise mean of the annotator maps.
pub(crate) fn average_labels(labels: &[EdgeMap]) -> Result<EdgeMap> {
    let first = labels
        .first()
        .ok_or_else(|| Error::Empty("no labels to average".into()))?;
    let mut acc = first.clone();
    for l in &labels[1..] {
        acc = acc.zip_map(l, |a, b| a + b)?;
    }
    let k = labels.len() as f64;
    Ok(acc.map(|v| v / k))
}

fn refine_one(
    id: &str,
    annotator: Option<usize>,
    x: &GrayImage,
    y: &EdgeMap,
    cfg: &RunConfig,
    backend: &dyn InpaintBackend,
    out_dir: &Path,
) -> Result<(RefineEntry, RefineTrace)> {
    let out = refine(x, y, &cfg.refine, backend)?;
    let stem = match annotator {
        Some(k) => format!("{id}.{k}"),
        None => id.to_string(),
    };
    let png = format!("{stem}.png");
    save_image(&out.label, out_dir.join(&png), BitDepth::Sixteen)?;
    write_json(&out.trace, &out_dir.join(format!("{stem}.trace.json")))?;
    let t = &out.trace;
    let entry = RefineEntry {
        id: id.to_string(),
        annotator,
        status: EntryStatus::Ok,
        error: None,
        output: Some(png),
        iterations: Some(t.iterations.len()),
        reason: Some(t.reason),
        pixels_added: Some(t.pixels_added()),
        failed_patches: Some(t.iterations.iter().map(|i| i.failed_patches).sum()),
    };
    Ok((entry, out.trace))
}

fn failed_entry(id: &str, annotator: Option<usize>, err: &Error) -> RefineEntry {
    RefineEntry {
        id: id.to_string(),
        annotator,
        status: EntryStatus::Failed,
        error: Some(err.to_string()),
        output: None,
        iterations: None,
        reason: None,
        pixels_added: None,
        failed_patches: None,
    }
}

/// Refines every entry's label and writes `<id>.png` (16-bit),
/// `<id>.trace.json` and `summary.json` under `out_dir`. With
/// `per_annotator`, each annotator map is refined on its own and written
/// as `<id>.<k>.png`. A failing entry is recorded and the rest proceed.
pub fn cmd_refine(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    out_dir: &Path,
    per_annotator: bool,
) -> Result<RefineSummary> {
    cfg.validate()?;
    manifest.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::Empty("manifest has no entries".into()));
    }
    let backend = cfg.backend.build()?;
    create_dir(out_dir)?;
    let run = |e: &ManifestEntry| -> Vec<RefineEntry> {
        let (x, labels) = match load_entry(e) {
            Ok(v) => v,
            Err(err) => {
                log::warn!("{}: {err}", e.id);
                return vec![failed_entry(&e.id, None, &err)];
            }
        };
        let jobs: Vec<(Option<usize>, Result<EdgeMap>)> = if per_annotator {
            labels.into_iter().enumerate().map(|(k, l)| (Some(k), Ok(l))).collect()
        } else {
            vec![(None, average_labels(&labels))]
        };
        jobs.into_iter()
            .map(|(k, y)| {
                match y.and_then(|y| refine_one(&e.id, k, &x, &y, cfg, backend.as_ref(), out_dir)) {
                    Ok((entry, _)) => entry,
                    Err(err) => {
                        log::warn!("{}: {err}", e.id);
                        failed_entry(&e.id, k, &err)
                    }
                }
            })
            .collect()
    };
    let entries: Vec<RefineEntry> = with_pool(cfg.parallelism, || {
        manifest.entries.par_iter().flat_map_iter(run).collect()
    })?;
    let failed = entries.iter().filter(|e| e.status == EntryStatus::Failed).count();
    let summary = RefineSummary {
        config: cfg.clone(),
        per_annotator,
        succeeded: entries.len() - failed,
        failed,
        entries,
    };
    write_json(&summary, &out_dir.join("summary.json"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunConfig,
    #[serde(flatten)]
    pub report: BenchmarkReport,
}

/// Benchmarks every entry's prediction against its labels and writes
/// `report.json` and `report.csv` under `out_dir`.
pub fn cmd_eval(manifest: &DatasetManifest, cfg: &RunConfig, nms: bool, out_dir: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    manifest.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::Empty("manifest has no entries".into()));
    }
    manifest.require_predictions()?;
    manifest.require_labels()?;
    let report = with_pool(cfg.parallelism, || -> Result<BenchmarkReport> {
        let images = manifest
            .entries
            .par_iter()
            .map(|e| {
                let pred = load_unit(e.prediction.as_deref().expect("checked above"))?;
                let gts = e
                    .labels
                    .iter()
                    .map(|p| {
                        let g = load_unit(p)?.support();
                        ensure_same_shape(&pred, &g)?;
                        Ok(g)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(BenchImage { id: e.id.clone(), pred, gts })
            })
            .collect::<Result<Vec<_>>>()?;
        benchmark(&images, &cfg.bench, nms.then_some(&cfg.nms), &cfg.nms)
    })??;
    create_dir(out_dir)?;
    let csv_path = out_dir.join("report.csv");
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    let out = EvalReport { config: cfg.clone(), report };
    write_json(&out, &out_dir.join("report.json"))?;
    Ok(out)
}

/// Fuses direct and upscaled detections of one image and writes the fused
/// map as a 16-bit image.
pub fn cmd_upscale_fuse(
    image: &Path,
    detector: &dyn Detector,
    factor: f64,
    output: &Path,
) -> Result<Fusion> {
    let x = load_gray(image)?;
    let f = super::upscale_fuse(&x, detector, factor)?;
    save_image(&f.fused, output, BitDepth::Sixteen)?;
    Ok(f)
}

/// Writes the over-detected Canny map of an image.
pub fn cmd_canny(image: &Path, cfg: &RunConfig, output: &Path) -> Result<usize> {
    cfg.refine.canny.validate()?;
    let c = overdetect(&load_gray(image)?, &cfg.refine.canny)?;
    save_binary(&c, output, BitDepth::Eight)?;
    Ok(c.count())
}

/// Writes the thinned version of an edge map.
pub fn cmd_nms(input: &Path, cfg: &RunConfig, output: &Path) -> Result<()> {
    let thin = edge_nms(&load_unit(input)?, &cfg.nms)?;
    save_image(&thin, output, BitDepth::Sixteen)
}

pub fn cmd_crispness(input: &Path, cfg: &RunConfig) -> Result<f64> {
    crispness(&load_unit(input)?, &cfg.nms)
}
