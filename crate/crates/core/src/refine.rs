//! Iterative Canny-guided refinement of human edge labels.
//!
//! The confident part of the label is intersected with an over-detected
//! Canny map to seed an edge map `E`. Label pixels with no nearby `E`
//! pixel mark gaps; the dilated set of those pixels is the inpainting
//! mask. Each round inpaints one patch per mask component, re-intersects
//! the result with the Canny map and recomputes the mask, stopping once
//! the mask stops splitting into fewer pieces. Finally, label pixels that
//! `E` never confirmed are demoted below the confidence threshold.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canny::{overdetect, CannyParams};
use crate::error::{Error, Result};
use crate::imagecore::{
    connected_components, crop, dilate_disk, dilate_square, ensure_same_shape, hadamard,
    paste_max, BinaryEdgeMap, EdgeMap, GrayImage, Rect,
};
use crate::inpaint::{InpaintBackend, InpaintRequest};
use crate::nms::{edge_nms, NmsParams};

/// Source of the guidance map that every refined pixel must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Guidance {
    /// Over-detected Canny edges of the image.
    Canny,
    /// The confident label dilated by `radius`; no image evidence.
    DilatedLabel { radius: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Label confidence threshold.
    pub eta: f64,
    pub patch_size: usize,
    pub i_max: usize,
    /// Chebyshev radius of the "edge nearby" test.
    pub neigh_radius: usize,
    /// Disk radius used to grow gap pixels into the mask.
    pub dilate_radius: usize,
    pub canny: CannyParams,
    /// Value given to label pixels the refinement did not confirm.
    pub unconfident_value: f64,
    /// Floor for confirmed pixels, including ones absent from the label.
    pub inpainted_value: f64,
    pub guidance: Guidance,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            eta: 0.3,
            patch_size: 256,
            i_max: 10,
            neigh_radius: 1,
            dilate_radius: 7,
            canny: CannyParams::default(),
            unconfident_value: 0.15,
            inpainted_value: 0.3,
            guidance: Guidance::Canny,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if self.patch_size < 32 {
            return bad("patch_size must be >= 32");
        }
        if self.i_max < 1 {
            return bad("i_max must be >= 1");
        }
        if self.neigh_radius < 1 || self.dilate_radius < self.neigh_radius {
            return bad("need neigh_radius >= 1 and dilate_radius >= neigh_radius");
        }
        if !(self.unconfident_value >= 0.0 && self.unconfident_value < self.eta) {
            return bad("unconfident_value must lie in [0, eta)");
        }
        if !(self.inpainted_value >= self.eta && self.inpainted_value <= 1.0) {
            return bad("inpainted_value must lie in [eta, 1]");
        }
        self.canny.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Converged,
    IMax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub mask_pixels: usize,
    pub inpainting_pixels: usize,
    pub n_connect: usize,
    pub pixels_added: usize,
    pub patches: usize,
    pub failed_patches: usize,
    pub unreachable_endpoints: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub iterations: Vec<IterationTrace>,
    pub reason: TerminalReason,
    /// Backend errors, one line per failed patch.
    pub failures: Vec<String>,
}

impl RefineTrace {
    pub fn pixels_added(&self) -> usize {
        self.iterations.iter().map(|i| i.pixels_added).sum()
    }

    pub fn unreachable_endpoints(&self) -> usize {
        self.iterations.iter().map(|i| i.unreachable_endpoints).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub label: EdgeMap,
    pub trace: RefineTrace,
    /// Guidance map every confirmed pixel lies on.
    pub guidance: BinaryEdgeMap,
    /// Final edge map `E`.
    pub edges: EdgeMap,
    /// Gap pixels seen at each iteration.
    pub inpainting_history: Vec<BinaryEdgeMap>,
}

impl RefineOutput {
    /// Pixels at or above `eta` in the refined label.
    pub fn confident(&self, eta: f64) -> BinaryEdgeMap {
        self.label.threshold(eta)
    }
}

/// `C ⊙ Y` with label values below `eta` zeroed first.
pub fn initial_edge(c: &BinaryEdgeMap, y: &EdgeMap, eta: f64) -> Result<EdgeMap> {
    let filtered = y.map(|v| if v < eta { 0.0 } else { v });
    hadamard(&filtered, c)
}

/// Label pixels `>= eta` with no positive `E` pixel within Chebyshev
/// distance `neigh_radius`.
pub fn inpainting_pixels(y: &EdgeMap, e: &EdgeMap, eta: f64, neigh_radius: usize) -> Result<BinaryEdgeMap> {
    ensure_same_shape(y, e)?;
    let near = dilate_square(&e.support(), neigh_radius);
    y.zip_map(&near, |v, n| v >= eta && !n)
}

pub fn create_mask(y: &EdgeMap, e: &EdgeMap, cfg: &RefineConfig) -> Result<BinaryEdgeMap> {
    let px = inpainting_pixels(y, e, cfg.eta, cfg.neigh_radius)?;
    Ok(dilate_disk(&px, cfg.dilate_radius))
}

/// One `size × size` rectangle centred on each mask component's centroid,
/// clamped inside the image, in component-label order. Identical
/// rectangles (always the case when the image is smaller than `size`)
/// are emitted once.
pub fn create_patches(mask: &BinaryEdgeMap, size: usize) -> Vec<Rect> {
    let comps = connected_components(mask);
    let (w, h) = mask.shape();
    let mut out: Vec<Rect> = Vec::new();
    for (cx, cy) in comps.centroids() {
        let x0 = cx.round() as isize - (size / 2) as isize;
        let y0 = cy.round() as isize - (size / 2) as isize;
        let r = Rect::clamped(x0, y0, size, size, w, h);
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Confirmed pixels get `max(y, eta)`, unconfirmed label pixels get
/// `min(y, unconfident_value)`, everything else 0.
pub fn post_process(y: &EdgeMap, e: &EdgeMap, eta: f64, unconfident_value: f64) -> Result<EdgeMap> {
    post_process_with_floor(y, e, eta, unconfident_value)
}

fn post_process_with_floor(y: &EdgeMap, e: &EdgeMap, floor: f64, unconfident_value: f64) -> Result<EdgeMap> {
    y.zip_map(e, |yv, ev| {
        if ev > 0.0 {
            yv.max(floor)
        } else if yv > 0.0 {
            yv.min(unconfident_value)
        } else {
            0.0
        }
    })
}

/// Guidance map for `cfg.guidance`.
pub fn guidance_map(x: &GrayImage, y: &EdgeMap, cfg: &RefineConfig) -> Result<BinaryEdgeMap> {
    match cfg.guidance {
        Guidance::Canny => overdetect(x, &cfg.canny),
        Guidance::DilatedLabel { radius } => Ok(dilate_disk(&y.threshold(cfg.eta), radius)),
    }
}

/// Full refinement of label `y` for image `x`.
pub fn refine(
    x: &GrayImage,
    y: &EdgeMap,
    cfg: &RefineConfig,
    backend: &dyn InpaintBackend,
) -> Result<RefineOutput> {
    cfg.validate()?;
    ensure_same_shape(x, y)?;
    let c = guidance_map(x, y, cfg)?;
    let e = initial_edge(&c, y, cfg.eta)?;
    refine_from(x, y, &c, e, cfg, backend)
}

/// Iterates from a given guidance map and initial edge map.
pub fn refine_from(
    x: &GrayImage,
    y: &EdgeMap,
    c: &BinaryEdgeMap,
    mut e: EdgeMap,
    cfg: &RefineConfig,
    backend: &dyn InpaintBackend,
) -> Result<RefineOutput> {
    cfg.validate()?;
    ensure_same_shape(x, y)?;
    ensure_same_shape(x, c)?;
    ensure_same_shape(x, &e)?;
    let mut iterations = Vec::new();
    let mut failures = Vec::new();
    let mut history = Vec::new();
    let mut prev_connect: Option<usize> = None;
    let mut reason = TerminalReason::IMax;

    for _ in 0..cfg.i_max {
        let px = inpainting_pixels(y, &e, cfg.eta, cfg.neigh_radius)?;
        let mask = dilate_disk(&px, cfg.dilate_radius);
        let n_connect = connected_components(&mask).count;
        let mut it = IterationTrace {
            mask_pixels: mask.count(),
            inpainting_pixels: px.count(),
            n_connect,
            pixels_added: 0,
            patches: 0,
            failed_patches: 0,
            unreachable_endpoints: 0,
        };
        history.push(px);
        let stalled = prev_connect.is_some_and(|p| n_connect >= p);
        if n_connect == 0 || stalled {
            iterations.push(it);
            reason = TerminalReason::Converged;
            break;
        }
        prev_connect = Some(n_connect);

        let patches = create_patches(&mask, cfg.patch_size);
        let results: Vec<_> = patches
            .par_iter()
            .map(|&r| {
                let req = InpaintRequest {
                    edge: crop(&e, r),
                    gray: crop(x, r),
                    mask: crop(&mask, r),
                    canny: crop(c, r),
                };
                let out = backend
                    .inpaint(&req)
                    .and_then(|o| {
                        if o.edges.shape() == req.edge.shape() {
                            Ok(o)
                        } else {
                            Err(crate::inpaint::InpaintError::ShapeMismatch)
                        }
                    });
                (r, req.canny, out)
            })
            .collect();

        let before = e.support().count();
        for (r, canny_patch, out) in results {
            it.patches += 1;
            match out {
                Ok(o) => {
                    it.unreachable_endpoints += o.unreachable_endpoints;
                    let guided = hadamard(&o.edges.clamp_unit(), &canny_patch)?;
                    paste_max(&mut e, &guided, r)?;
                }
                Err(err) => {
                    it.failed_patches += 1;
                    failures.push(format!("patch {r:?}: {err}"));
                }
            }
        }
        it.pixels_added = e.support().count() - before;
        iterations.push(it);
    }

    let label = post_process_with_floor(y, &e, cfg.inpainted_value, cfg.unconfident_value)?;
    Ok(RefineOutput {
        label,
        trace: RefineTrace {
            iterations,
            reason,
            failures,
        },
        guidance: c.clone(),
        edges: e,
        inpainting_history: history,
    })
}

/// Removes `round(fraction · n)` of the `n` positive pixels of `e`,
/// chosen uniformly from a seeded generator.
pub fn drop_pixels(e: &EdgeMap, fraction: f64, seed: u64) -> EdgeMap {
    let on: Vec<usize> = (0..e.len()).filter(|&i| e.data()[i] > 0.0).collect();
    let k = ((fraction.clamp(0.0, 1.0) * on.len() as f64).round() as usize).min(on.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = e.clone();
    for j in sample(&mut rng, on.len(), k) {
        out.data_mut()[on[j]] = 0.0;
    }
    out
}

/// Label "refinement" by plain NMS of the averaged label, with no image
/// guidance.
pub fn baseline_nms(y: &EdgeMap, p: &NmsParams) -> Result<EdgeMap> {
    edge_nms(y, p)
}
