//! Crispness, the annotator-robust weighted BCE loss, and the
//! tolerance-matched precision/recall machinery behind ODS and OIS.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{ensure_same_shape, BinaryEdgeMap, EdgeMap};
use crate::nms::{edge_nms, NmsParams};

/// Ratio of total mass after NMS to total mass before.
pub fn crispness(e: &EdgeMap, p: &NmsParams) -> Result<f64> {
    let before = e.sum();
    if !(before > 0.0) {
        return Err(Error::UndefinedCrispness);
    }
    Ok(edge_nms(e, p)?.sum() / before)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageCrispness {
    pub value: f64,
    /// Maps with zero total mass, left out of the mean.
    pub skipped: usize,
}

pub fn average_crispness(maps: &[EdgeMap], p: &NmsParams) -> Result<AverageCrispness> {
    if maps.is_empty() {
        return Err(Error::Empty("no edge maps to average".into()));
    }
    let values: Vec<Option<f64>> = maps
        .par_iter()
        .map(|m| match crispness(m, p) {
            Ok(c) => Ok(Some(c)),
            Err(Error::UndefinedCrispness) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedCrispness);
    }
    Ok(AverageCrispness {
        value: defined.iter().sum::<f64>() / defined.len() as f64,
        skipped: values.len() - defined.len(),
    })
}

const LOSS_EPS: f64 = 1e-7;

/// Class-balanced cross entropy that ignores ground-truth pixels with
/// `0 < y < eta`. Negatives are weighted by `lambda·|Y+|/(|Y+|+|Y-|)`,
/// positives by `|Y-|/(|Y+|+|Y-|)`; the result is the sum over pixels.
pub fn wbce_loss(pred: &EdgeMap, gt: &EdgeMap, lambda: f64, eta: f64) -> Result<f64> {
    ensure_same_shape(pred, gt)?;
    let pos = gt.data().iter().filter(|&&y| y >= eta).count() as f64;
    let neg = gt.data().iter().filter(|&&y| y == 0.0).count() as f64;
    if pos + neg == 0.0 {
        return Err(Error::AllPixelsIgnored);
    }
    let alpha = lambda * pos / (pos + neg);
    let beta = neg / (pos + neg);
    Ok(pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            if y == 0.0 {
                -alpha * (1.0 - p).ln()
            } else if y < eta {
                0.0
            } else {
                -beta * p.ln()
            }
        })
        .sum())
}

/// Matching tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRadius {
    /// Fraction of the image diagonal.
    DiagonalFraction(f64),
    /// Pixels.
    Absolute(f64),
}

impl MatchRadius {
    pub fn pixels(self, width: usize, height: usize) -> f64 {
        match self {
            MatchRadius::DiagonalFraction(f) => f * ((width * width + height * height) as f64).sqrt(),
            MatchRadius::Absolute(r) => r,
        }
    }
}

/// Raw counts behind one precision/recall evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    /// Prediction pixels matched in every label.
    pub tp_pred: usize,
    pub n_pred: usize,
    /// Ground-truth pixels matched, summed over labels.
    pub tp_gt: usize,
    pub n_gt: usize,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp_pred += o.tp_pred;
        self.n_pred += o.n_pred;
        self.tp_gt += o.tp_gt;
        self.n_gt += o.n_gt;
    }
}

#[derive(Debug, Clone)]
pub struct EdgeMatch {
    /// Per label: matched prediction pixels.
    pub pred_matched: Vec<BinaryEdgeMap>,
    /// Per label: matched ground-truth pixels.
    pub gt_matched: Vec<BinaryEdgeMap>,
    pub counts: MatchCounts,
}

/// Candidate pairs within `radius` as `(d², pred_index, gt_index)`,
/// sorted.
fn candidate_pairs(pred: &[(usize, usize)], gt: &[(usize, usize)], radius: f64) -> Vec<(i64, usize, usize)> {
    if pred.is_empty() || gt.is_empty() || radius < 0.0 {
        return Vec::new();
    }
    let r2 = radius * radius;
    // Spatial hash of the label pixels by cell of side floor(radius) + 1.
    let cell = radius.floor() as i64 + 1;
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, &(x, y)) in gt.iter().enumerate() {
        buckets
            .entry((x as i64 / cell, y as i64 / cell))
            .or_default()
            .push(j);
    }
    let mut pairs = Vec::new();
    for (i, &(px, py)) in pred.iter().enumerate() {
        let (cx, cy) = (px as i64 / cell, py as i64 / cell);
        for by in cy - 1..=cy + 1 {
            for bx in cx - 1..=cx + 1 {
                if let Some(list) = buckets.get(&(bx, by)) {
                    for &j in list {
                        let dx = gt[j].0 as i64 - px as i64;
                        let dy = gt[j].1 as i64 - py as i64;
                        let d2 = dx * dx + dy * dy;
                        if d2 as f64 <= r2 {
                            pairs.push((d2, i, j));
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// One-to-one assignment within `radius`, greedy by squared distance,
/// then prediction index, then label-pixel index. Returns
/// `(pred_index, gt_index)` pairs in the order they were taken.
pub fn greedy_match(
    pred: &[(usize, usize)],
    gt: &[(usize, usize)],
    radius: f64,
) -> Vec<(usize, usize)> {
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut out = Vec::new();
    for (_, i, j) in candidate_pairs(pred, gt, radius) {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            out.push((i, j));
        }
    }
    out
}

const FREE: usize = usize::MAX;

/// Maximum-cardinality one-to-one assignment within `radius`: the greedy
/// nearest-first matching, grown by Hopcroft-Karp augmenting paths until
/// no pixel can be added. Candidates are tried nearest first, so the
/// result is deterministic. Returns pairs sorted by prediction index.
pub fn match_points(
    pred: &[(usize, usize)],
    gt: &[(usize, usize)],
    radius: f64,
) -> Vec<(usize, usize)> {
    let pairs = candidate_pairs(pred, gt, radius);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); pred.len()];
    let mut pm = vec![FREE; pred.len()];
    let mut gm = vec![FREE; gt.len()];
    for &(_, i, j) in &pairs {
        adj[i].push(j);
        if pm[i] == FREE && gm[j] == FREE {
            pm[i] = j;
            gm[j] = i;
        }
    }
    augment(&adj, &mut pm, &mut gm);
    pm.iter()
        .enumerate()
        .filter(|&(_, &j)| j != FREE)
        .map(|(i, &j)| (i, j))
        .collect()
}

fn augment(adj: &[Vec<usize>], pm: &mut [usize], gm: &mut [usize]) {
    let inf = usize::MAX;
    let mut layer = vec![inf; adj.len()];
    loop {
        let mut queue = VecDeque::new();
        for (i, l) in layer.iter_mut().enumerate() {
            *l = if pm[i] == FREE && !adj[i].is_empty() { 0 } else { inf };
            if *l == 0 {
                queue.push_back(i);
            }
        }
        let mut reachable = false;
        while let Some(u) = queue.pop_front() {
            for &j in &adj[u] {
                let w = gm[j];
                if w == FREE {
                    reachable = true;
                } else if layer[w] == inf {
                    layer[w] = layer[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !reachable {
            return;
        }
        let mut next = vec![0usize; adj.len()];
        for s in 0..adj.len() {
            if pm[s] != FREE || layer[s] != 0 {
                continue;
            }
            // Iterative DFS over the layered graph; adj[u][next[u] - 1] is
            // the label pixel leading to the next stack entry.
            let mut stack = vec![s];
            while let Some(&u) = stack.last() {
                if next[u] == adj[u].len() {
                    layer[u] = inf;
                    stack.pop();
                    continue;
                }
                let j = adj[u][next[u]];
                next[u] += 1;
                let w = gm[j];
                if w == FREE {
                    for &v in &stack {
                        let jv = adj[v][next[v] - 1];
                        pm[v] = jv;
                        gm[jv] = v;
                    }
                    break;
                } else if layer[w] != inf && layer[w] == layer[u] + 1 {
                    stack.push(w);
                }
            }
        }
    }
}

pub fn match_edges(
    pred: &BinaryEdgeMap,
    gts: &[BinaryEdgeMap],
    radius: MatchRadius,
) -> Result<EdgeMatch> {
    for g in gts {
        ensure_same_shape(pred, g)?;
    }
    let (w, h) = pred.shape();
    let r = radius.pixels(w, h);
    let pred_pts = pred.points();
    let mut matched_everywhere = vec![!gts.is_empty(); pred_pts.len()];
    let mut counts = MatchCounts {
        n_pred: pred_pts.len(),
        ..Default::default()
    };
    let mut pred_matched = Vec::with_capacity(gts.len());
    let mut gt_matched = Vec::with_capacity(gts.len());
    for g in gts {
        let gt_pts = g.points();
        let pairs = match_points(&pred_pts, &gt_pts, r);
        let mut pm = BinaryEdgeMap::new(w, h, false);
        let mut gm = BinaryEdgeMap::new(w, h, false);
        let mut hit = vec![false; pred_pts.len()];
        for &(i, j) in &pairs {
            hit[i] = true;
            pm.set(pred_pts[i].0, pred_pts[i].1, true);
            gm.set(gt_pts[j].0, gt_pts[j].1, true);
        }
        for (m, h) in matched_everywhere.iter_mut().zip(&hit) {
            *m &= *h;
        }
        counts.tp_gt += pairs.len();
        counts.n_gt += gt_pts.len();
        pred_matched.push(pm);
        gt_matched.push(gm);
    }
    counts.tp_pred = matched_everywhere.iter().filter(|&&m| m).count();
    Ok(EdgeMatch {
        pred_matched,
        gt_matched,
        counts,
    })
}

/// One point on a precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub tp_pred: usize,
    pub n_pred: usize,
    pub tp_gt: usize,
    pub n_gt: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl PRPoint {
    pub fn from_counts(threshold: f64, c: MatchCounts) -> Self {
        let precision = ratio(c.tp_pred, c.n_pred);
        let recall = ratio(c.tp_gt, c.n_gt);
        PRPoint {
            threshold,
            tp_pred: c.tp_pred,
            n_pred: c.n_pred,
            tp_gt: c.tp_gt,
            n_gt: c.n_gt,
            precision,
            recall,
            f: f_score(precision, recall),
        }
    }

    pub fn counts(&self) -> MatchCounts {
        MatchCounts {
            tp_pred: self.tp_pred,
            n_pred: self.n_pred,
            tp_gt: self.tp_gt,
            n_gt: self.n_gt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Matching tolerance as a fraction of the image diagonal.
    pub max_dist: f64,
    /// Pixel tolerance; overrides `max_dist` when set.
    pub absolute_radius: Option<f64>,
    /// Number of evenly spaced thresholds `k / (n + 1)`, `k = 1..=n`.
    pub thresholds: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            max_dist: 0.0075,
            absolute_radius: None,
            thresholds: 99,
        }
    }
}

impl BenchConfig {
    pub fn radius(&self) -> MatchRadius {
        match self.absolute_radius {
            Some(r) => MatchRadius::Absolute(r),
            None => MatchRadius::DiagonalFraction(self.max_dist),
        }
    }

    pub fn threshold_values(&self) -> Vec<f64> {
        let n = self.thresholds;
        (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
    }
}

/// A prediction and its ground-truth labels.
#[derive(Debug, Clone)]
pub struct BenchImage {
    pub id: String,
    pub pred: EdgeMap,
    pub gts: Vec<BinaryEdgeMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub id: String,
    pub best_threshold: f64,
    pub best_f: f64,
    pub crispness: Option<f64>,
    pub points: Vec<PRPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub ods_f: f64,
    pub ods_threshold: f64,
    pub ois_f: f64,
    /// Mean crispness of the raw predictions; `None` when every map is empty.
    pub average_crispness: Option<f64>,
    pub skipped_zero_maps: usize,
    pub nms: bool,
    /// Counts pooled over all images at each threshold.
    pub dataset: Vec<PRPoint>,
    pub images: Vec<ImageReport>,
}

impl BenchmarkReport {
    /// `threshold,precision,recall,f` for the pooled curve.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall,f\n");
        for p in &self.dataset {
            writeln!(s, "{},{},{},{}", p.threshold, p.precision, p.recall, p.f).unwrap();
        }
        s
    }
}

/// Best `(threshold, f)` over a curve; the first threshold wins ties.
fn best_point(points: &[PRPoint]) -> (f64, f64) {
    points.iter().fold((points.first().map_or(0.0, |p| p.threshold), -1.0), |acc, p| {
        if p.f > acc.1 {
            (p.threshold, p.f)
        } else {
            acc
        }
    })
}

/// Curve for one image over the given thresholds.
pub fn evaluate_image(
    pred: &EdgeMap,
    gts: &[BinaryEdgeMap],
    thresholds: &[f64],
    radius: MatchRadius,
) -> Result<Vec<PRPoint>> {
    thresholds
        .iter()
        .map(|&t| {
            let m = match_edges(&pred.threshold(t), gts, radius)?;
            Ok(PRPoint::from_counts(t, m.counts))
        })
        .collect()
}

pub fn benchmark(
    images: &[BenchImage],
    cfg: &BenchConfig,
    nms: Option<&NmsParams>,
    crispness_params: &NmsParams,
) -> Result<BenchmarkReport> {
    if images.is_empty() {
        return Err(Error::Empty("benchmark needs at least one image".into()));
    }
    if cfg.thresholds == 0 {
        return Err(Error::InvalidArgument("thresholds must be >= 1".into()));
    }
    let thresholds = cfg.threshold_values();
    let radius = cfg.radius();
    let per_image: Vec<(Vec<PRPoint>, Option<f64>)> = images
        .par_iter()
        .map(|img| {
            let thinned;
            let pred = match nms {
                Some(p) => {
                    thinned = edge_nms(&img.pred, p)?;
                    &thinned
                }
                None => &img.pred,
            };
            let points = evaluate_image(pred, &img.gts, &thresholds, radius)?;
            let c = match crispness(&img.pred, crispness_params) {
                Ok(c) => Some(c),
                Err(Error::UndefinedCrispness) => None,
                Err(e) => return Err(e),
            };
            Ok((points, c))
        })
        .collect::<Result<_>>()?;

    let dataset: Vec<PRPoint> = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut c = MatchCounts::default();
            for (pts, _) in &per_image {
                c += pts[k].counts();
            }
            PRPoint::from_counts(t, c)
        })
        .collect();
    let (ods_threshold, ods_f) = best_point(&dataset);

    let mut reports = Vec::with_capacity(images.len());
    let mut ois_sum = 0.0;
    let mut crisp = Vec::new();
    for (img, (points, c)) in images.iter().zip(per_image) {
        let (best_threshold, best_f) = best_point(&points);
        ois_sum += best_f;
        crisp.extend(c);
        reports.push(ImageReport {
            id: img.id.clone(),
            best_threshold,
            best_f,
            crispness: c,
            points,
        });
    }
    let average_crispness = if crisp.is_empty() {
        None
    } else {
        Some(crisp.iter().sum::<f64>() / crisp.len() as f64)
    };
    Ok(BenchmarkReport {
        ods_f,
        ods_threshold,
        ois_f: ois_sum / images.len() as f64,
        average_crispness,
        skipped_zero_maps: images.len() - crisp.len(),
        nms: nms.is_some(),
        dataset,
        images: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::vertical_ridge;
    use proptest::prelude::*;

    fn pts_map(w: usize, h: usize, pts: &[(usize, usize)]) -> BinaryEdgeMap {
        let mut m = BinaryEdgeMap::new(w, h, false);
        for &(x, y) in pts {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn crispness_of_thin_and_ridge_maps() {
        let p = NmsParams::default();
        let thin = vertical_ridge(16, 16, 3, &[1.0]);
        assert_eq!(crispness(&thin, &p).unwrap(), 1.0);
        let ridge = vertical_ridge(16, 16, 7, &[0.5, 1.0, 0.5]);
        assert!((crispness(&ridge, &p).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            crispness(&EdgeMap::new(4, 4, 0.0), &p),
            Err(Error::UndefinedCrispness)
        ));
    }

    #[test]
    fn average_crispness_cases() {
        let p = NmsParams::default();
        let thin = vertical_ridge(16, 16, 3, &[1.0]);
        let ridge = vertical_ridge(16, 16, 7, &[0.5, 1.0, 0.5]);
        let zero = EdgeMap::new(16, 16, 0.0);
        let a = average_crispness(&[thin.clone(), thin.clone()], &p).unwrap();
        assert_eq!(a.value, 1.0);
        let a = average_crispness(&[ridge, thin, zero.clone()], &p).unwrap();
        assert!((a.value - 0.75).abs() < 1e-12);
        assert_eq!(a.skipped, 1);
        assert!(average_crispness(&[], &p).is_err());
        assert!(average_crispness(&[zero], &p).is_err());
    }

    #[test]
    fn wbce_two_pixel_fixture() {
        let gt = EdgeMap::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let pred = EdgeMap::from_vec(2, 1, vec![0.5, 0.5]).unwrap();
        // Hand evaluation: alpha = 1.1 * 1/2, beta = 1/2.
        let expect = 0.55 * 2f64.ln() + 0.5 * 2f64.ln();
        assert!((wbce_loss(&pred, &gt, 1.1, 0.3).unwrap() - expect).abs() < 1e-12);
        assert!(wbce_loss(&gt, &gt, 1.1, 0.3).unwrap() <= 1e-5);
    }

    #[test]
    fn wbce_ignores_unconfident_pixels() {
        let gt = EdgeMap::from_vec(3, 1, vec![1.0, 0.0, 0.2]).unwrap();
        let a = EdgeMap::from_vec(3, 1, vec![0.7, 0.2, 0.01]).unwrap();
        let b = EdgeMap::from_vec(3, 1, vec![0.7, 0.2, 0.99]).unwrap();
        assert_eq!(
            wbce_loss(&a, &gt, 1.1, 0.3).unwrap(),
            wbce_loss(&b, &gt, 1.1, 0.3).unwrap()
        );
        let all_soft = EdgeMap::new(2, 2, 0.1);
        assert!(matches!(
            wbce_loss(&a.clone(), &gt, 1.1, 0.3).map(|_| ()),
            Ok(())
        ));
        assert!(matches!(
            wbce_loss(&all_soft, &all_soft, 1.1, 0.3),
            Err(Error::AllPixelsIgnored)
        ));
    }

    #[test]
    fn match_identity_and_radius() {
        let g = pts_map(5, 5, &[(1, 1), (2, 2), (3, 3)]);
        let m = match_edges(&g, std::slice::from_ref(&g), MatchRadius::DiagonalFraction(0.0075)).unwrap();
        assert_eq!(m.counts.tp_pred, 3);
        assert_eq!(m.counts.tp_gt, 3);

        let pred = pts_map(5, 5, &[(2, 2)]);
        let gt = pts_map(5, 5, &[(2, 3)]);
        // Radius 0.0075 * sqrt(50) = 0.053 px < 1 px separation.
        let m = match_edges(&pred, std::slice::from_ref(&gt), MatchRadius::DiagonalFraction(0.0075)).unwrap();
        assert_eq!(PRPoint::from_counts(0.5, m.counts).f, 0.0);
        let m = match_edges(&pred, std::slice::from_ref(&gt), MatchRadius::Absolute(2.0)).unwrap();
        assert_eq!(PRPoint::from_counts(0.5, m.counts).f, 1.0);
    }

    #[test]
    fn multi_label_precision_needs_every_label() {
        let pred = pts_map(8, 8, &[(1, 1), (5, 5)]);
        let a = pts_map(8, 8, &[(1, 1), (5, 5)]);
        let b = pts_map(8, 8, &[(1, 1)]);
        let m = match_edges(&pred, &[a, b], MatchRadius::Absolute(1.0)).unwrap();
        assert_eq!(m.counts.tp_pred, 1);
        assert_eq!(m.counts.n_pred, 2);
        assert_eq!(m.counts.tp_gt, 3);
        assert_eq!(m.counts.n_gt, 3);
    }

    #[test]
    fn augmentation_recovers_what_greedy_misses() {
        // Greedy takes the zero-distance pair (1, 0) and strands pred 0.
        let pred = [(0, 0), (1, 0)];
        let gt = [(1, 0), (2, 0)];
        assert_eq!(greedy_match(&pred, &gt, 1.0), vec![(1, 0)]);
        assert_eq!(match_points(&pred, &gt, 1.0), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_prefers_nearest_then_row_major() {
        // Two preds equidistant from one gt: the lower index wins.
        let pairs = greedy_match(&[(0, 0), (2, 0)], &[(1, 0)], 1.0);
        assert_eq!(pairs, vec![(0, 0)]);
        let pairs = greedy_match(&[(0, 0), (3, 0)], &[(2, 0)], 2.0);
        assert_eq!(pairs, vec![(1, 0)]);
    }

    #[test]
    fn benchmark_identity_and_shifted() {
        let ids = ["a", "b"];
        let gts: Vec<BinaryEdgeMap> = (0..2)
            .map(|k| BinaryEdgeMap::from_fn(40, 40, |x, _| x == 10 + k || x == 25))
            .collect();
        let images: Vec<BenchImage> = gts
            .iter()
            .zip(ids)
            .map(|(g, id)| BenchImage {
                id: id.into(),
                pred: g.to_edge_map(),
                gts: vec![g.clone()],
            })
            .collect();
        let p = NmsParams::default();
        let r = benchmark(&images, &BenchConfig::default(), None, &p).unwrap();
        assert_eq!(r.ods_f, 1.0);
        assert_eq!(r.ois_f, 1.0);
        assert_eq!(r.average_crispness, Some(1.0));
        assert_eq!(r.dataset.len(), 99);

        let shifted: Vec<BenchImage> = images
            .iter()
            .map(|im| BenchImage {
                pred: EdgeMap::from_fn(40, 40, |x, y| {
                    if x >= 3 { im.pred.get(x - 3, y) } else { 0.0 }
                }),
                ..im.clone()
            })
            .collect();
        let cfg = BenchConfig { absolute_radius: Some(1.5), ..Default::default() };
        let r = benchmark(&shifted, &cfg, None, &p).unwrap();
        assert_eq!(r.ods_f, 0.0);
        assert_eq!(r.ois_f, 0.0);
        assert!(benchmark(&[], &cfg, None, &p).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let g = BinaryEdgeMap::from_fn(8, 8, |x, _| x == 3);
        let img = BenchImage { id: "x".into(), pred: g.to_edge_map(), gts: vec![g] };
        let cfg = BenchConfig { thresholds: 3, ..Default::default() };
        let r = benchmark(&[img], &cfg, None, &NmsParams::default()).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "threshold,precision,recall,f");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0.25,1,1,1");
        let json = serde_json::to_value(&r).unwrap();
        for key in ["ods_f", "ods_threshold", "ois_f", "average_crispness", "skipped_zero_maps"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn wbce_is_nonnegative(
            pred in prop::collection::vec(0.0f64..=1.0, 12),
            gt in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..=1.0], 12),
        ) {
            let p = EdgeMap::from_vec(4, 3, pred).unwrap();
            let g = EdgeMap::from_vec(4, 3, gt).unwrap();
            if let Ok(l) = wbce_loss(&p, &g, 1.1, 0.3) {
                prop_assert!(l >= 0.0);
            }
        }

        #[test]
        fn matching_is_one_to_one(
            pred in prop::collection::vec((0usize..12, 0usize..12), 0..25),
            gt in prop::collection::vec((0usize..12, 0usize..12), 0..25),
            r in 0.5f64..3.0,
        ) {
            let pm = pts_map(12, 12, &pred);
            let gm = pts_map(12, 12, &gt);
            let m = match_edges(&pm, std::slice::from_ref(&gm), MatchRadius::Absolute(r)).unwrap();
            prop_assert_eq!(m.pred_matched[0].count(), m.counts.tp_gt);
            prop_assert!(m.counts.tp_gt <= pm.count().min(gm.count()));
            prop_assert!(m.pred_matched[0].is_subset_of(&pm));
            prop_assert!(m.gt_matched[0].is_subset_of(&gm));
        }

        #[test]
        fn adding_a_correct_pixel_never_lowers_tp(
            gt in prop::collection::vec((0usize..10, 0usize..10), 1..15),
            pred in prop::collection::vec((0usize..10, 0usize..10), 0..15),
            pick in 0usize..15,
        ) {
            let gm = pts_map(10, 10, &gt);
            let pm = pts_map(10, 10, &pred);
            let m = match_edges(&pm, std::slice::from_ref(&gm), MatchRadius::Absolute(1.5)).unwrap();
            // Add a prediction exactly on an unmatched label pixel.
            let unmatched: Vec<_> = gm.points().into_iter()
                .filter(|&(x, y)| !m.gt_matched[0].get(x, y) && !pm.get(x, y)).collect();
            if !unmatched.is_empty() {
                let (x, y) = unmatched[pick % unmatched.len()];
                let mut pm2 = pm.clone();
                pm2.set(x, y, true);
                let m2 = match_edges(&pm2, std::slice::from_ref(&gm), MatchRadius::Absolute(1.5)).unwrap();
                prop_assert!(m2.counts.tp_gt >= m.counts.tp_gt);
            }
        }
    }
}
