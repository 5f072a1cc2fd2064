//! Canny edge detection and the multi-blur over-detection used as the
//! guidance map for label refinement.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_blur, BinaryEdgeMap, GrayImage, Grid};

/// Thresholds are fractions of the 99th-percentile gradient magnitude of
/// each blurred image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub low_frac: f64,
    pub high_frac: f64,
    pub blur_sigmas: Vec<f64>,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            low_frac: 0.05,
            high_frac: 0.15,
            blur_sigmas: vec![1.0, 2.0, 3.0],
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_frac > 0.0 && self.low_frac <= self.high_frac && self.high_frac <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "canny fractions must satisfy 0 < low <= high <= 1, got {} / {}",
                self.low_frac, self.high_frac
            )));
        }
        if self.blur_sigmas.is_empty() || self.blur_sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument(
                "blur_sigmas must be nonempty and each >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Sobel response of an image.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub gx: Grid<f64>,
    pub gy: Grid<f64>,
    pub magnitude: Grid<f64>,
    /// Edge direction (perpendicular to the gradient) in `[0, π)`.
    pub orientation: Grid<f64>,
}

/// 3×3 Sobel with replicated borders.
pub fn sobel_gradients(img: &GrayImage) -> Gradients {
    let (w, h) = img.shape();
    let mut gx = Grid::new(w, h, 0.0);
    let mut gy = Grid::new(w, h, 0.0);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gx.set(x as usize, y as usize, sx);
            gy.set(x as usize, y as usize, sy);
        }
    }
    let magnitude = gx.zip_map(&gy, f64::hypot).expect("same shape");
    let orientation = gx
        .zip_map(&gy, |a, b| (b.atan2(a) + PI / 2.0).rem_euclid(PI))
        .expect("same shape");
    Gradients {
        gx,
        gy,
        magnitude,
        orientation,
    }
}

/// Gradient direction bucket: 0 = horizontal gradient, 1 = 45°,
/// 2 = vertical gradient, 3 = 135° (image coordinates, y down).
fn direction_bin(gx: f64, gy: f64) -> usize {
    let angle = gy.atan2(gx).rem_euclid(PI);
    (((angle + PI / 8.0) / (PI / 4.0)) as usize) % 4
}

const BIN_STEP: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (-1, 1)];

/// Gradient NMS over four quantized directions. A pixel survives when it
/// is strictly above its backward neighbour and not below its forward one,
/// so a two-pixel plateau across a step yields a single-pixel line.
pub(crate) fn gradient_nms(g: &Gradients) -> Grid<f64> {
    let (w, h) = g.magnitude.shape();
    let mag = &g.magnitude;
    let mut out = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let m = mag.get(x, y);
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = BIN_STEP[direction_bin(g.gx.get(x, y), g.gy.get(x, y))];
            let sample = |sx: isize, sy: isize| {
                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                    0.0
                } else {
                    mag.get(sx as usize, sy as usize)
                }
            };
            let fwd = sample(x as isize + dx, y as isize + dy);
            let bwd = sample(x as isize - dx, y as isize - dy);
            if m > bwd && m >= fwd {
                out.set(x, y, m);
            }
        }
    }
    out
}

fn hysteresis(thin: &Grid<f64>, low: f64, high: f64) -> BinaryEdgeMap {
    let (w, h) = thin.shape();
    let mut out = BinaryEdgeMap::new(w, h, false);
    let mut queue = VecDeque::new();
    for (i, &m) in thin.data().iter().enumerate() {
        if m >= high {
            out.data_mut()[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !out.data()[j] && thin.data()[j] >= low {
                    out.data_mut()[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    out
}

/// Canny on an already-smoothed image with absolute thresholds.
pub fn canny(img: &GrayImage, low: f64, high: f64) -> Result<BinaryEdgeMap> {
    if !(low > 0.0 && low <= high) {
        return Err(Error::InvalidArgument(format!(
            "canny thresholds must satisfy 0 < low <= high, got {low} / {high}"
        )));
    }
    Ok(canny_from_gradients(&sobel_gradients(img), low, high))
}

fn canny_from_gradients(g: &Gradients, low: f64, high: f64) -> BinaryEdgeMap {
    hysteresis(&gradient_nms(g), low, high)
}

/// Nearest-rank percentile (`q` in `[0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, nth, _) = v.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    *nth
}

/// Absolute `(low, high)` thresholds for one blurred image. Falls back to
/// the maximum magnitude when fewer than 1% of pixels carry gradient.
/// `None` for a flat image.
pub fn resolve_thresholds(magnitude: &Grid<f64>, p: &CannyParams) -> Option<(f64, f64)> {
    let mut reference = percentile(magnitude.data(), 0.99);
    if reference <= 0.0 {
        reference = magnitude.max_value();
    }
    if !(reference > 0.0) {
        return None;
    }
    Some((p.low_frac * reference, p.high_frac * reference))
}

/// Canny of `gaussian_blur(img, sigma)` with percentile-relative thresholds.
pub fn canny_at_sigma(img: &GrayImage, sigma: f64, p: &CannyParams) -> Result<BinaryEdgeMap> {
    let blurred = gaussian_blur(img, sigma)?;
    let g = sobel_gradients(&blurred);
    Ok(match resolve_thresholds(&g.magnitude, p) {
        Some((low, high)) => canny_from_gradients(&g, low, high),
        None => BinaryEdgeMap::new(img.width(), img.height(), false),
    })
}

/// Union of per-sigma Canny maps.
pub fn overdetect(img: &GrayImage, p: &CannyParams) -> Result<BinaryEdgeMap> {
    p.validate()?;
    let maps = p
        .blur_sigmas
        .par_iter()
        .map(|&s| canny_at_sigma(img, s, p))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BinaryEdgeMap::new(img.width(), img.height(), false);
    for m in &maps {
        out = out.union(m)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    fn step(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, _| if x >= w / 2 { 1.0 } else { 0.0 })
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let g = sobel_gradients(&GrayImage::new(8, 8, 0.4));
        assert!(g.magnitude.data().iter().all(|&m| m == 0.0));
        assert_eq!(canny(&GrayImage::new(8, 8, 0.4), 0.1, 0.2).unwrap().count(), 0);
        assert_eq!(
            overdetect(&GrayImage::new(8, 8, 0.4), &CannyParams::default())
                .unwrap()
                .count(),
            0
        );
    }

    #[test]
    fn vertical_step_stencils() {
        let g = sobel_gradients(&step(8, 6));
        // Hand-applied stencil: columns 3 and 4 see a 0|1 difference with
        // weights (1, 2, 1) across rows, i.e. 4; every other column is flat.
        for y in 0..6 {
            for x in 0..8 {
                let expect = if x == 3 || x == 4 { 4.0 } else { 0.0 };
                assert_eq!(g.magnitude.get(x, y), expect);
                assert_eq!(g.gy.get(x, y), 0.0);
            }
            assert!((g.orientation.get(3, y) - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_symmetry() {
        let img = synthetic::square_image(24, 24, 6, 0.2, 0.8);
        let img = GrayImage::from_fn(24, 24, |x, y| img.get(x, y) * (1.0 + 0.01 * x as f64) / 1.3);
        let a = sobel_gradients(&img).magnitude;
        let b = sobel_gradients(&img.transpose()).magnitude;
        for y in 0..24 {
            for x in 0..24 {
                assert!((a.get(x, y) - b.get(y, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn step_gives_single_column() {
        let out = canny(&step(64, 64), 0.5, 1.0).unwrap();
        for y in 0..64 {
            let cols: Vec<usize> = (0..64).filter(|&x| out.get(x, y)).collect();
            assert_eq!(cols, vec![31], "row {y}");
        }
    }

    #[test]
    fn lowering_low_threshold_is_monotone() {
        let img = synthetic::corpus_image(3, 64, 64);
        let g = sobel_gradients(&gaussian_blur(&img, 1.0).unwrap());
        let (low, high) = resolve_thresholds(&g.magnitude, &CannyParams::default()).unwrap();
        let a = canny_from_gradients(&g, low, high);
        let b = canny_from_gradients(&g, low * 0.5, high);
        assert!(a.is_subset_of(&b));
        for (i, &on) in a.data().iter().enumerate() {
            if on {
                assert!(g.magnitude.data()[i] >= low);
            }
        }
    }

    #[test]
    fn bad_thresholds_rejected() {
        assert!(canny(&step(4, 4), 0.0, 1.0).is_err());
        assert!(canny(&step(4, 4), 2.0, 1.0).is_err());
        let p = CannyParams {
            blur_sigmas: vec![],
            ..Default::default()
        };
        assert!(overdetect(&step(4, 4), &p).is_err());
    }

    #[test]
    fn single_sigma_overdetect_equals_canny_at_sigma() {
        let img = synthetic::square_image(48, 48, 12, 0.2, 0.8);
        let p = CannyParams {
            blur_sigmas: vec![2.0],
            ..Default::default()
        };
        assert_eq!(overdetect(&img, &p).unwrap(), canny_at_sigma(&img, 2.0, &p).unwrap());
    }

    #[test]
    fn union_contains_each_sigma() {
        let img = synthetic::square_image(64, 64, 16, 0.2, 0.8);
        let p = CannyParams::default();
        let fused = overdetect(&img, &p).unwrap();
        for &s in &p.blur_sigmas {
            let single = canny_at_sigma(&img, s, &p).unwrap();
            assert!(single.is_subset_of(&fused));
        }
        // The sigma=1 outline of the square survives fusion pixel for pixel.
        let fine = canny_at_sigma(&img, 1.0, &p).unwrap();
        assert!(fine.count() > 100);
        assert!(fine.is_subset_of(&fused));
    }

    #[test]
    fn more_sigmas_give_superset() {
        let img = synthetic::corpus_image(7, 64, 64);
        let small = CannyParams {
            blur_sigmas: vec![1.0, 3.0],
            ..Default::default()
        };
        let big = CannyParams::default();
        assert!(overdetect(&img, &small)
            .unwrap()
            .is_subset_of(&overdetect(&img, &big).unwrap()));
    }

    #[test]
    fn deterministic() {
        let img = synthetic::corpus_image(11, 80, 60);
        let p = CannyParams::default();
        assert_eq!(overdetect(&img, &p).unwrap(), overdetect(&img, &p).unwrap());
    }

    #[test]
    fn nms_thinness_property() {
        let img = synthetic::corpus_image(5, 64, 64);
        let g = sobel_gradients(&gaussian_blur(&img, 1.0).unwrap());
        let (low, high) = resolve_thresholds(&g.magnitude, &CannyParams::default()).unwrap();
        let out = canny_from_gradients(&g, low, high);
        for y in 1..63 {
            for x in 1..63 {
                if !out.get(x, y) {
                    continue;
                }
                let (dx, dy) = BIN_STEP[direction_bin(g.gx.get(x, y), g.gy.get(x, y))];
                let m = g.magnitude.get(x, y);
                let f = g.magnitude.get((x as isize + dx) as usize, (y as isize + dy) as usize);
                let b = g.magnitude.get((x as isize - dx) as usize, (y as isize - dy) as usize);
                assert!(!(f > m && b > m));
            }
        }
    }
}
