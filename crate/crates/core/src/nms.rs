//! Oriented non-maximum suppression for soft edge maps.
//!
//! The local edge normal comes from the Hessian of a smoothed copy of the
//! map: the eigenvector with the largest-magnitude eigenvalue points across
//! the ridge. Each pixel is then compared against bilinear samples taken
//! along that normal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{gaussian_blur, EdgeMap, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmsParams {
    /// Gaussian sigma applied before estimating orientation.
    pub orient_sigma: f64,
    /// Samples at `±1..=suppress_radius` pixels along the normal.
    pub suppress_radius: usize,
    /// A pixel survives when `value * boost` is at least every sample.
    pub boost: f64,
    /// Width of a border band forced to zero. 0 disables it.
    pub margin: usize,
}

impl Default for NmsParams {
    fn default() -> Self {
        NmsParams {
            orient_sigma: 2.0,
            suppress_radius: 1,
            boost: 1.01,
            margin: 0,
        }
    }
}

impl NmsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.orient_sigma >= 0.0) || self.suppress_radius < 1 || !(self.boost >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid nms parameters: orient_sigma {} suppress_radius {} boost {}",
                self.orient_sigma, self.suppress_radius, self.boost
            )));
        }
        Ok(())
    }
}

/// Central differences in the interior, one-sided at the borders.
fn derivative(f: &Grid<f64>, along_x: bool) -> Grid<f64> {
    let (w, h) = f.shape();
    let n = if along_x { w } else { h };
    Grid::from_fn(w, h, |x, y| {
        if n < 2 {
            return 0.0;
        }
        let i = if along_x { x } else { y };
        let at = |k: usize| if along_x { f.get(k, y) } else { f.get(x, k) };
        if i == 0 {
            at(1) - at(0)
        } else if i == n - 1 {
            at(n - 1) - at(n - 2)
        } else {
            0.5 * (at(i + 1) - at(i - 1))
        }
    })
}

/// Angle in `[0, π)` of the edge normal at every pixel.
pub fn normal_orientation(e: &EdgeMap, orient_sigma: f64) -> Result<Grid<f64>> {
    let s = gaussian_blur(e, orient_sigma)?;
    let ox = derivative(&s, true);
    let oy = derivative(&s, false);
    let oxx = derivative(&ox, true);
    let oxy = derivative(&ox, false);
    let oyy = derivative(&oy, false);
    let (w, h) = e.shape();
    Ok(Grid::from_fn(w, h, |x, y| {
        let (a, b, c) = (oxx.get(x, y), oxy.get(x, y), oyy.get(x, y));
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        // Eigenvector of the algebraically larger eigenvalue.
        let mut theta = 0.5 * b.atan2(0.5 * (a - c));
        if (mean - rad).abs() > (mean + rad).abs() {
            theta += std::f64::consts::FRAC_PI_2;
        }
        theta.rem_euclid(std::f64::consts::PI)
    }))
}

#[inline]
fn bilinear(e: &EdgeMap, x: f64, y: f64) -> f64 {
    let (w, h) = e.shape();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = e.get(x0, y0) * (1.0 - fx) + e.get(x1, y0) * fx;
    let bot = e.get(x0, y1) * (1.0 - fx) + e.get(x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Thins `e`: kept pixels retain their exact input value, the rest are 0.
pub fn edge_nms(e: &EdgeMap, p: &NmsParams) -> Result<EdgeMap> {
    p.validate()?;
    let orient = normal_orientation(e, p.orient_sigma)?;
    let (w, h) = e.shape();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        if y < p.margin || y + p.margin >= h {
            return;
        }
        for (x, slot) in row.iter_mut().enumerate() {
            if x < p.margin || x + p.margin >= w {
                continue;
            }
            let v = e.get(x, y);
            if v <= 0.0 {
                continue;
            }
            let theta = orient.get(x, y);
            let (s, c) = theta.sin_cos();
            let boosted = v * p.boost;
            let suppressed = (1..=p.suppress_radius).any(|d| {
                let d = d as f64;
                [d, -d].iter().any(|&t| {
                    boosted < bilinear(e, x as f64 + t * c, y as f64 + t * s)
                })
            });
            if !suppressed {
                *slot = v;
            }
        }
    });
    Grid::from_vec(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::vertical_ridge;

    /// Exhaustive neighbour comparison for a ridge that is constant along
    /// rows: the normal is horizontal, so only left/right neighbours matter.
    fn row_ridge_oracle(e: &EdgeMap, boost: f64) -> EdgeMap {
        let (w, h) = e.shape();
        Grid::from_fn(w, h, |x, y| {
            let v = e.get(x, y);
            let l = e.get(x.saturating_sub(1), y);
            let r = e.get((x + 1).min(w - 1), y);
            if v > 0.0 && v * boost >= l && v * boost >= r {
                v
            } else {
                0.0
            }
        })
    }

    #[test]
    fn soft_ridge_keeps_centre_column() {
        let e = vertical_ridge(16, 16, 7, &[0.5, 1.0, 0.5]);
        let out = edge_nms(&e, &NmsParams::default()).unwrap();
        assert_eq!(out, row_ridge_oracle(&e, 1.01));
        assert!((e.sum() - 32.0).abs() < 1e-12);
        assert!((out.sum() - 16.0).abs() < 1e-12);
        for y in 0..16 {
            assert_eq!(out.get(8, y), 1.0);
        }
    }

    #[test]
    fn thin_line_unchanged() {
        let e = vertical_ridge(12, 10, 4, &[1.0]);
        assert_eq!(edge_nms(&e, &NmsParams::default()).unwrap(), e);
        let diag = EdgeMap::from_fn(12, 12, |x, y| if x == y { 1.0 } else { 0.0 });
        assert_eq!(edge_nms(&diag, &NmsParams::default()).unwrap(), diag);
    }

    #[test]
    fn zero_map() {
        let z = EdgeMap::new(9, 9, 0.0);
        assert_eq!(edge_nms(&z, &NmsParams::default()).unwrap(), z);
    }

    #[test]
    fn rotation_equivariance_on_axis_ridges() {
        let e = vertical_ridge(20, 14, 5, &[0.2, 0.6, 1.0, 0.7, 0.3]);
        let p = NmsParams::default();
        let a = edge_nms(&e, &p).unwrap();
        let b = edge_nms(&e.transpose(), &p).unwrap();
        assert_eq!(a.transpose(), b);
    }

    #[test]
    fn margin_band_is_zeroed() {
        let e = EdgeMap::new(10, 10, 0.0);
        let mut e2 = e.clone();
        e2.set(0, 5, 1.0);
        e2.set(5, 5, 1.0);
        let p = NmsParams {
            margin: 2,
            ..Default::default()
        };
        let out = edge_nms(&e2, &p).unwrap();
        assert_eq!(out.get(0, 5), 0.0);
        assert_eq!(out.get(5, 5), 1.0);
    }

    #[test]
    fn invalid_params() {
        let e = EdgeMap::new(4, 4, 0.0);
        for p in [
            NmsParams { boost: 0.9, ..Default::default() },
            NmsParams { suppress_radius: 0, ..Default::default() },
            NmsParams { orient_sigma: -1.0, ..Default::default() },
        ] {
            assert!(edge_nms(&e, &p).is_err());
        }
    }
}
