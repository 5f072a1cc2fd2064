//! Elastic deformation of binary edge maps, used to simulate annotators
//! who trace the right edges in slightly wrong places.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{ensure_same_shape, gaussian_blur_with, BinaryEdgeMap, Border, EdgeMap, Grid};

pub const DEFAULT_SMOOTH_SIGMA: f64 = 4.0;
pub const DEFAULT_ANNOTATORS: usize = 5;

/// Per-pixel offsets in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub dx: Grid<f64>,
    pub dy: Grid<f64>,
    pub alpha: f64,
    pub smooth_sigma: f64,
    pub seed: u64,
}

impl DisplacementField {
    /// Field with the same offset everywhere.
    pub fn constant(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        DisplacementField {
            dx: Grid::new(width, height, dx),
            dy: Grid::new(width, height, dy),
            alpha: dx.hypot(dy),
            smooth_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.dx
            .data()
            .iter()
            .zip(self.dy.data())
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

/// Uniform `[-1, 1]` noise per axis, Gaussian-smoothed with zero padding,
/// then rescaled so the largest offset magnitude is exactly `alpha`.
/// Replicated borders would inflate the variance near the image edge and
/// put the peak there, shrinking interior offsets after rescaling.
pub fn make_field(
    width: usize,
    height: usize,
    alpha: f64,
    smooth_sigma: f64,
    seed: u64,
) -> Result<DisplacementField> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = width * height;
    let noise = |rng: &mut ChaCha8Rng| -> Result<Grid<f64>> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        gaussian_blur_with(&Grid::from_vec(width, height, raw)?, smooth_sigma, Border::Zero)
    };
    let mut dx = noise(&mut rng)?;
    let mut dy = noise(&mut rng)?;
    let peak = dx
        .data()
        .iter()
        .zip(dy.data())
        .map(|(a, b)| a.hypot(*b))
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { alpha / peak } else { 0.0 };
    for v in dx.data_mut().iter_mut().chain(dy.data_mut().iter_mut()) {
        *v *= scale;
    }
    Ok(DisplacementField {
        dx,
        dy,
        alpha,
        smooth_sigma,
        seed,
    })
}

/// Backward warp with nearest-neighbour sampling: output `(x, y)` reads
/// the input at `(x - dx, y - dy)`, so positive offsets move content
/// right/down. Samples falling outside the image are false.
pub fn apply_field(m: &BinaryEdgeMap, f: &DisplacementField) -> Result<BinaryEdgeMap> {
    ensure_same_shape(m, &f.dx)?;
    ensure_same_shape(m, &f.dy)?;
    let (w, h) = m.shape();
    Ok(BinaryEdgeMap::from_fn(w, h, |x, y| {
        let sx = (x as f64 - f.dx.get(x, y)).round();
        let sy = (y as f64 - f.dy.get(x, y)).round();
        if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
            false
        } else {
            m.get(sx as usize, sy as usize)
        }
    }))
}

/// Mean of the maps warped by each field.
pub fn average_warps(m: &BinaryEdgeMap, fields: &[DisplacementField]) -> Result<EdgeMap> {
    if fields.is_empty() {
        return Err(Error::InvalidArgument("need at least one field".into()));
    }
    let warped = fields
        .par_iter()
        .map(|f| apply_field(m, f))
        .collect::<Result<Vec<_>>>()?;
    let k = fields.len() as f64;
    let (w, h) = m.shape();
    let mut acc = vec![0u32; w * h];
    for wm in &warped {
        for (a, &b) in acc.iter_mut().zip(wm.data()) {
            *a += b as u32;
        }
    }
    Grid::from_vec(w, h, acc.into_iter().map(|c| c as f64 / k).collect())
}

/// Mean of `annotators` independently warped copies, seeded
/// `base_seed, base_seed + 1, ...`.
pub fn simulate_annotators(
    m: &BinaryEdgeMap,
    alpha: f64,
    smooth_sigma: f64,
    annotators: usize,
    base_seed: u64,
) -> Result<EdgeMap> {
    if annotators == 0 {
        return Err(Error::InvalidArgument("annotator count must be >= 1".into()));
    }
    let (w, h) = m.shape();
    let fields = (0..annotators as u64)
        .map(|k| make_field(w, h, alpha, smooth_sigma, base_seed.wrapping_add(k)))
        .collect::<Result<Vec<_>>>()?;
    average_warps(m, &fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_alpha_is_zero_field() {
        let f = make_field(20, 10, 0.0, 4.0, 7).unwrap();
        assert!(f.dx.data().iter().chain(f.dy.data()).all(|&v| v == 0.0));
        assert!(make_field(4, 4, -1.0, 4.0, 0).is_err());
    }

    #[test]
    fn field_is_deterministic_and_normalized() {
        let a = make_field(32, 24, 6.5, 4.0, 99).unwrap();
        let b = make_field(32, 24, 6.5, 4.0, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.dx, make_field(32, 24, 6.5, 4.0, 100).unwrap().dx);
        // Direct scan for the largest offset.
        let mut peak = 0.0f64;
        for i in 0..a.dx.len() {
            peak = peak.max((a.dx.data()[i].powi(2) + a.dy.data()[i].powi(2)).sqrt());
        }
        assert!((peak - 6.5).abs() < 1e-6);
    }

    #[test]
    fn warps() {
        let mut m = BinaryEdgeMap::new(10, 10, false);
        m.set(4, 5, true);
        let zero = DisplacementField::constant(10, 10, 0.0, 0.0);
        assert_eq!(apply_field(&m, &zero).unwrap(), m);
        let shift = DisplacementField::constant(10, 10, 2.0, 0.0);
        let out = apply_field(&m, &shift).unwrap();
        assert_eq!(out.points(), vec![(6, 5)]);
        let empty = BinaryEdgeMap::new(10, 10, false);
        assert_eq!(apply_field(&empty, &shift).unwrap(), empty);
        let bad = DisplacementField::constant(9, 10, 0.0, 0.0);
        assert!(apply_field(&m, &bad).is_err());
    }

    #[test]
    fn two_translations_average_to_half() {
        let m = BinaryEdgeMap::from_fn(12, 6, |x, _| x == 5);
        let fields = [
            DisplacementField::constant(12, 6, 1.0, 0.0),
            DisplacementField::constant(12, 6, -1.0, 0.0),
        ];
        let avg = average_warps(&m, &fields).unwrap();
        // Oracle: mean of the two shifted copies.
        for y in 0..6 {
            for x in 0..12 {
                let expect = 0.5 * ((x == 6) as u8 as f64) + 0.5 * ((x == 4) as u8 as f64);
                assert_eq!(avg.get(x, y), expect);
            }
        }
    }

    #[test]
    fn simulate_edge_cases() {
        let m = BinaryEdgeMap::from_fn(16, 16, |x, y| x == 8 || y == 3);
        assert_eq!(simulate_annotators(&m, 0.0, 4.0, 5, 1).unwrap(), m.to_edge_map());
        let one = simulate_annotators(&m, 3.0, 4.0, 1, 42).unwrap();
        let f = make_field(16, 16, 3.0, 4.0, 42).unwrap();
        assert_eq!(one, apply_field(&m, &f).unwrap().to_edge_map());
        let k = simulate_annotators(&m, 3.0, 4.0, 4, 42).unwrap();
        assert!(k.data().iter().all(|v| (v * 4.0).fract() == 0.0));
        assert!(simulate_annotators(&m, 3.0, 4.0, 0, 42).is_err());
    }

    #[test]
    fn mass_roughly_conserved_for_small_alpha() {
        let m = BinaryEdgeMap::from_fn(96, 96, |x, y| {
            (20..76).contains(&x) && (20..76).contains(&y) && (x == 20 || x == 75 || y == 20 || y == 75 || x == y)
        });
        let before = m.count() as f64;
        for alpha in [2.0, 5.0, 10.0] {
            let mut total = 0.0;
            for seed in 0..8 {
                let f = make_field(96, 96, alpha, DEFAULT_SMOOTH_SIGMA, seed).unwrap();
                total += apply_field(&m, &f).unwrap().count() as f64;
            }
            let ratio = total / 8.0 / before;
            assert!((ratio - 1.0).abs() <= 0.10, "alpha {alpha}: ratio {ratio}");
        }
    }
}
