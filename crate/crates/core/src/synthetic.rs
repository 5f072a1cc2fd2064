//! Deterministic synthetic images for tests, demos and the noise study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imagecore::{gaussian_blur, GrayImage};

/// Axis-aligned square `[margin, size - margin)` of value `inside` on a
/// background of value `outside`.
pub fn square_image(width: usize, height: usize, margin: usize, inside: f64, outside: f64) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        let inx = x >= margin && x + margin < width;
        let iny = y >= margin && y + margin < height;
        if inx && iny {
            inside
        } else {
            outside
        }
    })
}

/// 64×64 dark square on a light background.
pub fn dark_square() -> GrayImage {
    square_image(64, 64, 16, 0.2, 0.8)
}

/// Piecewise-constant scene of rectangles and discs over a shallow
/// background ramp, lightly anti-aliased. Same seed, same image.
pub fn corpus_image(seed: u64, width: usize, height: usize) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let base = rng.gen_range(0.35..0.65);
    let ramp = rng.gen_range(-0.1..0.1);
    let mut img = GrayImage::from_fn(width, height, |x, _| {
        (base + ramp * x as f64 / width as f64).clamp(0.0, 1.0)
    });
    let shapes = rng.gen_range(2..=4);
    let (wf, hf) = (width as f64, height as f64);
    for _ in 0..shapes {
        let value: f64 = if rng.gen_bool(0.5) {
            rng.gen_range(0.05..0.25)
        } else {
            rng.gen_range(0.75..0.95)
        };
        if rng.gen_bool(0.5) {
            let w = rng.gen_range(0.2..0.5) * wf;
            let h = rng.gen_range(0.2..0.5) * hf;
            let x0 = rng.gen_range(0.08..0.92 - w / wf) * wf;
            let y0 = rng.gen_range(0.08..0.92 - h / hf) * hf;
            for y in 0..height {
                for x in 0..width {
                    let (fx, fy) = (x as f64, y as f64);
                    if fx >= x0 && fx < x0 + w && fy >= y0 && fy < y0 + h {
                        img.set(x, y, value);
                    }
                }
            }
        } else {
            let r = rng.gen_range(0.1..0.22) * wf.min(hf);
            let cx = rng.gen_range(r + 0.08 * wf..wf - r - 0.08 * wf);
            let cy = rng.gen_range(r + 0.08 * hf..hf - r - 0.08 * hf);
            for y in 0..height {
                for x in 0..width {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    if dx * dx + dy * dy <= r * r {
                        img.set(x, y, value);
                    }
                }
            }
        }
    }
    gaussian_blur(&img, 0.5).expect("positive sigma")
}

/// Soft ridge of the given cross-section profile, constant along rows.
pub fn vertical_ridge(width: usize, height: usize, start_col: usize, profile: &[f64]) -> GrayImage {
    GrayImage::from_fn(width, height, |x, _| {
        x.checked_sub(start_col)
            .and_then(|i| profile.get(i).copied())
            .unwrap_or(0.0)
    })
}
