use super::Grid;
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps for radius `ceil(3σ)`, centre tap in the
/// middle. `sigma == 0` gives the single tap `[1.0]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// How samples outside the image are filled during convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Replicate the nearest border pixel.
    Clamp,
    /// Treat outside samples as 0.
    Zero,
}

/// Separable Gaussian convolution with clamp-to-border replication.
pub fn gaussian_blur(img: &Grid<f64>, sigma: f64) -> Result<Grid<f64>> {
    gaussian_blur_with(img, sigma, Border::Clamp)
}

pub fn gaussian_blur_with(img: &Grid<f64>, sigma: f64, border: Border) -> Result<Grid<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be a finite value >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = img.shape();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let sx = x as isize + j as isize - r;
                if border == Border::Zero && (sx < 0 || sx >= w as isize) {
                    continue;
                }
                acc += kv * row[sx.clamp(0, w as isize - 1) as usize];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (j, kv) in k.iter().enumerate() {
            let sy = y as isize + j as isize - r;
            if border == Border::Zero && (sy < 0 || sy >= h as isize) {
                continue;
            }
            let sy = sy.clamp(0, h as isize - 1) as usize;
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    Grid::from_vec(w, h, out)
}

/// Bilinear resampling with half-pixel-centred coordinates.
pub fn resize_bilinear(img: &Grid<f64>, new_w: usize, new_h: usize) -> Result<Grid<f64>> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "target size must be positive, got {new_w}x{new_h}"
        )));
    }
    let (w, h) = img.shape();
    if (w, h) == (new_w, new_h) {
        return Ok(img.clone());
    }
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let axis = |i: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let c = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    let cols: Vec<_> = (0..new_w).map(|x| axis(x, sx, w)).collect();
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let (y0, y1, fy) = axis(y, sy, h);
        for &(x0, x1, fx) in &cols {
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Grid::from_vec(new_w, new_h, out)
}
