//! Raster value types and the primitives shared by every other module.
//!
//! All maps are row-major [`Grid`]s. Intensity images and edge probability
//! maps are `Grid<f64>` with samples in `[0, 1]`; binary maps are
//! `Grid<bool>`. Derived scalar fields (gradient magnitude, displacement
//! components) reuse `Grid<f64>` without the unit-range restriction.

mod filter;
mod io;
pub(crate) mod morph;

pub use filter::{gaussian_blur, gaussian_blur_with, gaussian_kernel, resize_bilinear, Border};
pub use io::{
    load_binary, load_image, load_unit, save_binary, save_image, BitDepth, ImageKind, LoadedImage,
};
pub use morph::{connected_components, dilate_disk, dilate_square, Components};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 2-D raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Grayscale photograph or any derived scalar field.
pub type GrayImage = Grid<f64>;
/// Soft edge probabilities: predictions, labels and refined labels.
pub type EdgeMap = Grid<f64>;
/// Boolean raster: Canny output, thresholded predictions, masks.
pub type BinaryEdgeMap = Grid<bool>;

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be positive");
        Grid {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Copy, V: Copy>(
        &self,
        other: &Grid<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Grid<V>> {
        ensure_same_shape(self, other)?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Transposed copy; handy for symmetry checks.
    pub fn transpose(&self) -> Grid<T> {
        Grid::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }
}

impl Grid<f64> {
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks the `[0, 1]` sample invariant of images and edge maps.
    pub fn ensure_unit_range(&self) -> Result<()> {
        match self
            .data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            Some(i) => Err(Error::InvalidArgument(format!(
                "sample {i} = {} outside [0, 1]",
                self.data[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn clamp_unit(mut self) -> Self {
        for v in &mut self.data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        self
    }

    /// `v >= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryEdgeMap {
        self.map(|v| v >= threshold)
    }

    /// Nonzero support.
    pub fn support(&self) -> BinaryEdgeMap {
        self.map(|v| v > 0.0)
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_edge_map(&self) -> EdgeMap {
        self.map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn union(&self, other: &BinaryEdgeMap) -> Result<BinaryEdgeMap> {
        self.zip_map(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryEdgeMap) -> Result<BinaryEdgeMap> {
        self.zip_map(other, |a, b| a && b)
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &BinaryEdgeMap) -> bool {
        self.shape() == other.shape() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Row-major coordinates of the true pixels.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let mut pts = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    pts.push((x, y));
                }
            }
        }
        pts
    }
}

pub(crate) fn ensure_same_shape<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    Ok(())
}

/// Values usable as the second factor of [`hadamard`].
pub trait Weight: Copy {
    fn weight(self) -> f64;
}

impl Weight for f64 {
    #[inline]
    fn weight(self) -> f64 {
        self
    }
}

impl Weight for bool {
    #[inline]
    fn weight(self) -> f64 {
        if self {
            1.0
        } else {
            0.0
        }
    }
}

/// Elementwise product; booleans count as 0/1.
pub fn hadamard<W: Weight>(a: &EdgeMap, b: &Grid<W>) -> Result<EdgeMap> {
    a.zip_map(b, |x, w| x * w.weight())
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Rect::new(0, 0, width, height)
    }

    /// A `w × h` rectangle with top-left corner `(x, y)`, shifted and
    /// shrunk as needed so it lies inside a `width × height` image. The
    /// size is only reduced when the image itself is smaller.
    pub fn clamped(x: isize, y: isize, w: usize, h: usize, width: usize, height: usize) -> Self {
        let w = w.clamp(1, width);
        let h = h.clamp(1, height);
        let x = x.clamp(0, (width - w) as isize) as usize;
        let y = y.clamp(0, (height - h) as isize) as usize;
        Rect { x, y, w, h }
    }

    /// This rectangle clamped into a `width × height` image.
    pub fn clamp_to(&self, width: usize, height: usize) -> Self {
        Rect::clamped(self.x as isize, self.y as isize, self.w, self.h, width, height)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }
}

/// Copies the clamped rectangle out of `map`.
pub fn crop<T: Copy>(map: &Grid<T>, r: Rect) -> Grid<T> {
    let r = r.clamp_to(map.width, map.height);
    Grid::from_fn(r.w, r.h, |x, y| map.get(r.x + x, r.y + y))
}

/// Writes `src` into `dst` at `r`, keeping the elementwise maximum where
/// they overlap. `src` must be `r.w × r.h` after clamping.
pub fn paste_max<T: Copy + PartialOrd>(dst: &mut Grid<T>, src: &Grid<T>, r: Rect) -> Result<()> {
    let r = r.clamp_to(dst.width, dst.height);
    if src.width != r.w || src.height != r.h {
        return Err(Error::ShapeMismatch {
            left: (r.w, r.h),
            right: src.shape(),
        });
    }
    for y in 0..r.h {
        for x in 0..r.w {
            let s = src.get(x, y);
            let i = dst.index(r.x + x, r.y + y);
            if s > dst.data[i] {
                dst.data[i] = s;
            }
        }
    }
    Ok(())
}
