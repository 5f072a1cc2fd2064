use std::time::Duration;

use crate::canny::{percentile, sobel_gradients};
use crate::error::{Error, Result};
use crate::imagecore::{
    gaussian_blur, hadamard, resize_bilinear, save_image, BitDepth, EdgeMap, GrayImage,
};
use crate::inpaint::{read_output, run_with_timeout, split_template, temp_root, InpaintError};

/// Produces a soft edge map in `[0, 1]` with the image's shape.
pub trait Detector: Send + Sync {
    fn detect(&self, img: &GrayImage) -> Result<EdgeMap>;
}

/// Sobel magnitude of the blurred image, divided by its 99th percentile
/// and clamped to 1. Falls back to the maximum when the percentile is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftDetector {
    pub sigma: f64,
}

impl Default for SoftDetector {
    fn default() -> Self {
        SoftDetector { sigma: 1.0 }
    }
}

impl Detector for SoftDetector {
    fn detect(&self, img: &GrayImage) -> Result<EdgeMap> {
        let mag = sobel_gradients(&gaussian_blur(img, self.sigma)?).magnitude;
        let mut scale = percentile(mag.data(), 0.99);
        if scale <= 0.0 {
            scale = mag.max_value();
        }
        if scale <= 0.0 {
            return Ok(EdgeMap::new(img.width(), img.height(), 0.0));
        }
        Ok(mag.map(|v| (v / scale).min(1.0)))
    }
}

/// Runs `program [args...] image.png out.pgm` and reads the map back.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalDetector {
    pub fn from_template(template: &str, timeout: Duration) -> Option<Self> {
        let (program, args) = split_template(template)?;
        Some(ExternalDetector { program, args, timeout })
    }
}

impl Detector for ExternalDetector {
    fn detect(&self, img: &GrayImage) -> Result<EdgeMap> {
        let fail = Error::Detector;
        let dir = tempfile::Builder::new()
            .prefix("crispedge-detect-")
            .tempdir_in(temp_root())
            .map_err(|e| fail(InpaintError::Io(e.to_string())))?;
        let input = dir.path().join("image.png");
        let output = dir.path().join("out.pgm");
        save_image(img, &input, BitDepth::Eight).map_err(|e| fail(InpaintError::Io(e.to_string())))?;
        let mut argv = self.args.clone();
        argv.push(input.to_string_lossy().into_owned());
        argv.push(output.to_string_lossy().into_owned());
        run_with_timeout(&self.program, &argv, self.timeout).map_err(fail)?;
        read_output(&output, img.shape()).map_err(fail)
    }
}

/// The two detector passes and their product.
#[derive(Debug, Clone)]
pub struct Fusion {
    /// Detection at the original size.
    pub direct: EdgeMap,
    /// Detection on the upscaled image, resized back.
    pub upscaled: EdgeMap,
    pub fused: EdgeMap,
}

/// Detects at the original size and at `factor` times the size, brings
/// the second result back to the original size and multiplies the two.
pub fn upscale_fuse(img: &GrayImage, detector: &dyn Detector, factor: f64) -> Result<Fusion> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("upscale factor must be > 0, got {factor}")));
    }
    let (w, h) = img.shape();
    let checked = |m: EdgeMap, shape: (usize, usize)| -> Result<EdgeMap> {
        if m.shape() != shape {
            return Err(Error::ShapeMismatch { left: shape, right: m.shape() });
        }
        Ok(m.clamp_unit())
    };
    let direct = checked(detector.detect(img)?, (w, h))?;
    let uw = ((w as f64 * factor).round() as usize).max(1);
    let uh = ((h as f64 * factor).round() as usize).max(1);
    let up = resize_bilinear(img, uw, uh)?;
    let big = checked(detector.detect(&up)?, (uw, uh))?;
    let upscaled = resize_bilinear(&big, w, h)?.clamp_unit();
    let fused = hadamard(&direct, &upscaled)?;
    Ok(Fusion { direct, upscaled, fused })
}
