//! Grayscale PGM (P5) and PNG reading and writing.
//!
//! Samples are scaled into `[0, 1]` by the format maximum on load
//! (`maxval` for PGM, `2^depth - 1` for PNG) and quantized back with
//! round-to-nearest on save. 16-bit samples are big-endian in both formats.

use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use super::{BinaryEdgeMap, EdgeMap, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Gray,
    Edge,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    Gray(Grid<f64>),
    Edge(EdgeMap),
    Binary(BinaryEdgeMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

pub fn load_image(path: impl AsRef<Path>, kind: ImageKind) -> Result<LoadedImage> {
    let map = load_unit(path.as_ref())?;
    Ok(match kind {
        ImageKind::Gray => LoadedImage::Gray(map),
        ImageKind::Edge => LoadedImage::Edge(map),
        ImageKind::Binary => LoadedImage::Binary(map.support()),
    })
}

/// Loads a grayscale image or edge map with samples in `[0, 1]`.
pub fn load_unit(path: &Path) -> Result<Grid<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes, path)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P3") {
        Err(Error::ColorImage { path: path.into() })
    } else {
        Err(Error::Format {
            path: path.into(),
            reason: "neither binary PGM (P5) nor PNG".into(),
        })
    }
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<BinaryEdgeMap> {
    Ok(load_unit(path.as_ref())?.support())
}

/// Writes `map` as PNG when the extension is `.png`, otherwise as PGM.
pub fn save_image(map: &Grid<f64>, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let max = depth.max() as f64;
    let samples: Vec<u16> = map
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16)
        .collect();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        encode_png(map.width(), map.height(), &samples, depth)
    } else {
        encode_pgm(map.width(), map.height(), &samples, depth)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_binary(map: &BinaryEdgeMap, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    save_image(&map.to_edge_map(), path, depth)
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.into(),
        reason: reason.into(),
    }
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Grid<f64>> {
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "header field out of range"))?;
    }
    // Exactly one whitespace byte precedes the raster.
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err(path, "missing separator before raster"));
    }
    pos += 1;

    let [width, height, maxval] = fields.map(|v| v as usize);
    if width == 0 || height == 0 {
        return Err(format_err(path, "zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(path, format!("maxval {maxval} out of range")));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[pos..];
    let n = width * height;
    if raster.len() < n * bps {
        return Err(format_err(path, "truncated raster"));
    }
    let scale = maxval as f64;
    let data: Vec<f64> = if bps == 1 {
        raster[..n].iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect()
    };
    Grid::from_vec(width, height, data)
}

fn encode_pgm(width: usize, height: usize, samples: &[u16], depth: BitDepth) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{}\n", depth.max()).into_bytes();
    match depth {
        BitDepth::Eight => out.extend(samples.iter().map(|&s| s as u8)),
        BitDepth::Sixteen => {
            for s in samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
    }
    out
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<Grid<f64>> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Grayscale {
        return Err(Error::ColorImage { path: path.into() });
    }
    let bits = depth as u8;
    if !matches!(depth, png::BitDepth::Eight | png::BitDepth::Sixteen) {
        return Err(Error::UnsupportedBitDepth {
            path: path.into(),
            depth: bits,
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let n = width * height;
    let data: Vec<f64> = if bits == 8 {
        buf[..n].iter().map(|&b| b as f64 / 255.0).collect()
    } else {
        buf[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect()
    };
    Grid::from_vec(width, height, data)
}

fn encode_png(width: usize, height: usize, samples: &[u16], depth: BitDepth) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        let raw: Vec<u8> = match depth {
            BitDepth::Eight => {
                enc.set_depth(png::BitDepth::Eight);
                samples.iter().map(|&s| s as u8).collect()
            }
            BitDepth::Sixteen => {
                enc.set_depth(png::BitDepth::Sixteen);
                samples.iter().flat_map(|s| s.to_be_bytes()).collect()
            }
        };
        // Encoding into memory cannot fail for a well-formed header.
        let mut writer = enc.write_header().expect("png header");
        writer.write_image_data(&raw).expect("png data");
        writer.finish().expect("png finish");
    }
    out.flush().ok();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_8bit_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 128, 64]);
        fs::write(&p, bytes).unwrap();
        let LoadedImage::Gray(img) = load_image(&p, ImageKind::Gray).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        let LoadedImage::Binary(b) = load_image(&p, ImageKind::Binary).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(b.data(), &[false, true, true, true]);
    }

    #[test]
    fn pgm_16bit_max_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pgm");
        let mut bytes = b"P5 1 2 65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0x80, 0x00]);
        fs::write(&p, bytes).unwrap();
        let img = load_unit(&p).unwrap();
        assert_eq!(img.get(0, 0), 1.0);
        assert_eq!(img.get(0, 1), 32768.0 / 65535.0);
    }

    #[test]
    fn zero_png_loads_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.png");
        save_image(&Grid::new(7, 3, 0.0), &p, BitDepth::Eight).unwrap();
        let img = load_unit(&p).unwrap();
        assert_eq!(img.shape(), (7, 3));
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_quantization_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let map = Grid::from_fn(13, 9, |x, y| ((x * 7 + y * 13) % 101) as f64 / 100.0);
        for (ext, depth, tol) in [
            ("pgm", BitDepth::Eight, 1.0 / 255.0),
            ("png", BitDepth::Eight, 1.0 / 255.0),
            ("pgm", BitDepth::Sixteen, 1.0 / 65535.0),
            ("png", BitDepth::Sixteen, 1.0 / 65535.0),
        ] {
            let p = dir.path().join(format!("m.{ext}"));
            save_image(&map, &p, depth).unwrap();
            let back = load_unit(&p).unwrap();
            let err = map
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= tol, "{ext} {depth:?}: {err}");
        }
        let half = Grid::new(4, 4, 0.5);
        let p = dir.path().join("half.png");
        save_image(&half, &p, BitDepth::Sixteen).unwrap();
        let back = load_unit(&p).unwrap();
        assert!(back.data().iter().all(|v| (v - 0.5).abs() <= 1.0 / 65535.0));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryEdgeMap::from_fn(9, 5, |x, y| (x + 2 * y) % 3 == 0);
        for name in ["b.png", "b.pgm"] {
            let p = dir.path().join(name);
            save_binary(&m, &p, BitDepth::Eight).unwrap();
            assert_eq!(load_binary(&p).unwrap(), m);
        }
    }

    #[test]
    fn rejects_color_and_low_depth_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3]).unwrap();
        }
        fs::write(&p, &out).unwrap();
        assert!(matches!(load_unit(&p), Err(Error::ColorImage { .. })));

        let p = dir.path().join("g4.png");
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Four);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0x1f]).unwrap();
        }
        fs::write(&p, &out).unwrap();
        assert!(matches!(
            load_unit(&p),
            Err(Error::UnsupportedBitDepth { depth: 4, .. })
        ));
    }

    #[test]
    fn missing_and_garbage_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_unit(&dir.path().join("nope.pgm")),
            Err(Error::Io { .. })
        ));
        let p = dir.path().join("junk.pgm");
        fs::write(&p, b"hello").unwrap();
        assert!(matches!(load_unit(&p), Err(Error::Format { .. })));
        let p = dir.path().join("short.pgm");
        fs::write(&p, b"P5 4 4 255\n\x00\x01").unwrap();
        assert!(matches!(load_unit(&p), Err(Error::Format { .. })));
    }
}
