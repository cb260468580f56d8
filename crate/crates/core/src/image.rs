//! Grayscale images as `Array2` values in `[0, 1]`, plus 8-bit PGM I/O.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::float::{fl, to_f64, Real};

/// Row-major grayscale image, `[(row, col)]`, values in `[0, 1]`.
pub type Image<F> = Array2<F>;

/// Quantize a unit-range value to an 8-bit level, `round(v * 255)`.
#[inline]
pub fn quantize8<F: Real>(v: F) -> u8 {
    let scaled = to_f64(v).clamp(0.0, 1.0) * 255.0;
    scaled.round() as u8
}

/// Read a P2 or P5 PGM file, mapping 8-bit values to `[0, 1]` by `v / 255`.
pub fn read_pgm<F: Real>(path: impl AsRef<Path>) -> Result<Image<F>> {
    let bytes = fs::read(path.as_ref())?;
    parse_pgm(&bytes)
}

/// Parse PGM bytes (P2 ASCII or P5 binary, maxval <= 255).
pub fn parse_pgm<F: Real>(bytes: &[u8]) -> Result<Image<F>> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)
        .ok_or_else(|| Error::Format("pgm: missing magic number".into()))?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(Error::Format(format!("pgm: unsupported magic {:?}", other))),
    };
    let width = next_usize(bytes, &mut pos, "width")?;
    let height = next_usize(bytes, &mut pos, "height")?;
    let maxval = next_usize(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format("pgm: zero dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("pgm: maxval {} not in 1..=255", maxval)));
    }

    let mut data = Vec::with_capacity(width * height);
    if binary {
        // Single whitespace byte separates the header from raster data.
        pos += 1;
        let raster = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| Error::Format("pgm: truncated raster".into()))?;
        for &b in raster {
            if b as usize > maxval {
                return Err(Error::Format(format!("pgm: sample {} exceeds maxval {}", b, maxval)));
            }
            data.push(fl::<F>(b as f64 / 255.0));
        }
    } else {
        for _ in 0..width * height {
            let v = next_usize(bytes, &mut pos, "sample")?;
            if v > maxval {
                return Err(Error::Format(format!("pgm: sample {} exceeds maxval {}", v, maxval)));
            }
            data.push(fl::<F>(v as f64 / 255.0));
        }
    }
    Array2::from_shape_vec((height, width), data)
        .map_err(|e| Error::Format(format!("pgm: {}", e)))
}

/// Write an image as binary P5 PGM with `value = round(v * 255)`.
pub fn write_pgm<F: Real>(image: &Image<F>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_pgm(image))?;
    Ok(())
}

/// Serialize an image to P5 PGM bytes.
pub fn format_pgm<F: Real>(image: &Image<F>) -> Vec<u8> {
    let (height, width) = image.dim();
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend(image.iter().map(|&v| quantize8(v)));
    out
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    // Skip whitespace and '#' comments that run to end of line.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn next_usize(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    next_token(bytes, pos)
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| Error::Format(format!("pgm: missing or bad {}", what)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn p2_parse() {
        let img: Image<f64> = parse_pgm(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n").unwrap();
        assert_eq!(img.dim(), (2, 2));
        assert_eq!(img[[0, 1]], 1.0);
        assert!((img[[1, 0]] - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn p5_round_trip() {
        let img: Image<f64> = array![[0.0, 1.0], [0.5, 0.25]];
        let parsed: Image<f64> = parse_pgm(&format_pgm(&img)).unwrap();
        for (a, b) in img.iter().zip(parsed.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn quantize_rounds() {
        assert_eq!(quantize8(0.0f64), 0);
        assert_eq!(quantize8(1.0f64), 255);
        assert_eq!(quantize8(0.5f64), 128); // 127.5 rounds away from zero
        assert_eq!(quantize8(-0.1f64), 0);
        assert_eq!(quantize8(1.7f64), 255);
    }

    #[test]
    fn truncated_raster_rejected() {
        assert!(parse_pgm::<f64>(b"P5\n4 4\n255\nabc").is_err());
    }
}
