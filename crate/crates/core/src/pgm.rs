//! Minimal PGM (P2 ASCII / P5 binary) reader and writer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Encoding flavour of a PGM file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// `P2`, whitespace separated decimal samples.
    Ascii,
    /// `P5`, one byte per sample.
    Binary,
}

/// A decoded grayscale raster, samples row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("{what} out of range")))
    }
}

/// Decodes a PGM byte buffer.
pub fn decode(data: &[u8]) -> Result<GrayImage> {
    if data.len() < 2 {
        return Err(Error::Parse("file too short".into()));
    }
    let format = match &data[..2] {
        b"P2" => PgmFormat::Ascii,
        b"P5" => PgmFormat::Binary,
        other => {
            return Err(Error::Parse(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.next_uint("width")?;
    let height = cur.next_uint("height")?;
    let max_value = cur.next_uint("max value")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse(format!("empty raster {width}x{height}")));
    }
    if max_value == 0 || max_value > 255 {
        return Err(Error::Parse(format!("max value {max_value} not in 1..=255")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::Parse("raster size overflows".into()))?;

    let samples = match format {
        PgmFormat::Ascii => {
            let mut samples = Vec::with_capacity(count);
            for i in 0..count {
                let v = cur.next_uint("sample").map_err(|_| {
                    Error::Parse(format!("expected {count} samples, found {i}"))
                })?;
                if v > max_value {
                    return Err(Error::Parse(format!("sample {v} exceeds max value {max_value}")));
                }
                samples.push(v as u16);
            }
            samples
        }
        PgmFormat::Binary => {
            // exactly one whitespace byte separates the header from the raster
            if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
                return Err(Error::Parse("missing separator after header".into()));
            }
            let start = cur.pos + 1;
            let raster = data
                .get(start..start + count)
                .ok_or_else(|| Error::Parse(format!("expected {count} raster bytes")))?;
            let samples: Vec<u16> = raster.iter().map(|&b| b as u16).collect();
            if let Some(v) = samples.iter().find(|&&v| v as usize > max_value) {
                return Err(Error::Parse(format!("sample {v} exceeds max value {max_value}")));
            }
            samples
        }
    };

    Ok(GrayImage {
        width,
        height,
        max_value: max_value as u16,
        samples,
    })
}

/// Encodes an 8-bit raster. `comments` are emitted as `#` lines after the magic.
pub fn encode(image: &GrayImage, format: PgmFormat, comments: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(match format {
        PgmFormat::Ascii => b"P2\n",
        PgmFormat::Binary => b"P5\n",
    });
    for c in comments {
        for line in c.lines() {
            out.extend_from_slice(format!("# {line}\n").as_bytes());
        }
    }
    out.extend_from_slice(
        format!("{} {}\n{}\n", image.width, image.height, image.max_value).as_bytes(),
    );
    match format {
        PgmFormat::Ascii => {
            for row in image.samples.chunks(image.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        PgmFormat::Binary => out.extend(image.samples.iter().map(|&v| v.min(255) as u8)),
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&data)
}

pub fn write(
    path: impl AsRef<Path>,
    image: &GrayImage,
    format: PgmFormat,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(image, format, comments)).map_err(|e| Error::io(path, e))
}

/// Affine map of real values onto 0..=255. Returns the image together with
/// `(offset, scale)` such that `value = offset + scale * sample`.
pub fn quantize(values: &[f64], width: usize, height: usize) -> (GrayImage, f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let scale = if hi > lo { (hi - lo) / 255.0 } else { 1.0 };
    let samples = values
        .iter()
        .map(|&v| (((v - lo) / scale).round()).clamp(0.0, 255.0) as u16)
        .collect();
    (
        GrayImage {
            width,
            height,
            max_value: 255,
            samples,
        },
        lo,
        scale,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_with_comments() {
        let img = decode(b"P2\n# made by hand\n2 2\n255\n255 0\n0 255\n").unwrap();
        assert_eq!((img.width, img.height, img.max_value), (2, 2, 255));
        assert_eq!(img.samples, vec![255, 0, 0, 255]);
    }

    #[test]
    fn binary_raster() {
        let mut data = b"P5 3 1 255\n".to_vec();
        data.extend_from_slice(&[0, 255, 10]);
        let img = decode(&data).unwrap();
        assert_eq!(img.samples, vec![0, 255, 10]);
    }

    #[test]
    fn encode_decode_both_formats() {
        let img = GrayImage {
            width: 3,
            height: 2,
            max_value: 255,
            samples: vec![0, 255, 255, 0, 13, 255],
        };
        for fmt in [PgmFormat::Ascii, PgmFormat::Binary] {
            let bytes = encode(&img, fmt, &["seed=1".into()]);
            assert_eq!(decode(&bytes).unwrap(), img);
        }
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(decode(b"P3\n1 1\n255\n0\n"), Err(Error::Parse(_))));
        assert!(matches!(decode(b"P2\n2\n"), Err(Error::Parse(_))));
        assert!(matches!(decode(b"P2\n2 2\n255\n0 0 0\n"), Err(Error::Parse(_))));
        assert!(matches!(decode(b"P2\n1 1\n255\n300\n"), Err(Error::Parse(_))));
        assert!(matches!(decode(b"P5\n2 2\n255\n\x00"), Err(Error::Parse(_))));
        assert!(matches!(decode(b"P2\n0 2\n255\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn quantize_records_affine_map() {
        let (img, offset, scale) = quantize(&[-1.0, 0.0, 1.0, 0.5], 2, 2);
        assert_eq!(img.samples[0], 0);
        assert_eq!(img.samples[2], 255);
        for (&s, &v) in img.samples.iter().zip(&[-1.0, 0.0, 1.0, 0.5]) {
            assert!((offset + scale * s as f64 - v).abs() <= scale / 2.0 + 1e-12);
        }
    }
}
