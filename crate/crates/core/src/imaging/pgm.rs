//! Netpbm grayscale codec: reads P2 (ASCII) and P5 (binary) at 8 or 16 bits,
//! writes P5 for synthetic data (16-bit) and debug dumps (8-bit, rescaled).
//!
//! Header grammar per the netpbm spec: magic, width, height, maxval as
//! whitespace-separated tokens, `#` comments running to end of line, and for
//! P5 exactly one whitespace byte between the maxval and the pixel payload.
//! 16-bit P5 samples are big-endian.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Decode a P2/P5 buffer. `path` is only used in error messages.
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let corrupt = |detail: String| Error::CorruptImage {
        path: path.to_path_buf(),
        detail,
    };

    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token().ok_or_else(|| corrupt("missing magic".into()))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("magic {:?} is not a grayscale PGM", String::from_utf8_lossy(other)),
            })
        }
    };
    let width = cur.uint("width", &corrupt)?;
    let height = cur.uint("height", &corrupt)?;
    let maxval = cur.uint("maxval", &corrupt)?;
    if width == 0 || height == 0 {
        return Err(corrupt(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(corrupt(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width as usize * height as usize;

    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the payload.
        cur.pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let payload = cur
            .bytes
            .get(cur.pos..cur.pos + need)
            .ok_or_else(|| corrupt(format!("truncated pixel data: need {need} bytes")))?;
        if wide {
            for pair in payload.chunks_exact(2) {
                pixels.push(u16::from_be_bytes([pair[0], pair[1]]) as f64);
            }
        } else {
            pixels.extend(payload.iter().map(|&b| b as f64));
        }
    } else {
        for _ in 0..count {
            pixels.push(cur.uint("pixel", &corrupt)? as f64);
        }
    }
    if let Some(bad) = pixels.iter().find(|&&p| p > maxval as f64) {
        return Err(corrupt(format!("pixel value {bad} exceeds maxval {maxval}")));
    }
    GrayImage::new(width, height, pixels)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn uint(&mut self, what: &str, corrupt: &dyn Fn(String) -> Error) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| corrupt(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                corrupt(format!(
                    "bad {what} token {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Write a 16-bit binary PGM from raw `u16` samples (big-endian payload).
pub fn write_pgm16(path: &Path, width: u32, height: u32, samples: &[u16]) -> Result<()> {
    if samples.len() != width as usize * height as usize {
        return Err(Error::DimensionMismatch {
            context: "pgm16 write",
            expected: width as usize * height as usize,
            got: samples.len(),
        });
    }
    let mut buf = Vec::with_capacity(samples.len() * 2 + 32);
    write!(buf, "P5\n{width} {height}\n65535\n").expect("write to vec");
    for s in samples {
        buf.extend_from_slice(&s.to_be_bytes());
    }
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

/// Write an 8-bit binary PGM, linearly rescaling `[min, max]` to `[0, 255]`.
/// Meant for eyeballing intermediate rasters, not for round-tripping values.
pub fn write_pgm_rescaled(path: &Path, img: &GrayImage) -> Result<()> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p in img.pixels() {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let span = hi - lo;
    let scale = if span > 0.0 { 255.0 / span } else { 0.0 };
    let mut buf = Vec::with_capacity(img.pixels().len() + 32);
    write!(buf, "P5\n{} {}\n255\n", img.width(), img.height()).expect("write to vec");
    buf.extend(
        img.pixels()
            .iter()
            .map(|&p| ((p - lo) * scale).round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}
