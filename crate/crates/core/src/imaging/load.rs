//! Image loading with format dispatch on the file's magic bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{pgm, GrayImage};

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Load a grayscale image from disk. PGM (P2/P5) is decoded in-crate; PNG is
/// delegated to the `image` crate and restricted to 8/16-bit grayscale.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 2 {
        return Err(Error::CorruptImage {
            path: path.to_path_buf(),
            detail: format!("file is only {} bytes long", bytes.len()),
        });
    }
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        return pgm::parse_pgm(&bytes, path);
    }
    if bytes.starts_with(&PNG_MAGIC) {
        return load_png(&bytes, path);
    }
    Err(Error::UnsupportedFormat {
        path: path.to_path_buf(),
        detail: "magic bytes match neither PGM (P2/P5) nor PNG".into(),
    })
}

fn load_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(
        |e| Error::CorruptImage {
            path: path.to_path_buf(),
            detail: format!("PNG decode failed: {e}"),
        },
    )?;
    let (w, h) = (decoded.width(), decoded.height());
    match decoded {
        image::DynamicImage::ImageLuma8(img) => {
            GrayImage::new(w, h, img.into_raw().into_iter().map(f64::from).collect())
        }
        image::DynamicImage::ImageLuma16(img) => {
            GrayImage::new(w, h, img.into_raw().into_iter().map(f64::from).collect())
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!(
                "PNG color type {:?} is not 8/16-bit grayscale",
                other.color()
            ),
        }),
    }
}
