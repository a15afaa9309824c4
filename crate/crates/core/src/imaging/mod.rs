//! Grayscale image container and the raster operations the pipeline needs:
//! per-image standardization, bilinear resizing, and non-overlapping tiling.

mod load;
mod pgm;

pub use load::load_image;
pub use pgm::{parse_pgm, write_pgm_rescaled, write_pgm16};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Grayscale image with `f64` samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Validates dimensions, pixel count, and finiteness once; everything
    /// downstream can then rely on a well-formed raster.
    pub fn new(width: u32, height: u32, pixels: Vec<f64>) -> Result<GrayImage> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "image pixel buffer",
                expected,
                got: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite pixel value {} at index {bad}",
                pixels[bad]
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Output of [`standardize`]: the transformed image plus a flag marking
/// inputs whose variance was too small to divide by.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub image: GrayImage,
    pub degenerate: bool,
}

/// Zero-mean, unit-variance rescaling of the whole image: `(I - mean) / sd`,
/// with the population standard deviation (divide by pixel count, not n-1).
///
/// A (near-)constant image has no scale to divide by; it comes back as all
/// zeros with `degenerate` set rather than as NaNs or an error.
pub fn standardize(img: &GrayImage) -> Standardized {
    let n = img.pixels.len() as f64;
    let mean = img.pixels.iter().sum::<f64>() / n;
    let var = img.pixels.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * (1.0 + mean.abs()) {
        let zeros = vec![0.0; img.pixels.len()];
        return Standardized {
            image: GrayImage {
                width: img.width,
                height: img.height,
                pixels: zeros,
            },
            degenerate: true,
        };
    }
    let pixels = img.pixels.iter().map(|p| (p - mean) / sd).collect();
    Standardized {
        image: GrayImage {
            width: img.width,
            height: img.height,
            pixels,
        },
        degenerate: false,
    }
}

/// Bilinear resize with pixel-center alignment: destination pixel `i` samples
/// the source at `(i + 0.5) * src/dst - 0.5`, and coordinates off the edge
/// clamp to the border row/column. Resizing to the same size is the identity.
pub fn resize_bilinear(img: &GrayImage, width: u32, height: u32) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut pixels = Vec::with_capacity(width as usize * height as usize);
    for dy in 0..height {
        let y = (dy as f64 + 0.5) * sy - 0.5;
        let y0f = y.floor();
        let ty = y - y0f;
        let y0 = clamp_index(y0f, img.height);
        let y1 = clamp_index(y0f + 1.0, img.height);
        for dx in 0..width {
            let x = (dx as f64 + 0.5) * sx - 0.5;
            let x0f = x.floor();
            let tx = x - x0f;
            let x0 = clamp_index(x0f, img.width);
            let x1 = clamp_index(x0f + 1.0, img.width);
            let top = img.get(x0, y0) * (1.0 - tx) + img.get(x1, y0) * tx;
            let bot = img.get(x0, y1) * (1.0 - tx) + img.get(x1, y1) * tx;
            pixels.push(top * (1.0 - ty) + bot * ty);
        }
    }
    GrayImage::new(width, height, pixels)
}

#[inline]
fn clamp_index(v: f64, size: u32) -> u32 {
    v.max(0.0).min((size - 1) as f64) as u32
}

/// Non-overlapping square patches cut from one image (or several images
/// stacked), stored as the columns of a `patch_dim x n_patches` matrix.
#[derive(Debug, Clone)]
pub struct PatchMatrix {
    patch_size: u32,
    /// (rows, cols) of the patch grid; `rows * cols == n_patches`.
    grid: (usize, usize),
    data: Mat,
}

impl PatchMatrix {
    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn patch_dim(&self) -> usize {
        (self.patch_size * self.patch_size) as usize
    }

    pub fn n_patches(&self) -> usize {
        self.data.cols()
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn data(&self) -> &Mat {
        &self.data
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        self.data.col(i)
    }

    /// Stack the patches of several same-shape tilings into one pool, in
    /// input order. The pooled grid grows along the row axis.
    pub fn stack(parts: &[PatchMatrix]) -> Result<PatchMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero patch matrices".into()))?;
        let mut columns = Vec::with_capacity(parts.iter().map(|p| p.n_patches()).sum());
        let mut rows = 0usize;
        for part in parts {
            if part.patch_size != first.patch_size || part.grid.1 != first.grid.1 {
                return Err(Error::DimensionMismatch {
                    context: "patch matrix stacking",
                    expected: first.patch_dim(),
                    got: part.patch_dim(),
                });
            }
            rows += part.grid.0;
            for i in 0..part.n_patches() {
                columns.push(part.patch(i).to_vec());
            }
        }
        Ok(PatchMatrix {
            patch_size: first.patch_size,
            grid: (rows, first.grid.1),
            data: Mat::from_cols(&columns)?,
        })
    }
}

/// Cut `img` into non-overlapping `patch x patch` tiles, traversed row-major
/// over the tile grid; each tile is vectorized row-major into one column.
/// The patch size must divide both image dimensions exactly.
pub fn tile(img: &GrayImage, patch: u32) -> Result<PatchMatrix> {
    if patch == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    if img.width % patch != 0 {
        return Err(Error::TileMismatch {
            axis: "width",
            size: img.width,
            patch,
        });
    }
    if img.height % patch != 0 {
        return Err(Error::TileMismatch {
            axis: "height",
            size: img.height,
            patch,
        });
    }
    let grid_rows = (img.height / patch) as usize;
    let grid_cols = (img.width / patch) as usize;
    let dim = (patch * patch) as usize;
    let mut data = Mat::zeros(dim, grid_rows * grid_cols);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let col = data.col_mut(gr * grid_cols + gc);
            let mut k = 0;
            for py in 0..patch {
                let y = gr as u32 * patch + py;
                for px in 0..patch {
                    col[k] = img.get(gc as u32 * patch + px, y);
                    k += 1;
                }
            }
        }
    }
    Ok(PatchMatrix {
        patch_size: patch,
        grid: (grid_rows, grid_cols),
        data,
    })
}

/// Reassemble the image a [`tile`] call came from. Exact inverse: every pixel
/// is copied, never interpolated.
pub fn untile(patches: &PatchMatrix) -> Result<GrayImage> {
    let p = patches.patch_size;
    let (grid_rows, grid_cols) = patches.grid;
    let width = grid_cols as u32 * p;
    let height = grid_rows as u32 * p;
    let mut pixels = vec![0.0; width as usize * height as usize];
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let col = patches.patch(gr * grid_cols + gc);
            for py in 0..p {
                for px in 0..p {
                    let x = gc as u32 * p + px;
                    let y = gr as u32 * p + py;
                    pixels[y as usize * width as usize + x as usize] =
                        col[(py * p + px) as usize];
                }
            }
        }
    }
    GrayImage::new(width, height, pixels)
}
