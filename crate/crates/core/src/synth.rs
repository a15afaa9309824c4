//! Synthetic texture corpus generator.
//!
//! Every image is a shared background process — a handful of low-frequency
//! sinusoids plus pixel noise — and each class adds its own localized
//! signature: high-variance square blobs dropped on a tile grid, differing
//! between classes in amplitude, count, or allowed region. The background
//! is learnable by a low-rank patch eigenspace while blob tiles are not, so
//! per-patch reconstruction errors carry the class signal.
//!
//! Determinism: image `(c, i)` is drawn from a generator seeded by the run
//! seed on stream `(c << 32) | i`, so any image can be regenerated alone and
//! re-runs are bit-identical.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabeledDataset, LabeledSample};
use crate::error::{Error, Result};
use crate::imaging::write_pgm16;

/// Where a class's blobs may land on the tile grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Any,
    /// Top-left quadrant of the tile grid.
    TopLeft,
    /// Bottom-right quadrant of the tile grid.
    BottomRight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    /// Directory name; also the class label downstream.
    pub name: String,
    /// Number of distinct tiles that receive a blob.
    pub blob_tiles: usize,
    /// Standard deviation of the extra per-pixel noise inside a blob tile.
    pub blob_amp: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub image_size: u32,
    /// Blob alignment grid pitch; must divide `image_size`.
    pub tile: u32,
    pub n_per_class: usize,
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
}

/// Two classes on a shared background, separated only by blob energy: weak
/// blobs versus strong blobs, anywhere on the grid. `beta` sorts second and
/// is therefore the positive class by default.
pub fn binary_preset(n_per_class: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        image_size: 64,
        tile: 8,
        n_per_class,
        classes: vec![
            ClassSpec {
                name: "alpha".into(),
                blob_tiles: 2,
                blob_amp: 0.35,
                region: Region::Any,
            },
            ClassSpec {
                name: "beta".into(),
                blob_tiles: 2,
                blob_amp: 2.2,
                region: Region::Any,
            },
        ],
        seed,
    }
}

/// Four classes: clean background, blobs confined to opposite quadrants,
/// and stronger blobs anywhere.
pub fn multiclass_preset(n_per_class: usize, seed: u64) -> SynthSpec {
    let class = |name: &str, blob_tiles, blob_amp, region| ClassSpec {
        name: name.into(),
        blob_tiles,
        blob_amp,
        region,
    };
    SynthSpec {
        image_size: 64,
        tile: 8,
        n_per_class,
        classes: vec![
            class("c0_plain", 0, 0.0, Region::Any),
            class("c1_topleft", 2, 1.6, Region::TopLeft),
            class("c2_bottomright", 2, 1.6, Region::BottomRight),
            class("c3_strong", 3, 3.2, Region::Any),
        ],
        seed,
    }
}

fn region_tiles(region: Region, grid: u32) -> Vec<(u32, u32)> {
    let half = grid / 2;
    let mut tiles = Vec::new();
    for r in 0..grid {
        for c in 0..grid {
            let keep = match region {
                Region::Any => true,
                Region::TopLeft => r < half && c < half,
                Region::BottomRight => r >= half && c >= half,
            };
            if keep {
                tiles.push((r, c));
            }
        }
    }
    tiles
}

/// Standard normal draw via the Box-Muller transform.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "need at least one image per class".into(),
        ));
    }
    if spec.tile == 0 || spec.image_size == 0 || spec.image_size % spec.tile != 0 {
        return Err(Error::InvalidArgument(format!(
            "tile {} must divide image size {}",
            spec.tile, spec.image_size
        )));
    }
    if spec.classes.is_empty() {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    let grid = spec.image_size / spec.tile;
    let mut names = std::collections::HashSet::new();
    for class in &spec.classes {
        if class.name.is_empty()
            || !class
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::InvalidArgument(format!(
                "class name `{}` must be non-empty alphanumeric/underscore/dash",
                class.name
            )));
        }
        if !names.insert(class.name.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate class name `{}`",
                class.name
            )));
        }
        let capacity = region_tiles(class.region, grid).len();
        if class.blob_tiles > capacity {
            return Err(Error::InvalidArgument(format!(
                "class `{}` wants {} blob tiles but its region only holds {capacity}",
                class.name, class.blob_tiles
            )));
        }
        if !class.blob_amp.is_finite() || class.blob_amp < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "class `{}` blob amplitude must be finite and non-negative",
                class.name
            )));
        }
    }
    Ok(())
}

/// Render one image of `class_idx` as raw f64 pixels, row-major.
fn render(spec: &SynthSpec, class_idx: usize, img_idx: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(((class_idx as u64) << 32) | img_idx as u64);
    let size = spec.image_size as usize;
    let n = size * size;

    // Background: a few random low-frequency plane waves with an overall
    // gain, shared in form across classes.
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let fx = 0.3 + 1.1 * rng.random::<f64>();
            let fy = 0.3 + 1.1 * rng.random::<f64>();
            let phase = TAU * rng.random::<f64>();
            let amp = 0.5 + 0.5 * rng.random::<f64>();
            (fx, fy, phase, amp)
        })
        .collect();
    let gain = 0.75 + 0.5 * rng.random::<f64>();
    let mut pixels = vec![0.0f64; n];
    for y in 0..size {
        for x in 0..size {
            let mut v = 0.0;
            for &(fx, fy, phase, amp) in &waves {
                v += amp
                    * (TAU * (fx * x as f64 + fy * y as f64) / spec.image_size as f64 + phase)
                        .sin();
            }
            pixels[y * size + x] = gain * v;
        }
    }
    for p in pixels.iter_mut() {
        *p += 0.05 * normal(&mut rng);
    }

    // Class signature: extra noise energy confined to whole tiles.
    let class = &spec.classes[class_idx];
    if class.blob_tiles > 0 && class.blob_amp > 0.0 {
        let grid = spec.image_size / spec.tile;
        let allowed = region_tiles(class.region, grid);
        let chosen = rand::seq::index::sample(&mut rng, allowed.len(), class.blob_tiles);
        let t = spec.tile as usize;
        for pick in chosen.iter() {
            let (tr, tc) = allowed[pick];
            for dy in 0..t {
                for dx in 0..t {
                    let y = tr as usize * t + dy;
                    let x = tc as usize * t + dx;
                    pixels[y * size + x] += class.blob_amp * normal(&mut rng);
                }
            }
        }
    }
    pixels
}

/// Map raw pixels onto the full 16-bit range. Per-image affine rescaling is
/// harmless downstream because standardization is affine-invariant.
fn quantize(pixels: &[f64]) -> Vec<u16> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &p in pixels {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if !(hi > lo) {
        return vec![0; pixels.len()];
    }
    pixels
        .iter()
        .map(|&p| (((p - lo) / (hi - lo)) * 65535.0).round() as u16)
        .collect()
}

/// Write the corpus under `root` (one directory per class, 16-bit PGM
/// files) and return its listing. Re-running with the same spec writes
/// bit-identical files.
pub fn gen_synthetic(spec: &SynthSpec, root: &Path) -> Result<LabeledDataset> {
    validate(spec)?;
    let mut samples = Vec::new();
    let mut class_names: Vec<String> = spec.classes.iter().map(|c| c.name.clone()).collect();
    class_names.sort();
    for (class_idx, class) in spec.classes.iter().enumerate() {
        let dir = root.join(&class.name);
        std::fs::create_dir_all(&dir).map_err(|source| Error::FileWrite {
            path: dir.clone(),
            source,
        })?;
        let label = class_names
            .iter()
            .position(|n| n == &class.name)
            .expect("name drawn from the same list");
        for img_idx in 0..spec.n_per_class {
            let pixels = render(spec, class_idx, img_idx);
            let file = format!("img_{img_idx:04}.pgm");
            let path = dir.join(&file);
            write_pgm16(&path, spec.image_size, spec.image_size, &quantize(&pixels))?;
            samples.push(LabeledSample {
                id: format!("{}/{}", class.name, file),
                path,
                class: label,
            });
        }
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(LabeledDataset {
        samples,
        class_names,
    })
}
