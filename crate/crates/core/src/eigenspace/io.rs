//! Dictionary persistence: a compact little-endian binary format for exact
//! round-trips, plus a CSV export for inspection.
//!
//! Binary layout: magic `EPDC`, version u32, patch_size u32, n_components
//! u32, patch_dim u32, then f64 arrays for the mean (patch_dim), the
//! eigenvalues (n_components), and the atoms column-major
//! (patch_dim * n_components). Every scalar is little-endian.

use std::io::Write as _;
use std::path::Path;

use crate::eigenspace::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::Mat;

const MAGIC: &[u8; 4] = b"EPDC";
const VERSION: u32 = 1;

pub fn save_dictionary(dict: &Dictionary, path: &Path) -> Result<()> {
    let d = dict.patch_dim();
    let k = dict.n_components();
    let mut buf = Vec::with_capacity(20 + 8 * (d + k + d * k));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&dict.patch_size().to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for v in dict.mean() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in dict.eigenvalues() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in dict.atoms().data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let bytes = std::fs::read(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |detail: &str| {
        Error::Data(format!(
            "dictionary file `{}` is invalid: {detail}",
            path.display()
        ))
    };
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4).ok_or_else(|| bad("missing magic"))? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32().ok_or_else(|| bad("missing version"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let patch_size = r.u32().ok_or_else(|| bad("missing patch size"))?;
    let k = r.u32().ok_or_else(|| bad("missing component count"))? as usize;
    let d = r.u32().ok_or_else(|| bad("missing patch dim"))? as usize;
    if d != (patch_size as usize).pow(2) {
        return Err(bad(&format!(
            "patch_dim {d} does not match patch_size {patch_size}"
        )));
    }
    let mean = r.f64s(d).ok_or_else(|| bad("truncated mean"))?;
    let eigenvalues = r.f64s(k).ok_or_else(|| bad("truncated eigenvalues"))?;
    let atom_data = r.f64s(d * k).ok_or_else(|| bad("truncated atoms"))?;
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let atoms = Mat::from_col_major(d, k, atom_data)?;
    Dictionary::new(patch_size, mean, atoms, eigenvalues)
        .map_err(|e| bad(&format!("inconsistent contents: {e}")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let slice = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Some(
            raw.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        )
    }
}

/// One row per atom: index, eigenvalue, then the atom's coefficients.
pub fn export_dictionary_csv(dict: &Dictionary, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write!(buf, "atom,eigenvalue").expect("write to vec");
    for i in 0..dict.patch_dim() {
        write!(buf, ",c{i}").expect("write to vec");
    }
    buf.push(b'\n');
    for j in 0..dict.n_components() {
        write!(buf, "{},{}", j, dict.eigenvalues()[j]).expect("write to vec");
        for v in dict.atoms().col(j) {
            write!(buf, ",{v}").expect("write to vec");
        }
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenspace::build_dictionary;
    use crate::imaging::{tile, GrayImage};
    use rand::{Rng, SeedableRng};

    fn sample_dictionary() -> Dictionary {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let px: Vec<f64> = (0..(6 * 4)).map(|_| rng.random()).collect();
        let img = GrayImage::new(6, 4, px).unwrap();
        build_dictionary(&tile(&img, 2).unwrap(), 3).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dict = sample_dictionary();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.bin");
        save_dictionary(&dict, &path).unwrap();
        let back = load_dictionary(&path).unwrap();
        let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.mean()), bits(dict.mean()));
        assert_eq!(bits(back.eigenvalues()), bits(dict.eigenvalues()));
        assert_eq!(bits(back.atoms().data()), bits(dict.atoms().data()));
        assert_eq!(back.patch_size(), dict.patch_size());
    }

    #[test]
    fn truncated_file_is_a_data_error() {
        let dict = sample_dictionary();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.bin");
        save_dictionary(&dict, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 7);
        let cut = dir.path().join("cut.bin");
        std::fs::write(&cut, bytes).unwrap();
        let err = load_dictionary(&cut).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn corrupted_atoms_fail_validation() {
        let dict = sample_dictionary();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.bin");
        save_dictionary(&dict, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Scribble over the last atom coefficient.
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&123.456f64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_dictionary(&path).unwrap_err(), Error::Data(_)));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_dictionary(&path).unwrap_err(), Error::Data(_)));
    }

    #[test]
    fn csv_export_has_one_row_per_atom() {
        let dict = sample_dictionary();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.csv");
        export_dictionary_csv(&dict, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + dict.n_components());
        assert!(lines[0].starts_with("atom,eigenvalue,c0,"));
        let fields = lines[1].split(',').count();
        assert_eq!(fields, 2 + dict.patch_dim());
    }
}
