//! PCA eigenspace dictionaries learned from pooled training patches.
//!
//! The dictionary's atoms are the leading eigenvectors of the patch
//! covariance. Two routes produce them: direct eigendecomposition of the
//! `d x d` covariance, or — when there are fewer patches than pixels per
//! patch — the Gram-matrix route, which decomposes the `n x n` inner-product
//! matrix `Xc^T Xc` and maps its eigenvectors back through `Xc`. Both give
//! the same atoms up to the shared sign convention.

mod io;
mod jacobi;

pub use io::{export_dictionary_csv, load_dictionary, save_dictionary};
pub use jacobi::{fix_column_signs, sym_eig, SymEigen};

use crate::error::{Error, Result};
use crate::imaging::PatchMatrix;
use crate::linalg::{dot, Mat};

/// Mean across columns of each row: the average patch.
pub fn column_mean(m: &Mat) -> Result<Vec<f64>> {
    if m.cols() == 0 {
        return Err(Error::InvalidArgument(
            "mean of zero columns is undefined".into(),
        ));
    }
    let mut mean = vec![0.0; m.rows()];
    for j in 0..m.cols() {
        crate::linalg::axpy(1.0, m.col(j), &mut mean);
    }
    let inv = 1.0 / m.cols() as f64;
    for v in &mut mean {
        *v *= inv;
    }
    Ok(mean)
}

/// Sample covariance of the columns: `C = sum (x - mu)(x - mu)^T / (n - 1)`.
pub fn covariance(m: &Mat) -> Result<Mat> {
    let n = m.cols();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let d = m.rows();
    let mean = column_mean(m)?;
    let mut c = Mat::zeros(d, d);
    let mut centered = vec![0.0; d];
    for j in 0..n {
        for (dst, (x, mu)) in centered.iter_mut().zip(m.col(j).iter().zip(&mean)) {
            *dst = x - mu;
        }
        // Accumulate the upper triangle only; mirror afterwards.
        for col in 0..d {
            let xc = centered[col];
            if xc != 0.0 {
                let dst = c.col_mut(col);
                for row in 0..=col {
                    dst[row] += centered[row] * xc;
                }
            }
        }
    }
    let inv = 1.0 / (n - 1) as f64;
    for col in 0..d {
        for row in 0..=col {
            let v = c.get(row, col) * inv;
            c.set(row, col, v);
            c.set(col, row, v);
        }
    }
    Ok(c)
}

/// Which eigendecomposition route the builder takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Gram route when `n_patches < patch_dim`, covariance otherwise.
    Auto,
    /// Always decompose the `d x d` covariance.
    Covariance,
    /// Always decompose the `n x n` Gram matrix of centered patches.
    Gram,
}

/// Orthonormal patch dictionary: the mean patch plus the top `k` principal
/// directions and their covariance eigenvalues.
#[derive(Debug, Clone)]
pub struct Dictionary {
    patch_size: u32,
    mean: Vec<f64>,
    atoms: Mat,
    eigenvalues: Vec<f64>,
}

impl Dictionary {
    /// Assemble and validate: shape consistency, descending non-negative
    /// eigenvalues (tiny negatives are clamped to zero), orthonormal atoms.
    pub fn new(
        patch_size: u32,
        mean: Vec<f64>,
        atoms: Mat,
        mut eigenvalues: Vec<f64>,
    ) -> Result<Dictionary> {
        let d = (patch_size as usize) * (patch_size as usize);
        if mean.len() != d || atoms.rows() != d {
            return Err(Error::DimensionMismatch {
                context: "dictionary patch dimension",
                expected: d,
                got: if mean.len() != d { mean.len() } else { atoms.rows() },
            });
        }
        if eigenvalues.len() != atoms.cols() {
            return Err(Error::DimensionMismatch {
                context: "dictionary eigenvalue count",
                expected: atoms.cols(),
                got: eigenvalues.len(),
            });
        }
        if atoms.cols() == 0 || atoms.cols() > d {
            return Err(Error::InvalidArgument(format!(
                "dictionary must have between 1 and {d} atoms, got {}",
                atoms.cols()
            )));
        }
        for w in eigenvalues.windows(2) {
            if w[1] > w[0] + 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalues not descending: {} before {}",
                    w[0], w[1]
                )));
            }
        }
        for v in &mut eigenvalues {
            if *v < 0.0 {
                if *v < -1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "negative eigenvalue {v}"
                    )));
                }
                *v = 0.0;
            }
        }
        for i in 0..atoms.cols() {
            for j in 0..=i {
                let d = dot(atoms.col(i), atoms.col(j));
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-8 {
                    return Err(Error::InvalidArgument(format!(
                        "atoms not orthonormal: <a{i}, a{j}> = {d}"
                    )));
                }
            }
        }
        Ok(Dictionary {
            patch_size,
            mean,
            atoms,
            eigenvalues,
        })
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn patch_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.atoms.cols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn atoms(&self) -> &Mat {
        &self.atoms
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Keep only the first `k` atoms. Truncation commutes with building:
    /// building with `k` directly gives the same dictionary.
    pub fn truncate(&self, k: usize) -> Result<Dictionary> {
        if k == 0 || k > self.n_components() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {}-atom dictionary to k={k}",
                self.n_components()
            )));
        }
        let mut atoms = Mat::zeros(self.patch_dim(), k);
        for j in 0..k {
            atoms.col_mut(j).copy_from_slice(self.atoms.col(j));
        }
        Ok(Dictionary {
            patch_size: self.patch_size,
            mean: self.mean.clone(),
            atoms,
            eigenvalues: self.eigenvalues[..k].to_vec(),
        })
    }
}

/// Learn a `k`-atom dictionary from pooled training patches.
pub fn build_dictionary(patches: &PatchMatrix, k: usize) -> Result<Dictionary> {
    build_dictionary_via(patches, k, Route::Auto)
}

/// As [`build_dictionary`], with explicit route control for testing and
/// benchmarking. `Auto` picks Gram when `n_patches < patch_dim`.
pub fn build_dictionary_via(patches: &PatchMatrix, k: usize, route: Route) -> Result<Dictionary> {
    let d = patches.patch_dim();
    let n = patches.n_patches();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "dictionary needs at least 2 training patches, got {n}"
        )));
    }
    let k_max = d.min(n);
    if k == 0 || k > k_max {
        return Err(Error::InvalidArgument(format!(
            "components k={k} outside 1..={k_max} (patch_dim {d}, n_patches {n})"
        )));
    }
    let mean = column_mean(patches.data())?;
    let use_gram = match route {
        Route::Auto => n < d,
        Route::Covariance => false,
        Route::Gram => true,
    };

    let (atoms, eigenvalues) = if use_gram {
        gram_route(patches.data(), &mean, k)?
    } else {
        let c = covariance(patches.data())?;
        let eig = sym_eig(&c)?;
        let mut atoms = Mat::zeros(d, k);
        for j in 0..k {
            atoms.col_mut(j).copy_from_slice(eig.eigenvectors.col(j));
        }
        (atoms, eig.eigenvalues[..k].to_vec())
    };
    Dictionary::new(patches.patch_size(), mean, atoms, eigenvalues)
}

/// Eigendecompose `K = Xc^T Xc` (n x n) and lift: if `K alpha = nu alpha`,
/// then `v = Xc alpha / sqrt(nu)` is a unit eigenvector of `Xc Xc^T` and the
/// covariance eigenvalue is `nu / (n - 1)`.
fn gram_route(m: &Mat, mean: &[f64], k: usize) -> Result<(Mat, Vec<f64>)> {
    let d = m.rows();
    let n = m.cols();
    let mut xc = Mat::zeros(d, n);
    for j in 0..n {
        let col = xc.col_mut(j);
        for (dst, (x, mu)) in col.iter_mut().zip(m.col(j).iter().zip(mean)) {
            *dst = x - mu;
        }
    }
    let mut gram = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let g = dot(xc.col(i), xc.col(j));
            gram.set(i, j, g);
            gram.set(j, i, g);
        }
    }
    let eig = sym_eig(&gram)?;
    let lead = eig.eigenvalues[0].max(0.0);
    let mut atoms = Mat::zeros(d, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for j in 0..k {
        let nu = eig.eigenvalues[j];
        if nu <= lead * 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "components k={k} exceeds the effective rank of the centered \
                 training patches (gram eigenvalue {j} is {nu:.3e})"
            )));
        }
        let alpha = eig.eigenvectors.col(j);
        let lifted = xc.matvec(alpha)?;
        let inv = 1.0 / nu.sqrt();
        let col = atoms.col_mut(j);
        for (dst, x) in col.iter_mut().zip(&lifted) {
            *dst = x * inv;
        }
        eigenvalues.push(nu / (n - 1) as f64);
    }
    // The n-space sign fix does not survive the lift; re-impose it in d-space
    // so both routes emit identical atoms.
    fix_column_signs(&mut atoms);
    Ok((atoms, eigenvalues))
}

/// Coefficients of a patch in the dictionary's eigenbasis: `A^T (y - mean)`.
pub fn project(dict: &Dictionary, patch: &[f64]) -> Result<Vec<f64>> {
    if patch.len() != dict.patch_dim() {
        return Err(Error::DimensionMismatch {
            context: "projection",
            expected: dict.patch_dim(),
            got: patch.len(),
        });
    }
    let centered: Vec<f64> = patch.iter().zip(&dict.mean).map(|(y, mu)| y - mu).collect();
    dict.atoms.tr_matvec(&centered)
}

/// Map coefficients back to pixel space: `mean + A c`.
pub fn reconstruct(dict: &Dictionary, code: &[f64]) -> Result<Vec<f64>> {
    let mut out = dict.atoms.matvec(code)?;
    crate::linalg::axpy(1.0, &dict.mean, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{tile, GrayImage};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn patch_matrix(cols: &[Vec<f64>], patch_size: u32) -> PatchMatrix {
        // Route through tile() by building a strip image, one patch per tile row.
        let p = patch_size;
        let mut pixels = Vec::new();
        for py in 0..p {
            for col in cols {
                for px in 0..p {
                    pixels.push(col[(py * p + px) as usize]);
                }
            }
        }
        // One row of tiles: width = n*p, height = p.
        let img = GrayImage::new(p * cols.len() as u32, p, pixels).unwrap();
        tile(&img, p).unwrap()
    }

    #[test]
    fn mean_and_covariance_match_hand_values() {
        let m = Mat::from_cols(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(column_mean(&m).unwrap(), vec![2.0, 3.0]);

        // Four unit vectors at the axes: covariance (2/3) I.
        let m = Mat::from_cols(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let c = covariance(&m).unwrap();
        let w = 2.0 / 3.0;
        assert!((c.get(0, 0) - w).abs() < 1e-15);
        assert!((c.get(1, 1) - w).abs() < 1e-15);
        assert!(c.get(0, 1).abs() < 1e-15);
        assert!(covariance(&Mat::zeros(2, 1)).is_err());
    }

    #[test]
    fn k_range_is_validated() {
        let pm = patch_matrix(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]], 2);
        assert!(build_dictionary(&pm, 0).is_err());
        // min(patch_dim=4, n=2) = 2, so 3 is out of range outright...
        assert!(build_dictionary(&pm, 3).is_err());
        // ...and 2 exceeds the centered rank (two patches span one direction).
        assert!(build_dictionary(&pm, 2).is_err());
        assert!(build_dictionary(&pm, 1).is_ok());
    }

    #[test]
    fn truncation_commutes_with_building() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let cols: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..9).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pm = patch_matrix(&cols, 3);
        let full = build_dictionary(&pm, 6).unwrap();
        let direct = build_dictionary(&pm, 2).unwrap();
        let cut = full.truncate(2).unwrap();
        assert_eq!(cut.atoms().data(), direct.atoms().data());
        assert_eq!(cut.eigenvalues(), direct.eigenvalues());
        assert!(full.truncate(0).is_err());
        assert!(full.truncate(7).is_err());
    }

    #[test]
    fn projection_of_mean_is_zero_and_reconstruct_inverts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pm = patch_matrix(&cols, 2);
        let dict = build_dictionary(&pm, 4).unwrap();
        let code = project(&dict, dict.mean()).unwrap();
        assert!(code.iter().all(|c| c.abs() < 1e-12));

        // Full-rank dictionary: project/reconstruct round-trips any patch.
        let y: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let back = reconstruct(&dict, &project(&dict, &y).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_rank_overflow_is_reported() {
        // 3 patches of dim 4 centered have rank <= 2; k=3 must fail via Gram.
        let pm = patch_matrix(
            &[
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            2,
        );
        let err = build_dictionary_via(&pm, 3, Route::Gram).unwrap_err();
        assert!(err.to_string().contains("rank"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn routes_agree_when_both_apply(seed in any::<u64>(), n in 4usize..10) {
            // patch_dim 9 > n: Gram is the auto route, covariance the check.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..9).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let pm = patch_matrix(&cols, 3);
            let k = (n - 1).min(3);
            let via_gram = build_dictionary_via(&pm, k, Route::Gram)?;
            let via_cov = build_dictionary_via(&pm, k, Route::Covariance)?;
            for (a, b) in via_gram.eigenvalues().iter().zip(via_cov.eigenvalues()) {
                prop_assert!((a - b).abs() < 1e-8, "eigenvalue {a} vs {b}");
            }
            for (a, b) in via_gram.atoms().data().iter().zip(via_cov.atoms().data()) {
                prop_assert!((a - b).abs() < 1e-8, "atom coef {a} vs {b}");
            }
        }

        #[test]
        fn atoms_are_orthonormal_and_eigenvalues_sorted(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cols: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..16).map(|_| rng.random::<f64>()).collect())
                .collect();
            let pm = patch_matrix(&cols, 4);
            let dict = build_dictionary(&pm, 5).unwrap();
            for w in dict.eigenvalues().windows(2) {
                prop_assert!(w[0] >= w[1] && w[1] >= 0.0);
            }
            for i in 0..5 {
                for j in 0..=i {
                    let d = dot(dict.atoms().col(i), dict.atoms().col(j));
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((d - want).abs() < 1e-9);
                }
            }
        }
    }
}
