//! Cyclic Jacobi eigendecomposition for symmetric matrices.
//!
//! Sweeps all upper-triangle pivots (p, q) in row order and applies Givens
//! rotations that zero a_pq, accumulating the eigenvector matrix alongside.
//! Rotation angles follow the stable half-angle formulation: with
//! theta = (a_qq - a_pp) / (2 a_pq), the tangent is
//! t = sgn(theta) / (|theta| + sqrt(theta^2 + 1)), and c = 1/sqrt(1 + t^2),
//! s = t c. The diagonal moves by a_pp -= t a_pq, a_qq += t a_pq.
//!
//! Convergence: the off-diagonal Frobenius norm must fall below
//! 1e-12 * ||A||_F (of the input) within 100 sweeps; otherwise the solver
//! reports non-convergence with its last diagonal as the iterate.

use crate::error::{Error, Result};
use crate::linalg::Mat;

const MAX_SWEEPS: usize = 100;
const REL_TOL: f64 = 1e-12;

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// (columns), signs fixed so each vector's largest-magnitude coordinate —
/// first such index on ties — is positive.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat,
}

pub fn sym_eig(c: &Mat) -> Result<SymEigen> {
    if c.rows() != c.cols() {
        return Err(Error::DimensionMismatch {
            context: "symmetric eigendecomposition",
            expected: c.rows(),
            got: c.cols(),
        });
    }
    let n = c.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let asymmetry = c.max_asymmetry();
    let scale = c.frob_norm();
    if asymmetry > 1e-12 * (1.0 + scale) {
        return Err(Error::NotSymmetric { asymmetry });
    }

    // Flat column-major working copies; a[i + j*n] = A_ij.
    let mut a: Vec<f64> = c.data().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i + i * n] = 1.0;
    }

    let tol = REL_TOL * scale;
    let mut sweeps = 0;
    while off_frob(&a, n) > tol {
        if sweeps == MAX_SWEEPS {
            let diag: Vec<f64> = (0..n).map(|i| a[i + i * n]).collect();
            return Err(Error::NoConvergence {
                context: "jacobi eigensolver",
                iterations: MAX_SWEEPS,
                gap: off_frob(&a, n),
                last_iterate: diag,
            });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
        sweeps += 1;
    }

    // Sort descending, permute the vectors to match, then fix signs.
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[i + i * n]).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.col_mut(dst).copy_from_slice(&v[src * n..(src + 1) * n]);
    }
    fix_column_signs(&mut vecs);
    Ok(SymEigen {
        eigenvalues,
        eigenvectors: vecs,
    })
}

/// Flip each column so its largest-magnitude entry (first index on ties) is
/// positive. Makes eigenvector signs deterministic across solve routes.
pub fn fix_column_signs(m: &mut Mat) {
    for j in 0..m.cols() {
        let col = m.col_mut(j);
        let mut best = 0usize;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// One Givens rotation zeroing a_pq, applied symmetrically, plus the
/// eigenvector update. Column-major layout keeps the bulk updates contiguous:
/// rotate columns p and q, then mirror them onto rows p and q.
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p + q * n];
    if apq == 0.0 {
        return;
    }
    let app = a[p + p * n];
    let aqq = a[q + q * n];
    let theta = (aqq - app) / (2.0 * apq);
    // For very large |theta|, theta^2 would overflow; t ~ 1/(2 theta) there.
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // B = A G: new col p = c*colp - s*colq, new col q = s*colp + c*colq.
    for i in 0..n {
        let g = a[i + p * n];
        let h = a[i + q * n];
        a[i + p * n] = c * g - s * h;
        a[i + q * n] = s * g + c * h;
    }
    // Rows p and q of G^T B follow from symmetry; the 2x2 pivot block is
    // known in closed form.
    for j in 0..n {
        a[p + j * n] = a[j + p * n];
        a[q + j * n] = a[j + q * n];
    }
    let new_pp = app - t * apq;
    let new_qq = aqq + t * apq;
    a[p + p * n] = new_pp;
    a[q + q * n] = new_qq;
    a[p + q * n] = 0.0;
    a[q + p * n] = 0.0;

    // V = V G.
    for i in 0..n {
        let g = v[i + p * n];
        let h = v[i + q * n];
        v[i + p * n] = c * g - s * h;
        v[i + q * n] = s * g + c * h;
    }
}

fn off_frob(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..j {
            let x = a[i + j * n];
            sum += x * x;
        }
    }
    (2.0 * sum).sqrt()
}
