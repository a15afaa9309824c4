//! Linear support vector machine trained by dual coordinate descent.
//!
//! Primal: `min 0.5 ||w||^2 + C sum_i weight(y_i) xi_i` with hinge slack
//! `xi_i = max(0, 1 - y_i (w.x_i + b))`. The bias rides along as an extra
//! constant-1 feature (so it is regularized — a standard, well-behaved
//! simplification at these scales). The corresponding dual is
//! `min 0.5 a^T Q a - sum a_i` over the box `0 <= a_i <= C_i` with
//! `Q_ij = y_i y_j (x_i.x_j + 1)`, solved coordinate-wise in a fixed cyclic
//! order; the primal vector `w = sum y_i a_i x_i` is maintained incrementally
//! so each update costs one dot product.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Mat};

const STOP_TOL: f64 = 1e-6;
const MAX_EPOCHS: usize = 100_000;

/// Per-class penalty multipliers for labels -1 / +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl ClassWeights {
    pub fn uniform() -> ClassWeights {
        ClassWeights {
            negative: 1.0,
            positive: 1.0,
        }
    }

    /// `n_total / (n_classes * n_class)`: inversely proportional to class
    /// frequency, averaging to ~1 on balanced data.
    pub fn balanced(labels: &[i8]) -> Result<ClassWeights> {
        let pos = labels.iter().filter(|&&y| y == 1).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::InvalidArgument(
                "balanced weights need both classes present".into(),
            ));
        }
        let n = labels.len() as f64;
        Ok(ClassWeights {
            negative: n / (2.0 * neg as f64),
            positive: n / (2.0 * pos as f64),
        })
    }

    #[inline]
    fn for_label(&self, y: i8) -> f64 {
        if y > 0 {
            self.positive
        } else {
            self.negative
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SvmModel {
    /// Primal weights, one per feature (bias excluded).
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual variable per training sample, in training order.
    pub dual_coefficients: Vec<f64>,
    /// Training labels matching `dual_coefficients` (needed to interpret the
    /// box constraints and to rebuild `w` from the duals).
    pub training_labels: Vec<i8>,
    pub cost: f64,
    pub class_weights: ClassWeights,
}

/// Train on samples stored as the columns of `features` (n_features x n).
pub fn svm_train(
    features: &Mat,
    labels: &[i8],
    cost: f64,
    class_weights: &ClassWeights,
) -> Result<SvmModel> {
    let n = features.cols();
    let d = features.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "svm labels",
            expected: n,
            got: labels.len(),
        });
    }
    if !(cost > 0.0) || !cost.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "svm cost must be positive and finite, got {cost}"
        )));
    }
    if !(class_weights.negative > 0.0) || !(class_weights.positive > 0.0) {
        return Err(Error::InvalidArgument(
            "class weights must be positive".into(),
        ));
    }
    if labels.iter().any(|y| *y != 1 && *y != -1) {
        return Err(Error::InvalidArgument(
            "svm labels must be +1 or -1".into(),
        ));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::InvalidArgument(
            "svm training needs both classes present".into(),
        ));
    }
    if features.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "svm features must be finite".into(),
        ));
    }

    // Q_ii = ||x_i||^2 + 1 (the +1 is the bias feature); strictly positive.
    let q_diag: Vec<f64> = (0..n)
        .map(|i| {
            let c = features.col(i);
            dot(c, c) + 1.0
        })
        .collect();
    let box_cap: Vec<f64> = labels
        .iter()
        .map(|&y| cost * class_weights.for_label(y))
        .collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut epochs = 0;
    loop {
        let mut max_pg = 0.0f64;
        for i in 0..n {
            let xi = features.col(i);
            let yi = f64::from(labels[i]);
            let g = yi * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= box_cap[i] {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg.abs());
            if pg != 0.0 {
                let next = (alpha[i] - g / q_diag[i]).clamp(0.0, box_cap[i]);
                let delta = next - alpha[i];
                if delta != 0.0 {
                    axpy(delta * yi, xi, &mut w);
                    b += delta * yi;
                    alpha[i] = next;
                }
            }
        }
        epochs += 1;
        if max_pg < STOP_TOL {
            break;
        }
        if epochs == MAX_EPOCHS {
            return Err(Error::NoConvergence {
                context: "svm dual coordinate descent",
                iterations: epochs,
                gap: max_pg,
                last_iterate: alpha,
            });
        }
    }

    Ok(SvmModel {
        weights: w,
        bias: b,
        dual_coefficients: alpha,
        training_labels: labels.to_vec(),
        cost,
        class_weights: *class_weights,
    })
}

/// Decision value and label for one sample. A score of exactly zero maps to
/// +1 by convention.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(f64, i8)> {
    if x.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            context: "svm prediction",
            expected: model.weights.len(),
            got: x.len(),
        });
    }
    let score = dot(&model.weights, x) + model.bias;
    Ok((score, if score < 0.0 { -1 } else { 1 }))
}

const MAGIC: &[u8; 4] = b"EPSV";
const VERSION: u32 = 1;

pub fn save_svm(model: &SvmModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.weights.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.dual_coefficients.len() as u32).to_le_bytes());
    for v in [
        model.cost,
        model.class_weights.negative,
        model.class_weights.positive,
        model.bias,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in model.weights.iter().chain(&model.dual_coefficients) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend(model.training_labels.iter().map(|&y| y as u8));
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    let bytes = std::fs::read(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |detail: &str| {
        Error::Data(format!(
            "svm model file `{}` is invalid: {detail}",
            path.display()
        ))
    };
    let need = |cond: bool, detail: &str| if cond { Ok(()) } else { Err(bad(detail)) };
    need(bytes.len() >= 16, "truncated header")?;
    need(&bytes[..4] == MAGIC, "bad magic")?;
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    need(u32_at(4) == VERSION, "unsupported version")?;
    let d = u32_at(8) as usize;
    let n = u32_at(12) as usize;
    let expected = 16 + 8 * (4 + d + n) + n;
    need(bytes.len() == expected, "wrong length for declared sizes")?;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let mut o = 16;
    let mut scalars = [0.0; 4];
    for s in &mut scalars {
        *s = f64_at(o);
        o += 8;
    }
    let read_vec = |len: usize, o: &mut usize| {
        let v: Vec<f64> = (0..len).map(|i| f64_at(*o + 8 * i)).collect();
        *o += 8 * len;
        v
    };
    let weights = read_vec(d, &mut o);
    let duals = read_vec(n, &mut o);
    let labels: Vec<i8> = bytes[o..].iter().map(|&b| b as i8).collect();
    need(labels.iter().all(|y| *y == 1 || *y == -1), "bad label byte")?;
    need(
        weights.iter().chain(&duals).all(|v| v.is_finite()),
        "non-finite parameter",
    )?;
    Ok(SvmModel {
        weights,
        bias: scalars[3],
        dual_coefficients: duals,
        training_labels: labels,
        cost: scalars[0],
        class_weights: ClassWeights {
            negative: scalars[1],
            positive: scalars[2],
        },
    })
}
