//! L1 sparse coding against a dictionary, and the per-patch reconstruction
//! errors the classifiers consume as features.
//!
//! The solver minimizes `0.5 ||X a - y||^2 + lambda ||a||_1` by cyclic
//! coordinate descent with soft thresholding. With `G = X^T X` and
//! `c = X^T y` precomputed, each coordinate update is
//! `a_j <- S(c_j - sum_{l != j} G_jl a_l, lambda) / G_jj`, which is exact in
//! one pass for orthonormal dictionaries and iterates to optimality for any
//! full-column-rank `X`.

use serde::Serialize;

use crate::eigenspace::Dictionary;
use crate::error::{Error, Result};
use crate::imaging::{tile, GrayImage};
use crate::linalg::{dot, norm2, Mat};

/// Result of one L1 solve.
#[derive(Debug, Clone)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// Penalty the solve actually ran with.
    pub lambda: f64,
    /// Full coordinate sweeps performed.
    pub sweeps: usize,
    /// `||X a - y||_2` at the solution.
    pub residual_norm: f64,
}

/// Solver knobs; the defaults are what the pipeline uses.
#[derive(Debug, Clone)]
pub struct LassoOpts {
    pub max_sweeps: usize,
    /// Sweep-to-sweep coefficient change below `rel_tol * (1 + ||y||)` stops.
    pub rel_tol: f64,
}

impl Default for LassoOpts {
    fn default() -> Self {
        LassoOpts {
            max_sweeps: 10_000,
            rel_tol: 1e-8,
        }
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn lasso(x: &Mat, y: &[f64], lambda: f64) -> Result<SparseCode> {
    lasso_with(x, y, lambda, &LassoOpts::default())
}

pub fn lasso_with(x: &Mat, y: &[f64], lambda: f64, opts: &LassoOpts) -> Result<SparseCode> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lasso penalty must be a finite non-negative number, got {lambda}"
        )));
    }
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "lasso target",
            expected: x.rows(),
            got: y.len(),
        });
    }
    let k = x.cols();
    // G = X^T X (k x k) and c = X^T y.
    let mut gram = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let g = dot(x.col(i), x.col(j));
            gram.set(i, j, g);
            gram.set(j, i, g);
        }
    }
    let c = x.tr_matvec(y)?;
    let tol = opts.rel_tol * (1.0 + norm2(y));

    let mut alpha = vec![0.0; k];
    let mut sweeps = 0;
    loop {
        if sweeps == opts.max_sweeps {
            let gap = kkt_violation(x, y, lambda, &alpha)?;
            return Err(Error::NoConvergence {
                context: "lasso coordinate descent",
                iterations: sweeps,
                gap,
                last_iterate: alpha,
            });
        }
        let mut max_delta = 0.0f64;
        for j in 0..k {
            let gjj = gram.get(j, j);
            if gjj <= 0.0 {
                continue; // zero column: its coefficient stays 0
            }
            // rho = c_j - sum_{l != j} G_jl a_l
            let rho = c[j] - dot(gram.col(j), &alpha) + gjj * alpha[j];
            let next = soft_threshold(rho, lambda) / gjj;
            max_delta = max_delta.max((next - alpha[j]).abs());
            alpha[j] = next;
        }
        sweeps += 1;
        if max_delta < tol {
            break;
        }
    }
    let residual_norm = norm2(&residual(x, &alpha, y)?);
    Ok(SparseCode {
        coefficients: alpha,
        lambda,
        sweeps,
        residual_norm,
    })
}

/// Worst violation of the L1 stationarity conditions at `alpha`:
/// `g = X^T (X alpha - y)` must satisfy `g_j = -lambda sign(alpha_j)` on the
/// support and `|g_j| <= lambda` off it. Zero at an exact optimum.
pub fn kkt_violation(x: &Mat, y: &[f64], lambda: f64, alpha: &[f64]) -> Result<f64> {
    let resid = residual(x, alpha, y)?;
    let g = x.tr_matvec(&resid)?;
    let mut worst = 0.0f64;
    for (gj, &aj) in g.iter().zip(alpha) {
        let v = if aj > 0.0 {
            (gj + lambda).abs()
        } else if aj < 0.0 {
            (gj - lambda).abs()
        } else {
            (gj.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

fn residual(x: &Mat, alpha: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let mut r = x.matvec(alpha)?;
    if r.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "residual",
            expected: r.len(),
            got: y.len(),
        });
    }
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    Ok(r)
}

/// `||X a - y||_2` for a solved code.
pub fn recon_error(x: &Mat, code: &SparseCode, y: &[f64]) -> Result<f64> {
    if code.coefficients.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            context: "reconstruction error",
            expected: x.cols(),
            got: code.coefficients.len(),
        });
    }
    Ok(norm2(&residual(x, &code.coefficients, y)?))
}

/// An epsilon-targeted encoding: the sparsest code (largest penalty) whose
/// reconstruction stays within `epsilon` of the target.
#[derive(Debug, Clone)]
pub struct EpsilonCode {
    pub code: SparseCode,
    /// Set when even the unpenalized solution cannot reach `epsilon`; the
    /// code is then that minimum-residual solution.
    pub unreachable: bool,
}

/// Solve `min ||a||_1 s.t. ||X a - y|| <= epsilon` approximately, by
/// bisecting the penalty: residual norm grows monotonically with lambda, so
/// 20 bisection steps on `[0, ||X^T y||_inf]` bracket the largest feasible
/// penalty. The upper bound admits the all-zero code.
pub fn encode_epsilon(x: &Mat, y: &[f64], epsilon: f64) -> Result<EpsilonCode> {
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be a finite non-negative number, got {epsilon}"
        )));
    }
    let lambda_max = x
        .tr_matvec(y)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    // Feasibility comparisons get a hair of absolute slack so that exact-span
    // targets (residual at float-noise level) count as reaching epsilon.
    let slack = 1e-12 * (1.0 + norm2(y));
    // At lambda_max the zero code is optimal; if it already meets epsilon we
    // are done.
    if norm2(y) <= epsilon + slack {
        return Ok(EpsilonCode {
            code: SparseCode {
                coefficients: vec![0.0; x.cols()],
                lambda: lambda_max,
                sweeps: 0,
                residual_norm: norm2(y),
            },
            unreachable: false,
        });
    }
    let floor = lasso(x, y, 0.0)?;
    if recon_error(x, &floor, y)? > epsilon + slack {
        return Ok(EpsilonCode {
            code: floor,
            unreachable: true,
        });
    }
    let (mut lo, mut hi) = (0.0f64, lambda_max);
    let mut best = floor;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let cand = lasso(x, y, mid)?;
        if recon_error(x, &cand, y)? <= epsilon + slack {
            best = cand;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EpsilonCode {
        code: best,
        unreachable: false,
    })
}

/// How the per-patch solves are driven.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SolverConfig {
    /// Penalty scaled per patch by the centered patch's norm, so the same
    /// setting bites equally on high- and low-contrast patches.
    FixedLambda(f64),
    /// Absolute residual target per centered patch.
    EpsilonBound(f64),
}

/// Per-image feature row: one reconstruction error per patch, in tile grid
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub image_id: String,
    pub label: Option<String>,
    pub errors: Vec<f64>,
}

/// Write feature rows as CSV: `image_id,label,e_0,...,e_{n-1}`, one row per
/// image in the given order. Floats use the shortest representation that
/// round-trips, so re-reading reproduces values exactly.
pub fn write_features_csv(path: &std::path::Path, rows: &[FeatureVector]) -> Result<()> {
    use std::io::Write as _;
    let n = rows.first().map_or(0, |r| r.errors.len());
    let mut buf = Vec::new();
    write!(buf, "image_id,label").expect("write to vec");
    for i in 0..n {
        write!(buf, ",e_{i}").expect("write to vec");
    }
    buf.push(b'\n');
    for row in rows {
        if row.errors.len() != n {
            return Err(Error::DimensionMismatch {
                context: "feature CSV row",
                expected: n,
                got: row.errors.len(),
            });
        }
        for field in [Some(row.image_id.as_str()), row.label.as_deref()] {
            if let Some(s) = field {
                if s.contains([',', '"', '\n', '\r']) {
                    return Err(Error::Data(format!(
                        "field {s:?} contains CSV metacharacters"
                    )));
                }
            }
        }
        write!(buf, "{},{}", row.image_id, row.label.as_deref().unwrap_or(""))
            .expect("write to vec");
        for e in &row.errors {
            write!(buf, ",{e}").expect("write to vec");
        }
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a feature CSV produced by [`write_features_csv`].
pub fn read_features_csv(path: &std::path::Path) -> Result<Vec<FeatureVector>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, detail: &str| {
        Error::Data(format!(
            "feature CSV `{}` line {line}: {detail}",
            path.display()
        ))
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "image_id" || cols[1] != "label" {
        return Err(bad(1, "header must start with image_id,label"));
    }
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("e_{i}") {
            return Err(bad(1, &format!("unexpected feature column {c:?}")));
        }
    }
    let n = cols.len() - 2;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 2 {
            return Err(bad(idx + 1, &format!("expected {} fields, got {}", n + 2, fields.len())));
        }
        let mut errors = Vec::with_capacity(n);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| bad(idx + 1, &format!("bad float {f:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(idx + 1, &format!("error value {v} out of range")));
            }
            errors.push(v);
        }
        rows.push(FeatureVector {
            image_id: fields[0].to_string(),
            label: if fields[1].is_empty() {
                None
            } else {
                Some(fields[1].to_string())
            },
            errors,
        });
    }
    Ok(rows)
}

/// Tile the image with the dictionary's patch size, sparse-code every
/// centered patch against the atoms, and record each patch's reconstruction
/// error. The caller fills in `image_id` and `label`.
pub fn extract_features(
    dict: &Dictionary,
    img: &GrayImage,
    solver: &SolverConfig,
) -> Result<FeatureVector> {
    if let SolverConfig::FixedLambda(l) = solver {
        if *l < 0.0 || !l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be a finite non-negative number, got {l}"
            )));
        }
    }
    let patches = tile(img, dict.patch_size())?;
    let atoms = dict.atoms();
    let mut errors = Vec::with_capacity(patches.n_patches());
    let mut centered = vec![0.0; dict.patch_dim()];
    for i in 0..patches.n_patches() {
        for (dst, (p, mu)) in centered
            .iter_mut()
            .zip(patches.patch(i).iter().zip(dict.mean()))
        {
            *dst = p - mu;
        }
        let code = match solver {
            SolverConfig::FixedLambda(l) => lasso(atoms, &centered, l * norm2(&centered))?,
            SolverConfig::EpsilonBound(e) => encode_epsilon(atoms, &centered, *e)?.code,
        };
        errors.push(recon_error(atoms, &code, &centered)?);
    }
    Ok(FeatureVector {
        image_id: String::new(),
        label: None,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn identity2() -> Mat {
        Mat::from_col_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn identity_dictionary_soft_thresholds() {
        // X = I, y = (3, 0.5), lambda = 1: a = (2, 0), residual sqrt(1.25).
        let x = identity2();
        let code = lasso(&x, &[3.0, 0.5], 1.0).unwrap();
        assert_eq!(code.coefficients, vec![2.0, 0.0]);
        let e = recon_error(&x, &code, &[3.0, 0.5]).unwrap();
        assert!((e - 1.118033988749895).abs() < 1e-15);
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        // Two copies of the same column: c = 4, G = 2, a = 2.
        let x = Mat::from_col_major(2, 1, vec![1.0, 1.0]).unwrap();
        let code = lasso(&x, &[1.0, 3.0], 0.0).unwrap();
        assert!((code.coefficients[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn large_penalty_gives_empty_support() {
        let x = identity2();
        let code = lasso(&x, &[0.3, -0.2], 0.5).unwrap();
        assert_eq!(code.coefficients, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = identity2();
        assert!(lasso(&x, &[1.0, 2.0], -0.1).is_err());
        assert!(lasso(&x, &[1.0, 2.0], f64::NAN).is_err());
        assert!(lasso(&x, &[1.0], 0.1).is_err());
        let code = lasso(&x, &[1.0, 1.0], 0.1).unwrap();
        assert!(recon_error(&x, &code, &[1.0]).is_err());
    }

    #[test]
    fn sweep_budget_exhaustion_reports_last_iterate() {
        let x = identity2();
        let opts = LassoOpts {
            max_sweeps: 0,
            ..LassoOpts::default()
        };
        let err = lasso_with(&x, &[5.0, 0.0], 1.0, &opts).unwrap_err();
        match err {
            Error::NoConvergence {
                iterations,
                gap,
                last_iterate,
                ..
            } => {
                assert_eq!(iterations, 0);
                assert_eq!(last_iterate, vec![0.0, 0.0]);
                // At a = 0 the gradient is -c, so the violation is |c| - lambda.
                assert!((gap - 4.0).abs() < 1e-12);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
        assert_eq!(
            lasso_with(&x, &[5.0, 0.0], 1.0, &opts)
                .unwrap_err()
                .exit_code(),
            4
        );
    }

    #[test]
    fn zero_column_keeps_zero_coefficient() {
        let x = Mat::from_col_major(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let code = lasso(&x, &[2.0, 1.0], 0.1).unwrap();
        assert_eq!(code.coefficients[1], 0.0);
        assert!((code.coefficients[0] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn epsilon_above_target_norm_returns_zero_code() {
        let x = identity2();
        let enc = encode_epsilon(&x, &[0.6, 0.8], 1.5).unwrap();
        assert!(!enc.unreachable);
        assert_eq!(enc.code.coefficients, vec![0.0, 0.0]);
        // ||X^T y||_inf for the zero-code penalty.
        assert!((enc.code.lambda - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unreachable_epsilon_is_flagged_with_best_effort_code() {
        // One column spans the x-axis; y sits on the y-axis, residual 1.
        let x = Mat::from_col_major(2, 1, vec![1.0, 0.0]).unwrap();
        let enc = encode_epsilon(&x, &[0.0, 1.0], 0.5).unwrap();
        assert!(enc.unreachable);
        let e = recon_error(&x, &enc.code, &[0.0, 1.0]).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_rejects_negative() {
        assert!(encode_epsilon(&identity2(), &[1.0, 0.0], -0.1).is_err());
    }

    #[test]
    fn features_follow_tile_order_and_count() {
        use crate::eigenspace::build_dictionary;
        use crate::imaging::{tile, GrayImage};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let px: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let train = GrayImage::new(8, 8, px).unwrap();
        let dict = build_dictionary(&tile(&train, 2).unwrap(), 2).unwrap();

        let px: Vec<f64> = (0..16).map(|_| rng.random()).collect();
        let img = GrayImage::new(4, 4, px.clone()).unwrap();
        let fv = extract_features(&dict, &img, &SolverConfig::FixedLambda(0.1)).unwrap();
        assert_eq!(fv.errors.len(), 4);
        assert!(fv.errors.iter().all(|e| e.is_finite() && *e >= 0.0));

        // Swapping two tiles permutes exactly those two feature entries.
        let mut swapped = px;
        for i in 0..2 {
            for j in 0..2 {
                swapped.swap(i * 4 + j, i * 4 + j + 2);
            }
        }
        let img2 = GrayImage::new(4, 4, swapped).unwrap();
        let fv2 = extract_features(&dict, &img2, &SolverConfig::FixedLambda(0.1)).unwrap();
        assert!((fv2.errors[0] - fv.errors[1]).abs() < 1e-12);
        assert!((fv2.errors[1] - fv.errors[0]).abs() < 1e-12);
        assert!((fv2.errors[2] - fv.errors[2]).abs() < 1e-12);

        // Epsilon mode produces residuals within the bound.
        let fv3 = extract_features(&dict, &img, &SolverConfig::EpsilonBound(10.0)).unwrap();
        assert!(fv3.errors.iter().all(|e| *e <= 10.0));

        // Patch size must divide the image.
        let odd = GrayImage::new(3, 4, vec![0.0; 12]).unwrap();
        assert!(extract_features(&dict, &odd, &SolverConfig::FixedLambda(0.1)).is_err());
        assert!(extract_features(&dict, &img, &SolverConfig::FixedLambda(-1.0)).is_err());
    }

    fn random_normalized(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::zeros(rows, cols);
        for j in 0..cols {
            let col = m.col_mut(j);
            for v in col.iter_mut() {
                *v = rng.random::<f64>() * 2.0 - 1.0;
            }
            let n = norm2(col);
            for v in col.iter_mut() {
                *v /= n;
            }
        }
        m
    }

    #[test]
    fn corrupted_tile_dominates_feature_errors() {
        use crate::eigenspace::build_dictionary;
        use crate::imaging::{tile, GrayImage};

        // Smooth training data: constant-per-patch ramps. The dictionary's
        // atoms then live in the constant/low-frequency subspace.
        let mut px = Vec::with_capacity(12 * 2);
        for y in 0..2 {
            for x in 0..12 {
                px.push((x / 2 + y) as f64);
            }
        }
        let train = GrayImage::new(12, 2, px).unwrap();
        let dict = build_dictionary(&tile(&train, 2).unwrap(), 1).unwrap();

        // Test image: flat tiles except one checkerboard tile, which is
        // orthogonal to constants and mostly unexplained by the dictionary.
        let mut px = vec![1.0; 16];
        px[2] = 9.0;
        px[3] = -7.0;
        px[6] = -9.0;
        px[7] = 7.0;
        let img = GrayImage::new(4, 4, px).unwrap();
        let fv = extract_features(&dict, &img, &SolverConfig::FixedLambda(0.1)).unwrap();
        let mut others: Vec<f64> = fv.errors.clone();
        let corrupted = others.remove(1);
        others.sort_by(f64::total_cmp);
        let median = others[others.len() / 2];
        assert!(
            corrupted > median,
            "corrupted tile error {corrupted} vs median {median}"
        );
    }

    #[test]
    fn exact_epsilon_in_span_recovers_projection() {
        // y in the span of an orthonormal X: epsilon 0 is met by a = X^T y.
        let x = identity2();
        let enc = encode_epsilon(&x, &[0.25, -1.5], 0.0).unwrap();
        assert!(!enc.unreachable);
        assert!((enc.code.coefficients[0] - 0.25).abs() < 1e-12);
        assert!((enc.code.coefficients[1] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn objective_never_increases_across_sweeps() {
        // Correlated columns so convergence takes several sweeps; read the
        // iterate after each sweep budget, converged or not.
        let x = Mat::from_col_major(3, 2, vec![1.0, 0.9, 0.1, 0.95, 1.0, 0.0]).unwrap();
        let y = [1.0, -0.5, 0.7];
        let lambda = 0.05;
        let objective = |a: &[f64]| {
            let r = residual(&x, a, &y).unwrap();
            0.5 * dot(&r, &r) + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
        };
        let mut prev = f64::INFINITY;
        for budget in 1..8 {
            let opts = LassoOpts {
                max_sweeps: budget,
                ..LassoOpts::default()
            };
            let alpha = match lasso_with(&x, &y, lambda, &opts) {
                Ok(code) => code.coefficients,
                Err(Error::NoConvergence { last_iterate, .. }) => last_iterate,
                Err(other) => panic!("unexpected error {other:?}"),
            };
            let obj = objective(&alpha);
            assert!(obj <= prev + 1e-12, "objective rose: {prev} -> {obj}");
            prev = obj;
        }
    }

    #[test]
    fn features_csv_round_trips_exactly() {
        let rows = vec![
            FeatureVector {
                image_id: "a/x.pgm".into(),
                label: Some("a".into()),
                errors: vec![0.1, 2.0f64.sqrt(), 0.0],
            },
            FeatureVector {
                image_id: "b/y.pgm".into(),
                label: None,
                errors: vec![1e-17, 3.5, 7.25],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&path, &rows).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back, rows);

        // CSV metacharacters in ids are refused rather than mangled.
        let evil = vec![FeatureVector {
            image_id: "a,b".into(),
            label: None,
            errors: vec![0.0],
        }];
        assert!(write_features_csv(&path, &evil).is_err());

        // Ragged rows are refused.
        std::fs::write(&path, "image_id,label,e_0\nx,,0.1,0.2\n").unwrap();
        assert!(read_features_csv(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn solutions_satisfy_stationarity(
            seed in any::<u64>(),
            lambda in 0.0f64..2.0,
            rows in 3usize..10,
            cols in 1usize..6,
        ) {
            let x = random_normalized(rows, cols, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
            let y: Vec<f64> = (0..rows).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let code = lasso(&x, &y, lambda).unwrap();
            let viol = kkt_violation(&x, &y, lambda, &code.coefficients).unwrap();
            prop_assert!(viol <= 1e-6 * (1.0 + norm2(&y)), "violation {viol}");
            // Stored residual agrees with a recomputation.
            let e = recon_error(&x, &code, &y).unwrap();
            prop_assert!((e - code.residual_norm).abs() < 1e-10);
        }

        #[test]
        fn scaling_y_and_lambda_scales_the_solution(
            seed in any::<u64>(),
            lambda in 0.01f64..1.0,
            scale in 0.1f64..10.0,
        ) {
            let x = random_normalized(5, 3, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 77);
            let y: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            // The default stopping rule has an absolute floor, which is not
            // scale-equivariant; tighten it so only the math is under test.
            let opts = LassoOpts { rel_tol: 1e-13, ..LassoOpts::default() };
            let base = lasso_with(&x, &y, lambda, &opts).unwrap();
            let scaled_y: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let scaled = lasso_with(&x, &scaled_y, lambda * scale, &opts).unwrap();
            for (a, b) in scaled.coefficients.iter().zip(&base.coefficients) {
                prop_assert!((a - b * scale).abs() < 1e-9 * (1.0 + scale), "{a} vs {}", b * scale);
            }
        }

        #[test]
        fn reachable_epsilon_is_met_with_sparser_code(
            seed in any::<u64>(),
            rows in 3usize..8,
        ) {
            let x = random_normalized(rows, 2, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
            let y: Vec<f64> = (0..rows).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let floor = lasso(&x, &y, 0.0).unwrap();
            let min_res = recon_error(&x, &floor, &y).unwrap();
            let eps = min_res + 0.25 * (norm2(&y) - min_res).max(0.0) + 1e-9;
            let enc = encode_epsilon(&x, &y, eps).unwrap();
            prop_assert!(!enc.unreachable);
            let res = recon_error(&x, &enc.code, &y).unwrap();
            prop_assert!(res <= eps + 1e-12, "residual {res} vs eps {eps}");
            // The chosen penalty never undercuts the unpenalized support size.
            let nnz = |c: &[f64]| c.iter().filter(|v| **v != 0.0).count();
            prop_assert!(nnz(&enc.code.coefficients) <= nnz(&floor.coefficients).max(1));
        }
    }
}
