//! Confusion-matrix metrics, ROC/AUC, and multiclass aggregation.
//!
//! Every rational metric is computed as a single `f64` division of exactly
//! accumulated integer numerator and denominator, so algebraically equal
//! formulations (e.g. the two balanced-accuracy routes for two classes)
//! yield bit-identical doubles. Division-by-zero cases are reported as a
//! value of 0 with `defined = false` instead of NaN so downstream CSV stays
//! machine-readable.

use serde::Serialize;

use crate::error::{Error, Result};

/// Square tally of classification outcomes: rows index the true class,
/// columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Result<ConfusionMatrix> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "confusion matrix needs at least 2 classes, got {n_classes}"
            )));
        }
        Ok(ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n_classes || predicted >= self.n_classes {
            return Err(Error::InvalidArgument(format!(
                "label pair ({truth}, {predicted}) out of range for {} classes",
                self.n_classes
            )));
        }
        self.counts[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    /// Number of evaluated samples.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// True-class sample count `n_m`.
    pub fn class_total(&self, truth: usize) -> u64 {
        self.counts[truth * self.n_classes..(truth + 1) * self.n_classes]
            .iter()
            .sum()
    }

    /// Collapse a 2-class matrix into the four binary outcome counts, with
    /// `positive` naming which class id counts as positive.
    pub fn binary_counts(&self, positive: usize) -> Result<BinaryCounts> {
        if self.n_classes != 2 {
            return Err(Error::InvalidArgument(format!(
                "binary counts need a 2-class matrix, got {} classes",
                self.n_classes
            )));
        }
        if positive > 1 {
            return Err(Error::InvalidArgument(format!(
                "positive class must be 0 or 1, got {positive}"
            )));
        }
        let neg = 1 - positive;
        Ok(BinaryCounts {
            true_pos: self.count(positive, positive),
            false_neg: self.count(positive, neg),
            false_pos: self.count(neg, positive),
            true_neg: self.count(neg, neg),
        })
    }
}

/// Tally predicted-vs-true labels. Labels must lie in `0..n_classes`.
pub fn confusion(truth: &[usize], predictions: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            context: "confusion labels",
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(n_classes)?;
    for (&t, &p) in truth.iter().zip(predictions) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub true_pos: u64,
    pub false_neg: u64,
    pub false_pos: u64,
    pub true_neg: u64,
}

/// A metric value in `[0, 1]`. When the defining ratio has a zero
/// denominator the value is 0 and `defined` is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub defined: bool,
}

impl MetricValue {
    pub fn defined(value: f64) -> MetricValue {
        MetricValue {
            value,
            defined: true,
        }
    }

    pub fn undefined() -> MetricValue {
        MetricValue {
            value: 0.0,
            defined: false,
        }
    }

    fn ratio(num: u128, den: u128) -> MetricValue {
        if den == 0 {
            MetricValue::undefined()
        } else {
            MetricValue::defined(num as f64 / den as f64)
        }
    }
}

/// TP / (TP + FN).
pub fn sensitivity(c: &BinaryCounts) -> MetricValue {
    MetricValue::ratio(
        u128::from(c.true_pos),
        u128::from(c.true_pos) + u128::from(c.false_neg),
    )
}

/// TN / (TN + FP).
pub fn specificity(c: &BinaryCounts) -> MetricValue {
    MetricValue::ratio(
        u128::from(c.true_neg),
        u128::from(c.true_neg) + u128::from(c.false_pos),
    )
}

/// (TP/P + TN/N) / 2, as the single exact ratio (TP·N + TN·P) / (2·P·N).
pub fn bal_acc(c: &BinaryCounts) -> MetricValue {
    let p = u128::from(c.true_pos) + u128::from(c.false_neg);
    let n = u128::from(c.true_neg) + u128::from(c.false_pos);
    if p == 0 || n == 0 {
        return MetricValue::undefined();
    }
    MetricValue::ratio(u128::from(c.true_pos) * n + u128::from(c.true_neg) * p, 2 * p * n)
}

/// TP / (TP + FP).
pub fn precision(c: &BinaryCounts) -> MetricValue {
    MetricValue::ratio(
        u128::from(c.true_pos),
        u128::from(c.true_pos) + u128::from(c.false_pos),
    )
}

/// Harmonic mean of precision and sensitivity, reduced to the exact ratio
/// 2·TP / (2·TP + FP + FN); undefined when TP = 0 (precision or sensitivity
/// undefined, or both zero).
pub fn f1(c: &BinaryCounts) -> MetricValue {
    if c.true_pos == 0 {
        return MetricValue::undefined();
    }
    MetricValue::ratio(
        2 * u128::from(c.true_pos),
        2 * u128::from(c.true_pos) + u128::from(c.false_pos) + u128::from(c.false_neg),
    )
}

/// The balanced-accuracy formula applied in place of a rank-based AUC; kept
/// alongside `trapezoid_auc` for comparison because some reports conflate
/// the two.
pub fn balanced_auc(c: &BinaryCounts) -> MetricValue {
    bal_acc(c)
}

/// Mean per-class recall. The exact common-denominator ratio
/// `sum_m (r_m * prod_{j != m} n_j) / (M * prod_j n_j)` is used when it fits
/// in u128 (so the 2-class case is bit-identical to `bal_acc`); otherwise it
/// falls back to the floating mean of per-class recalls. Any class with no
/// true samples makes the metric undefined.
pub fn multiclass_bal_acc(cm: &ConfusionMatrix) -> MetricValue {
    let m = cm.n_classes();
    let totals: Vec<u128> = (0..m).map(|c| u128::from(cm.class_total(c))).collect();
    if totals.iter().any(|&n| n == 0) {
        return MetricValue::undefined();
    }
    let recalls: Vec<u128> = (0..m).map(|c| u128::from(cm.count(c, c))).collect();
    let mut den = u128::from(m as u64);
    let mut ok = true;
    for &n in &totals {
        match den.checked_mul(n) {
            Some(v) => den = v,
            None => {
                ok = false;
                break;
            }
        }
    }
    if ok {
        let mut num: u128 = 0;
        'outer: for c in 0..m {
            let mut term = recalls[c];
            for (j, &n) in totals.iter().enumerate() {
                if j != c {
                    match term.checked_mul(n) {
                        Some(v) => term = v,
                        None => {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
            match num.checked_add(term) {
                Some(v) => num = v,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return MetricValue::ratio(num, den);
        }
    }
    let mean = (0..m)
        .map(|c| recalls[c] as f64 / totals[c] as f64)
        .sum::<f64>()
        / m as f64;
    MetricValue::defined(mean)
}

/// One ROC vertex: classifying as positive every sample whose score is
/// `>= threshold` yields this (false-positive rate, true-positive rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn check_scores(scores: &[f64], is_positive: &[bool]) -> Result<()> {
    if scores.len() != is_positive.len() {
        return Err(Error::DimensionMismatch {
            context: "roc scores",
            expected: is_positive.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("roc scores must not be NaN".into()));
    }
    Ok(())
}

/// Indices sorted by descending score, grouped into runs of exactly equal
/// scores; per run, the positive and negative counts.
fn tie_groups(scores: &[f64], is_positive: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((s, pos, neg)) if *s == scores[i] => {
                if is_positive[i] {
                    *pos += 1;
                } else {
                    *neg += 1;
                }
            }
            _ => groups.push((
                scores[i],
                u64::from(is_positive[i]),
                u64::from(!is_positive[i]),
            )),
        }
    }
    groups
}

/// Area under the ROC curve by trapezoidal integration over score
/// thresholds. Equivalent to the tie-aware Mann-Whitney statistic: each
/// (positive, negative) pair contributes 1 when the positive scores higher
/// and 1/2 on an exact tie, normalized by P·N. Undefined when either class
/// is absent.
pub fn trapezoid_auc(scores: &[f64], is_positive: &[bool]) -> Result<MetricValue> {
    check_scores(scores, is_positive)?;
    let p: u64 = is_positive.iter().filter(|&&b| b).count() as u64;
    let n = scores.len() as u64 - p;
    if p == 0 || n == 0 {
        return Ok(MetricValue::undefined());
    }
    // Descending sweep: a tie group with dp positives and dn negatives is a
    // diagonal ROC segment; its trapezoid doubles to dn * (2*tp_before + dp).
    let mut twice_area: u128 = 0;
    let mut tp: u128 = 0;
    for (_, dp, dn) in tie_groups(scores, is_positive) {
        twice_area += u128::from(dn) * (2 * tp + u128::from(dp));
        tp += u128::from(dp);
    }
    Ok(MetricValue::ratio(
        twice_area,
        2 * u128::from(p) * u128::from(n),
    ))
}

/// ROC vertices from the highest threshold down, starting at the
/// all-negative anchor (threshold +inf, fpr 0, tpr 0) and ending at
/// (min score, 1, 1). Errors when either class is absent since no curve
/// exists.
pub fn roc_points(scores: &[f64], is_positive: &[bool]) -> Result<Vec<RocPoint>> {
    check_scores(scores, is_positive)?;
    let p: u64 = is_positive.iter().filter(|&&b| b).count() as u64;
    let n = scores.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "roc curve needs both classes present".into(),
        ));
    }
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (threshold, dp, dn) in tie_groups(scores, is_positive) {
        tp += dp;
        fp += dn;
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(points)
}

/// One-vs-one multiclass AUC: for every unordered class pair, restrict to
/// samples of those two classes, compute the AUC of each class's own score
/// column against the other, and average the two directions; the result is
/// the mean over pairs. `scores[c][i]` is class `c`'s score for sample `i`.
/// Undefined when any pair lacks one of its classes.
pub fn ovo_auc(scores: &[Vec<f64>], truth: &[usize]) -> Result<MetricValue> {
    let m = scores.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "one-vs-one needs at least 2 score columns, got {m}"
        )));
    }
    for col in scores {
        if col.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                context: "ovo scores",
                expected: truth.len(),
                got: col.len(),
            });
        }
    }
    if let Some(&t) = truth.iter().find(|&&t| t >= m) {
        return Err(Error::InvalidArgument(format!(
            "label {t} out of range for {m} score columns"
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..m {
        for b in a + 1..m {
            let idx: Vec<usize> = (0..truth.len())
                .filter(|&i| truth[i] == a || truth[i] == b)
                .collect();
            let restricted =
                |col: usize| idx.iter().map(|&i| scores[col][i]).collect::<Vec<f64>>();
            let pos_a: Vec<bool> = idx.iter().map(|&i| truth[i] == a).collect();
            let pos_b: Vec<bool> = pos_a.iter().map(|&v| !v).collect();
            let dir_a = trapezoid_auc(&restricted(a), &pos_a)?;
            let dir_b = trapezoid_auc(&restricted(b), &pos_b)?;
            if !dir_a.defined || !dir_b.defined {
                return Ok(MetricValue::undefined());
            }
            sum += 0.5 * (dir_a.value + dir_b.value);
            pairs += 1;
        }
    }
    Ok(MetricValue::defined(sum / pairs as f64))
}

/// Mean and sample standard deviation (n-1) of fold-level metric values.
/// `defined` only when every fold's value was.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub defined: bool,
}

pub fn aggregate(folds: &[MetricValue]) -> Aggregate {
    if folds.is_empty() {
        return Aggregate {
            mean: 0.0,
            std: 0.0,
            defined: false,
        };
    }
    let n = folds.len() as f64;
    let mean = folds.iter().map(|m| m.value).sum::<f64>() / n;
    let std = if folds.len() < 2 {
        0.0
    } else {
        let ss = folds
            .iter()
            .map(|m| (m.value - mean) * (m.value - mean))
            .sum::<f64>();
        (ss / (n - 1.0)).sqrt()
    };
    Aggregate {
        mean,
        std,
        defined: folds.iter().all(|m| m.defined),
    }
}
