//! Patch-size × component-count grid search with fold-wise evaluation.
//!
//! One stratified split is drawn for the whole grid so every cell is scored
//! on identical folds. Inside each fold the dictionary is rebuilt from
//! training images only, features are re-extracted for both sides, and the
//! classifier is retrained — no test image ever influences the eigenspace.
//!
//! Work is scheduled as independent jobs keyed by (cell, fold): dictionaries
//! are built once per (patch size, fold) at the largest requested component
//! count and truncated per cell (truncation commutes with building), then
//! the per-cell jobs run. Results are gathered by key and every random seed
//! derives from (base seed, cell, fold), so output is independent of worker
//! count.

use std::collections::HashMap;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{rf_predict, rf_train, svm_predict, svm_train, ClassWeights};
use crate::eigenspace::{build_dictionary, Dictionary};
use crate::error::{Error, Result};
use crate::eval::cv::stratified_kfold;
use crate::eval::metrics::{
    aggregate, bal_acc, confusion, f1, multiclass_bal_acc, ovo_auc, precision, roc_points,
    sensitivity, specificity, trapezoid_auc, Aggregate, MetricValue, RocPoint,
};
use crate::imaging::{tile, GrayImage, PatchMatrix};
use crate::linalg::Mat;
use crate::sparse::{extract_features, SolverConfig};

/// Class-weight policy for the linear classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightMode {
    Uniform,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ClassifierParams {
    Svm {
        cost: f64,
        weights: WeightMode,
    },
    Forest {
        n_trees: usize,
        /// Features tried per split; `None` means `floor(sqrt(dim))`, at
        /// least 1.
        m_try: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridParams {
    pub patch_sizes: Vec<u32>,
    pub component_counts: Vec<usize>,
    pub k_folds: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub classifier: ClassifierParams,
    /// Class id treated as positive in two-class contexts.
    pub positive_class: usize,
}

/// The evaluation corpus: standardized images of identical dimensions with
/// aligned labels and unique ids.
pub struct GridInput<'a> {
    pub images: &'a [GrayImage],
    pub labels: &'a [usize],
    pub ids: &'a [String],
    pub n_classes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub bal_acc: MetricValue,
    pub sens: MetricValue,
    pub spec: MetricValue,
    pub auc: MetricValue,
    pub prec: MetricValue,
    pub f1: MetricValue,
}

/// The six reported columns, each mean ± sample deviation over folds, in
/// percent.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricsReport {
    pub bal_acc: Aggregate,
    pub sens: Aggregate,
    pub spec: Aggregate,
    pub auc: Aggregate,
    pub prec: Aggregate,
    pub f1: Aggregate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub patch_size: u32,
    pub components: usize,
    pub folds: Vec<FoldMetrics>,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RocFold {
    pub fold: usize,
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResults {
    /// Cells ordered by patch size then component count, matching the
    /// requested lists.
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the highest mean balanced accuracy (first on
    /// ties); `None` when the grid is empty or nothing was defined.
    pub best: Option<usize>,
    /// Per-fold ROC curves for the best cell; empty beyond two classes.
    pub roc: Vec<RocFold>,
    pub n_classes: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-job seed from the run seed and the (cell, fold) key.
fn derive_seed(base: u64, cell: u64, fold: u64) -> u64 {
    let mut z = base;
    for v in [cell, fold] {
        z = splitmix64(z ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    z
}

fn validate(input: &GridInput, params: &GridParams) -> Result<()> {
    let n = input.images.len();
    if n == 0 {
        return Err(Error::Data("no images to evaluate".into()));
    }
    if input.labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "grid labels",
            expected: n,
            got: input.labels.len(),
        });
    }
    if input.ids.len() != n {
        return Err(Error::DimensionMismatch {
            context: "grid ids",
            expected: n,
            got: input.ids.len(),
        });
    }
    if input.n_classes < 2 {
        return Err(Error::Data(format!(
            "evaluation needs at least 2 classes, got {}",
            input.n_classes
        )));
    }
    if let Some(&y) = input.labels.iter().find(|&&y| y >= input.n_classes) {
        return Err(Error::Data(format!(
            "label {y} out of range for {} classes",
            input.n_classes
        )));
    }
    if params.positive_class >= input.n_classes {
        return Err(Error::Config(format!(
            "positive class {} out of range for {} classes",
            params.positive_class, input.n_classes
        )));
    }
    let (w, h) = (input.images[0].width(), input.images[0].height());
    if let Some(img) = input
        .images
        .iter()
        .find(|i| i.width() != w || i.height() != h)
    {
        return Err(Error::Data(format!(
            "images differ in size: expected {w}x{h}, found {}x{}",
            img.width(),
            img.height()
        )));
    }
    for &p in &params.patch_sizes {
        if p == 0 || w % p != 0 || h % p != 0 {
            return Err(Error::Config(format!(
                "patch size {p} does not tile {w}x{h} images"
            )));
        }
    }
    if params.component_counts.iter().any(|&k| k == 0) {
        return Err(Error::Config("component counts must be at least 1".into()));
    }
    match &params.classifier {
        ClassifierParams::Svm { cost, .. } => {
            if !(*cost > 0.0) || !cost.is_finite() {
                return Err(Error::Config(format!(
                    "svm cost must be positive and finite, got {cost}"
                )));
            }
        }
        ClassifierParams::Forest { n_trees, m_try } => {
            if *n_trees == 0 {
                return Err(Error::Config("forest needs at least one tree".into()));
            }
            if *m_try == Some(0) {
                return Err(Error::Config("m_try must be at least 1".into()));
            }
        }
    }
    let mut seen = HashSet::new();
    for id in input.ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("duplicate image id `{id}`")));
        }
    }
    Ok(())
}

/// Verify that a fold's two sides share no image id. The split construction
/// guarantees this; the check keeps the guarantee observable.
fn check_fold_hygiene(ids: &[String], train: &[usize], test: &[usize]) -> Result<()> {
    let train_ids: HashSet<&str> = train.iter().map(|&i| ids[i].as_str()).collect();
    if let Some(&i) = test.iter().find(|&&i| train_ids.contains(ids[i].as_str())) {
        return Err(Error::Data(format!(
            "image `{}` appears in both train and test sides of a fold",
            ids[i]
        )));
    }
    Ok(())
}

/// Scores and truth gathered from one fold, kept for ROC export.
struct FoldScores {
    scores: Vec<f64>,
    is_positive: Vec<bool>,
}

struct JobOutput {
    metrics: FoldMetrics,
    scores: Option<FoldScores>,
}

/// Evaluate one (cell, fold) job: truncate the cached dictionary, extract
/// features on both sides, train, predict, and tally metrics.
#[allow(clippy::too_many_arguments)]
fn run_job(
    input: &GridInput,
    params: &GridParams,
    dict: &Dictionary,
    components: usize,
    train: &[usize],
    test: &[usize],
    fold: usize,
    job_seed: u64,
) -> Result<JobOutput> {
    let dict = dict.truncate(components)?;
    let features_of = |idx: &[usize]| -> Result<Vec<Vec<f64>>> {
        idx.iter()
            .map(|&i| Ok(extract_features(&dict, &input.images[i], &params.solver)?.errors))
            .collect()
    };
    let train_feats = features_of(train)?;
    let test_feats = features_of(test)?;
    let train_labels: Vec<usize> = train.iter().map(|&i| input.labels[i]).collect();
    let truth: Vec<usize> = test.iter().map(|&i| input.labels[i]).collect();
    let binary = input.n_classes == 2;
    let pos = params.positive_class;

    let mut predictions = Vec::with_capacity(test.len());
    // Per-class score columns; binary contexts read only the positive one.
    let mut score_cols = vec![Vec::with_capacity(test.len()); input.n_classes];
    match &params.classifier {
        ClassifierParams::Svm { cost, weights } => {
            if !binary {
                return Err(Error::Config(
                    "the linear classifier handles exactly 2 classes; use the forest".into(),
                ));
            }
            let x = Mat::from_cols(&train_feats)?;
            let y: Vec<i8> = train_labels
                .iter()
                .map(|&c| if c == pos { 1 } else { -1 })
                .collect();
            let w = match weights {
                WeightMode::Uniform => ClassWeights::uniform(),
                WeightMode::Balanced => ClassWeights::balanced(&y)?,
            };
            let model = svm_train(&x, &y, *cost, &w)?;
            for f in &test_feats {
                let (score, label) = svm_predict(&model, f)?;
                predictions.push(if label == 1 { pos } else { 1 - pos });
                score_cols[pos].push(score);
                score_cols[1 - pos].push(-score);
            }
        }
        ClassifierParams::Forest { n_trees, m_try } => {
            let x = Mat::from_cols(&train_feats)?;
            let dim = x.rows();
            let m = m_try.unwrap_or_else(|| ((dim as f64).sqrt().floor() as usize).max(1));
            let model = rf_train(&x, &train_labels, input.n_classes, *n_trees, m, job_seed)?;
            for f in &test_feats {
                let (label, votes) = rf_predict(&model, f)?;
                predictions.push(label);
                let total: u64 = votes.iter().map(|&v| u64::from(v)).sum();
                for (c, &v) in votes.iter().enumerate() {
                    score_cols[c].push(f64::from(v) / total as f64);
                }
            }
        }
    }

    let cm = confusion(&truth, &predictions, input.n_classes)?;
    let metrics = if binary {
        let counts = cm.binary_counts(pos)?;
        let is_positive: Vec<bool> = truth.iter().map(|&t| t == pos).collect();
        let auc = trapezoid_auc(&score_cols[pos], &is_positive)?;
        FoldMetrics {
            fold,
            bal_acc: bal_acc(&counts),
            sens: sensitivity(&counts),
            spec: specificity(&counts),
            auc,
            prec: precision(&counts),
            f1: f1(&counts),
        }
    } else {
        // Rate-style binary metrics have no single multiclass reading; they
        // are flagged undefined and only the mean-recall and one-vs-one
        // columns carry values.
        FoldMetrics {
            fold,
            bal_acc: multiclass_bal_acc(&cm),
            sens: MetricValue::undefined(),
            spec: MetricValue::undefined(),
            auc: ovo_auc(&score_cols, &truth)?,
            prec: MetricValue::undefined(),
            f1: MetricValue::undefined(),
        }
    };
    let scores = binary.then(|| FoldScores {
        scores: score_cols[pos].clone(),
        is_positive: truth.iter().map(|&t| t == pos).collect(),
    });
    Ok(JobOutput { metrics, scores })
}

fn percent(a: Aggregate) -> Aggregate {
    Aggregate {
        mean: a.mean * 100.0,
        std: a.std * 100.0,
        defined: a.defined,
    }
}

fn collect_report(folds: &[FoldMetrics]) -> MetricsReport {
    let pick = |f: fn(&FoldMetrics) -> MetricValue| {
        percent(aggregate(&folds.iter().map(f).collect::<Vec<_>>()))
    };
    MetricsReport {
        bal_acc: pick(|m| m.bal_acc),
        sens: pick(|m| m.sens),
        spec: pick(|m| m.spec),
        auc: pick(|m| m.auc),
        prec: pick(|m| m.prec),
        f1: pick(|m| m.f1),
    }
}

/// Run the full grid. Returns per-cell fold metrics and aggregates, the
/// best cell by mean balanced accuracy, and that cell's per-fold ROC curves
/// when the context is binary.
pub fn grid_search(input: &GridInput, params: &GridParams) -> Result<GridResults> {
    validate(input, params)?;
    if params.patch_sizes.is_empty() || params.component_counts.is_empty() {
        return Ok(GridResults {
            cells: Vec::new(),
            best: None,
            roc: Vec::new(),
            n_classes: input.n_classes,
        });
    }
    let split = stratified_kfold(input.labels, params.k_folds, params.seed)?;
    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..params.k_folds)
        .map(|f| (split.train_indices(f), split.test_indices(f)))
        .collect();
    for (train, test) in &folds {
        check_fold_hygiene(input.ids, train, test)?;
    }

    let k_max = *params.component_counts.iter().max().unwrap();

    // Build one dictionary per (patch size, fold) from training images only,
    // at the largest requested component count.
    let dict_jobs: Vec<(usize, usize)> = (0..params.patch_sizes.len())
        .flat_map(|pi| (0..params.k_folds).map(move |f| (pi, f)))
        .collect();
    let dict_results: Vec<Result<Dictionary>> = dict_jobs
        .par_iter()
        .map(|&(pi, fold)| {
            let p = params.patch_sizes[pi];
            let stacks: Vec<PatchMatrix> = folds[fold]
                .0
                .iter()
                .map(|&i| tile(&input.images[i], p))
                .collect::<Result<_>>()?;
            let patches = PatchMatrix::stack(&stacks)?;
            let k = k_max.min(patches.patch_dim()).min(patches.n_patches() - 1);
            build_dictionary(&patches, k.max(1))
        })
        .collect();
    let mut dicts: HashMap<(usize, usize), Dictionary> = HashMap::new();
    for (key, result) in dict_jobs.iter().zip(dict_results) {
        dicts.insert(*key, result?);
    }

    // Cells in row-major (patch size, components) order; one job per fold.
    let cells: Vec<(usize, usize)> = (0..params.patch_sizes.len())
        .flat_map(|pi| (0..params.component_counts.len()).map(move |ki| (pi, ki)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|ci| (0..params.k_folds).map(move |f| (ci, f)))
        .collect();
    let job_results: Vec<Result<JobOutput>> = jobs
        .par_iter()
        .map(|&(ci, fold)| {
            let (pi, ki) = cells[ci];
            let components = params.component_counts[ki];
            let dict = &dicts[&(pi, fold)];
            if components > dict.n_components() {
                return Err(Error::Config(format!(
                    "{} components requested but the {}x{} patch dictionary only \
                     supports {}",
                    components,
                    params.patch_sizes[pi],
                    params.patch_sizes[pi],
                    dict.n_components()
                )));
            }
            run_job(
                input,
                params,
                dict,
                components,
                &folds[fold].0,
                &folds[fold].1,
                fold,
                derive_seed(params.seed, ci as u64, fold as u64),
            )
        })
        .collect();
    let mut outputs = Vec::with_capacity(jobs.len());
    for r in job_results {
        outputs.push(r?);
    }

    let mut results = Vec::with_capacity(cells.len());
    let mut fold_scores: Vec<Vec<FoldScores>> = Vec::with_capacity(cells.len());
    for (ci, &(pi, ki)) in cells.iter().enumerate() {
        let mut fm = Vec::with_capacity(params.k_folds);
        let mut fs = Vec::new();
        for f in 0..params.k_folds {
            let out = &outputs[ci * params.k_folds + f];
            fm.push(out.metrics.clone());
            if let Some(s) = &out.scores {
                fs.push(FoldScores {
                    scores: s.scores.clone(),
                    is_positive: s.is_positive.clone(),
                });
            }
        }
        let report = collect_report(&fm);
        results.push(CellResult {
            patch_size: params.patch_sizes[pi],
            components: params.component_counts[ki],
            folds: fm,
            report,
        });
        fold_scores.push(fs);
    }

    let best = results
        .iter()
        .enumerate()
        .filter(|(_, c)| c.report.bal_acc.defined)
        .max_by(|(_, a), (_, b)| {
            a.report
                .bal_acc
                .mean
                .total_cmp(&b.report.bal_acc.mean)
                // On equal means the earlier cell wins.
                .then(std::cmp::Ordering::Greater)
        })
        .map(|(i, _)| i);

    let roc = match best {
        Some(i) if input.n_classes == 2 => fold_scores[i]
            .iter()
            .enumerate()
            .map(|(fold, s)| {
                Ok(RocFold {
                    fold,
                    points: roc_points(&s.scores, &s.is_positive)?,
                })
            })
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };

    Ok(GridResults {
        cells: results,
        best,
        roc,
        n_classes: input.n_classes,
    })
}
