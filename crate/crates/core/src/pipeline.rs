//! End-to-end orchestration: ingest → prepare → grid evaluation → reports,
//! plus the single-stage artifact commands (dictionary build, encoding,
//! training, evaluation) used for debugging a run piecewise.
//!
//! Every failure is tagged with the stage it came from, and every emitted
//! byte is a pure function of (dataset, configuration): reports carry no
//! timestamps or absolute paths, and the run manifest lists a content hash
//! for each file written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classify::{
    load_forest, load_svm, rf_predict, rf_train, save_forest, save_svm, svm_predict, svm_train,
    ClassWeights, RfModel, SvmModel,
};
use crate::config::{ClassifierKind, PipelineConfig};
use crate::dataset::{ingest_dataset, LabeledDataset};
use crate::eigenspace::{build_dictionary, load_dictionary, save_dictionary};
use crate::error::{Error, Result};
use crate::eval::grid::{
    grid_search, CellResult, ClassifierParams, GridInput, GridParams, GridResults,
};
use crate::eval::metrics::{
    bal_acc, confusion, f1, multiclass_bal_acc, ovo_auc, precision, sensitivity, specificity,
    trapezoid_auc, Aggregate, MetricValue,
};
use crate::imaging::{load_image, resize_bilinear, standardize, tile, GrayImage, PatchMatrix};
use crate::linalg::Mat;
use crate::sparse::{
    extract_features, read_features_csv, write_features_csv, FeatureVector, SolverConfig,
};

/// An image ready for tiling: loaded, resampled to the working size, and
/// standardized.
pub struct PreparedImage {
    pub id: String,
    pub class: usize,
    pub image: GrayImage,
    /// The image was constant after resampling and standardized to zeros.
    pub degenerate: bool,
}

/// Load, resample, and standardize every sample. Order follows the dataset
/// listing regardless of worker count.
pub fn prepare_images(ds: &LabeledDataset, image_size: u32) -> Result<Vec<PreparedImage>> {
    let results: Vec<Result<PreparedImage>> = ds
        .samples
        .par_iter()
        .map(|s| {
            let img = load_image(&s.path)?;
            let resized = resize_bilinear(&img, image_size, image_size)?;
            let std = standardize(&resized);
            Ok(PreparedImage {
                id: s.id.clone(),
                class: s.class,
                image: std.image,
                degenerate: std.degenerate,
            })
        })
        .collect();
    results.into_iter().collect()
}

fn require_data_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.data_dir
        .clone()
        .ok_or_else(|| Error::Config("no data directory given (flag --data-dir or config data_dir)".into()))
}

fn require_out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory given (flag --out-dir, config out_dir, or the output env var)".into()))
}

/// Map a configured positive-class name to its index; without a name the
/// lexicographically second class is positive.
pub fn resolve_positive(cfg: &PipelineConfig, class_names: &[String]) -> Result<usize> {
    match &cfg.positive_class {
        Some(name) => class_names.iter().position(|n| n == name).ok_or_else(|| {
            Error::Config(format!(
                "positive_class `{name}` is not a dataset class (have: {})",
                class_names.join(", ")
            ))
        }),
        None => Ok(usize::from(class_names.len() > 1)),
    }
}

fn grid_params(cfg: &PipelineConfig, class_names: &[String]) -> Result<GridParams> {
    let classifier = match cfg.classifier {
        ClassifierKind::Svm => ClassifierParams::Svm {
            cost: cfg.cost,
            weights: cfg.class_weight,
        },
        ClassifierKind::Forest => ClassifierParams::Forest {
            n_trees: cfg.n_trees,
            m_try: cfg.m_try,
        },
    };
    Ok(GridParams {
        patch_sizes: cfg.patch_sizes.clone(),
        component_counts: cfg.component_counts.clone(),
        k_folds: cfg.k_folds,
        seed: cfg.seed,
        solver: cfg.solver.clone(),
        classifier,
        positive_class: resolve_positive(cfg, class_names)?,
    })
}

/// Run a closure on a worker pool of the configured size; `None` keeps the
/// default pool. Results never depend on the pool size.
fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {n}-worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BestCell {
    pub patch_size: u32,
    pub components: usize,
    /// Mean balanced accuracy over folds, percent.
    pub bal_acc_mean: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    /// Emitted file names, in write order.
    pub files: Vec<String>,
    pub best: Option<BestCell>,
    pub warnings: Vec<String>,
}

struct Emitted {
    files: Vec<(String, Vec<u8>)>,
}

impl Emitted {
    fn new() -> Emitted {
        Emitted { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Write everything to `dir`, optionally appending a manifest that maps
    /// each file name to the SHA-256 of its content.
    fn write(mut self, dir: &Path, with_manifest: bool) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|source| Error::FileWrite {
            path: dir.to_path_buf(),
            source,
        })?;
        if with_manifest {
            let mut hashes = BTreeMap::new();
            for (name, bytes) in &self.files {
                let mut h = Sha256::new();
                h.update(bytes);
                let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
                hashes.insert(name.clone(), hex);
            }
            #[derive(Serialize)]
            struct Manifest {
                files: BTreeMap<String, String>,
            }
            let manifest = serde_json::to_vec_pretty(&Manifest { files: hashes })
                .expect("manifest serialization cannot fail");
            self.add("manifest.json", manifest);
        }
        let mut names = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|source| Error::FileWrite {
                path,
                source,
            })?;
            names.push(name.clone());
        }
        Ok(names)
    }
}

fn format_aggregate(a: &Aggregate) -> String {
    if a.defined {
        format!("{:.2}±{:.2}", a.mean, a.std)
    } else {
        "n/a".to_string()
    }
}

/// Rows = patch sizes, columns = component counts, cells = "mean±std"
/// balanced accuracy in percent.
fn grid_csv(cfg: &PipelineConfig, results: &GridResults) -> Vec<u8> {
    let mut out = String::from("patch_size");
    for k in &cfg.component_counts {
        out.push_str(&format!(",{k}"));
    }
    out.push('\n');
    let cols = cfg.component_counts.len();
    for (pi, p) in cfg.patch_sizes.iter().enumerate() {
        out.push_str(&p.to_string());
        for ki in 0..cols {
            let cell = &results.cells[pi * cols + ki];
            debug_assert_eq!((cell.patch_size, cell.components), (*p, cfg.component_counts[ki]));
            out.push(',');
            out.push_str(&format_aggregate(&cell.report.bal_acc));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// The best cell's six metric columns, mean±std percent.
fn best_metrics_csv(results: &GridResults) -> Vec<u8> {
    let mut out = String::from("patch_size,components,bal_acc,sens,spec,auc,prec,f1\n");
    if let Some(best) = results.best {
        let cell = &results.cells[best];
        let r = &cell.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cell.patch_size,
            cell.components,
            format_aggregate(&r.bal_acc),
            format_aggregate(&r.sens),
            format_aggregate(&r.spec),
            format_aggregate(&r.auc),
            format_aggregate(&r.prec),
            format_aggregate(&r.f1),
        ));
    }
    out.into_bytes()
}

/// Best-cell ROC vertices, one row per fold per threshold.
fn roc_csv(results: &GridResults) -> Vec<u8> {
    let mut out = String::from("fold,threshold,fpr,tpr\n");
    for fold in &results.roc {
        for p in &fold.points {
            out.push_str(&format!("{},{},{},{}\n", fold.fold, p.threshold, p.fpr, p.tpr));
        }
    }
    out.into_bytes()
}

#[derive(Serialize)]
struct FoldsRecord<'a> {
    seed: u64,
    k_folds: usize,
    image_size: u32,
    solver: &'a SolverConfig,
    classifier: &'a str,
    class_names: &'a [String],
    positive_class: Option<&'a str>,
    n_classes: usize,
    cells: &'a [CellResult],
    best: Option<BestCell>,
}

fn folds_json(cfg: &PipelineConfig, class_names: &[String], results: &GridResults) -> Vec<u8> {
    let record = FoldsRecord {
        seed: cfg.seed,
        k_folds: cfg.k_folds,
        image_size: cfg.image_size,
        solver: &cfg.solver,
        classifier: match cfg.classifier {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Forest => "rf",
        },
        class_names,
        positive_class: cfg.positive_class.as_deref(),
        n_classes: results.n_classes,
        cells: &results.cells,
        best: best_cell(results),
    };
    serde_json::to_vec_pretty(&record).expect("record serialization cannot fail")
}

fn best_cell(results: &GridResults) -> Option<BestCell> {
    results.best.map(|i| {
        let cell = &results.cells[i];
        BestCell {
            patch_size: cell.patch_size,
            components: cell.components,
            bal_acc_mean: cell.report.bal_acc.mean,
        }
    })
}

fn ingest_and_prepare(cfg: &PipelineConfig) -> Result<(LabeledDataset, Vec<PreparedImage>)> {
    let data_dir = require_data_dir(cfg)?;
    let ds = ingest_dataset(&data_dir).map_err(|e| e.in_stage("ingest"))?;
    let prepared =
        prepare_images(&ds, cfg.image_size).map_err(|e| e.in_stage("prepare"))?;
    Ok((ds, prepared))
}

fn evaluate_grid(
    cfg: &PipelineConfig,
    ds: &LabeledDataset,
    prepared: &[PreparedImage],
) -> Result<GridResults> {
    let params = grid_params(cfg, &ds.class_names)?;
    let images: Vec<GrayImage> = prepared.iter().map(|p| p.image.clone()).collect();
    let labels: Vec<usize> = prepared.iter().map(|p| p.class).collect();
    let ids: Vec<String> = prepared.iter().map(|p| p.id.clone()).collect();
    let input = GridInput {
        images: &images,
        labels: &labels,
        ids: &ids,
        n_classes: ds.n_classes(),
    };
    with_pool(cfg.jobs, || grid_search(&input, &params))?
        .map_err(|e| e.in_stage("evaluate"))
}

fn run_impl(cfg: &PipelineConfig, full_report: bool) -> Result<RunSummary> {
    let out_dir = require_out_dir(cfg)?;
    let (ds, prepared) = ingest_and_prepare(cfg)?;
    let mut warnings = Vec::new();
    let degenerate = prepared.iter().filter(|p| p.degenerate).count();
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} image(s) were constant after resampling and standardized to zeros"
        ));
    }
    let results = evaluate_grid(cfg, &ds, &prepared)?;
    if results.cells.is_empty() {
        warnings.push("the configured grid is empty; reports hold headers only".to_string());
    }

    let mut emitted = Emitted::new();
    emitted.add("grid.csv", grid_csv(cfg, &results));
    emitted.add("folds.json", folds_json(cfg, &ds.class_names, &results));
    if full_report {
        emitted.add("best_metrics.csv", best_metrics_csv(&results));
        if results.n_classes == 2 {
            emitted.add("roc.csv", roc_csv(&results));
        }
    }
    let files = emitted
        .write(&out_dir, full_report)
        .map_err(|e| e.in_stage("report"))?;
    Ok(RunSummary {
        out_dir,
        files,
        best: best_cell(&results),
        warnings,
    })
}

/// The end-to-end run: evaluate the configured grid and emit the full
/// report set (grid table, best-cell metrics, per-fold record, ROC points
/// in two-class contexts) plus a manifest hashing every file.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    run_impl(cfg, true)
}

/// Grid sweep only: emits the grid table and the per-fold record.
pub fn grid_command(cfg: &PipelineConfig) -> Result<RunSummary> {
    run_impl(cfg, false)
}

fn single_patch_size(cfg: &PipelineConfig) -> Result<u32> {
    cfg.patch_sizes.first().copied().ok_or_else(|| {
        Error::Config("this command needs a patch size (--patch-size or patch_sizes)".into())
    })
}

fn single_components(cfg: &PipelineConfig) -> Result<usize> {
    cfg.component_counts.first().copied().ok_or_else(|| {
        Error::Config("this command needs a component count (--components or component_counts)".into())
    })
}

/// Build one dictionary from the whole corpus (no cross-validation; this is
/// the debug path) and persist it as `dictionary.bin`. Uses the first
/// configured patch size and component count.
pub fn build_dict_command(cfg: &PipelineConfig) -> Result<PathBuf> {
    let out_dir = require_out_dir(cfg)?;
    let (_, prepared) = ingest_and_prepare(cfg)?;
    let p = single_patch_size(cfg)?;
    let k = single_components(cfg)?;
    let stacks: Vec<PatchMatrix> = prepared
        .iter()
        .map(|img| tile(&img.image, p))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("dictionary"))?;
    let patches = PatchMatrix::stack(&stacks).map_err(|e| e.in_stage("dictionary"))?;
    let dict = build_dictionary(&patches, k).map_err(|e| e.in_stage("dictionary"))?;
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::FileWrite {
        path: out_dir.clone(),
        source,
    })?;
    let path = out_dir.join("dictionary.bin");
    save_dictionary(&dict, &path).map_err(|e| e.in_stage("dictionary"))?;
    Ok(path)
}

/// Encode the whole corpus against `dictionary.bin` and write
/// `features.csv` with one error vector per image.
pub fn encode_command(cfg: &PipelineConfig) -> Result<PathBuf> {
    let out_dir = require_out_dir(cfg)?;
    let (ds, prepared) = ingest_and_prepare(cfg)?;
    let dict = load_dictionary(&out_dir.join("dictionary.bin")).map_err(|e| e.in_stage("encode"))?;
    let rows: Vec<Result<FeatureVector>> = prepared
        .par_iter()
        .map(|img| {
            let mut fv = extract_features(&dict, &img.image, &cfg.solver)?;
            fv.image_id = img.id.clone();
            fv.label = Some(ds.class_names[img.class].clone());
            Ok(fv)
        })
        .collect();
    let rows: Vec<FeatureVector> = rows
        .into_iter()
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("encode"))?;
    let path = out_dir.join("features.csv");
    write_features_csv(&path, &rows).map_err(|e| e.in_stage("encode"))?;
    Ok(path)
}

/// Feature rows with string labels mapped onto sorted class indices.
struct LabeledFeatures {
    class_names: Vec<String>,
    labels: Vec<usize>,
    features: Vec<Vec<f64>>,
}

fn load_labeled_features(path: &Path) -> Result<LabeledFeatures> {
    let rows = read_features_csv(path)?;
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "`{}` holds no feature rows",
            path.display()
        )));
    }
    let mut class_names: Vec<String> = Vec::new();
    for row in &rows {
        let label = row.label.as_ref().ok_or_else(|| {
            Error::Data(format!("feature row `{}` has no label", row.image_id))
        })?;
        if !class_names.contains(label) {
            class_names.push(label.clone());
        }
    }
    class_names.sort();
    let labels = rows
        .iter()
        .map(|r| {
            class_names
                .iter()
                .position(|n| Some(n) == r.label.as_ref())
                .expect("name drawn from the same rows")
        })
        .collect();
    Ok(LabeledFeatures {
        class_names,
        labels,
        features: rows.into_iter().map(|r| r.errors).collect(),
    })
}

fn default_m_try(dim: usize) -> usize {
    ((dim as f64).sqrt().floor() as usize).max(1)
}

/// Train one model on every row of `features.csv` (no cross-validation;
/// this is the debug path) and persist it as `model.bin`.
pub fn train_command(cfg: &PipelineConfig) -> Result<PathBuf> {
    let out_dir = require_out_dir(cfg)?;
    let lf = load_labeled_features(&out_dir.join("features.csv")).map_err(|e| e.in_stage("train"))?;
    let x = Mat::from_cols(&lf.features).map_err(|e| e.in_stage("train"))?;
    let path = out_dir.join("model.bin");
    match cfg.classifier {
        ClassifierKind::Svm => {
            if lf.class_names.len() != 2 {
                return Err(Error::Config(format!(
                    "the linear classifier needs exactly 2 classes, found {}",
                    lf.class_names.len()
                ))
                .in_stage("train"));
            }
            let positive = resolve_positive(cfg, &lf.class_names).map_err(|e| e.in_stage("train"))?;
            let y: Vec<i8> = lf
                .labels
                .iter()
                .map(|&c| if c == positive { 1 } else { -1 })
                .collect();
            let weights = match cfg.class_weight {
                crate::eval::grid::WeightMode::Uniform => ClassWeights::uniform(),
                crate::eval::grid::WeightMode::Balanced => {
                    ClassWeights::balanced(&y).map_err(|e| e.in_stage("train"))?
                }
            };
            let model =
                svm_train(&x, &y, cfg.cost, &weights).map_err(|e| e.in_stage("train"))?;
            save_svm(&model, &path).map_err(|e| e.in_stage("train"))?;
        }
        ClassifierKind::Forest => {
            let m = cfg.m_try.unwrap_or_else(|| default_m_try(x.rows()));
            let model = rf_train(
                &x,
                &lf.labels,
                lf.class_names.len(),
                cfg.n_trees,
                m,
                cfg.seed,
            )
            .map_err(|e| e.in_stage("train"))?;
            save_forest(&model, &path).map_err(|e| e.in_stage("train"))?;
        }
    }
    Ok(path)
}

enum AnyModel {
    Svm(SvmModel),
    Forest(RfModel),
}

fn load_model(path: &Path) -> Result<AnyModel> {
    let head = std::fs::read(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    match head.get(..4) {
        Some(b"EPSV") => Ok(AnyModel::Svm(load_svm(path)?)),
        Some(b"EPRF") => Ok(AnyModel::Forest(load_forest(path)?)),
        _ => Err(Error::Data(format!(
            "`{}` is not a recognized model file",
            path.display()
        ))),
    }
}

/// Metrics of a whole-corpus evaluation (the debug path; fold-based numbers
/// come from the grid commands).
#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub n_samples: usize,
    pub class_names: Vec<String>,
    pub bal_acc: MetricValue,
    pub sens: MetricValue,
    pub spec: MetricValue,
    pub auc: MetricValue,
    pub prec: MetricValue,
    pub f1: MetricValue,
}

/// Predict every row of `features.csv` with `model.bin` and write the
/// resulting metrics to `eval.json`.
pub fn evaluate_command(cfg: &PipelineConfig) -> Result<EvalOutput> {
    let out_dir = require_out_dir(cfg)?;
    let stage = |e: Error| e.in_stage("evaluate");
    let lf = load_labeled_features(&out_dir.join("features.csv")).map_err(stage)?;
    let model = load_model(&out_dir.join("model.bin")).map_err(stage)?;
    let n_classes = lf.class_names.len();
    let positive = resolve_positive(cfg, &lf.class_names).map_err(stage)?;

    let mut predictions = Vec::with_capacity(lf.labels.len());
    let mut score_cols = vec![Vec::with_capacity(lf.labels.len()); n_classes];
    match &model {
        AnyModel::Svm(m) => {
            if n_classes != 2 {
                return Err(stage(Error::Data(format!(
                    "a linear model scores 2 classes but the features hold {n_classes}"
                ))));
            }
            for f in &lf.features {
                let (score, label) = svm_predict(m, f).map_err(stage)?;
                predictions.push(if label == 1 { positive } else { 1 - positive });
                score_cols[positive].push(score);
                score_cols[1 - positive].push(-score);
            }
        }
        AnyModel::Forest(m) => {
            if m.n_classes < n_classes {
                return Err(stage(Error::Data(format!(
                    "model covers {} classes but the features hold {n_classes}",
                    m.n_classes
                ))));
            }
            for f in &lf.features {
                let (label, votes) = rf_predict(m, f).map_err(stage)?;
                predictions.push(label.min(n_classes - 1));
                let total: u64 = votes.iter().map(|&v| u64::from(v)).sum();
                for c in 0..n_classes {
                    score_cols[c].push(f64::from(votes[c]) / total as f64);
                }
            }
        }
    }

    let cm = confusion(&lf.labels, &predictions, n_classes).map_err(stage)?;
    let output = if n_classes == 2 {
        let counts = cm.binary_counts(positive).map_err(stage)?;
        let is_positive: Vec<bool> = lf.labels.iter().map(|&t| t == positive).collect();
        EvalOutput {
            n_samples: lf.labels.len(),
            class_names: lf.class_names,
            bal_acc: bal_acc(&counts),
            sens: sensitivity(&counts),
            spec: specificity(&counts),
            auc: trapezoid_auc(&score_cols[positive], &is_positive).map_err(stage)?,
            prec: precision(&counts),
            f1: f1(&counts),
        }
    } else {
        EvalOutput {
            n_samples: lf.labels.len(),
            class_names: lf.class_names,
            bal_acc: multiclass_bal_acc(&cm),
            sens: MetricValue::undefined(),
            spec: MetricValue::undefined(),
            auc: ovo_auc(&score_cols, &lf.labels).map_err(stage)?,
            prec: MetricValue::undefined(),
            f1: MetricValue::undefined(),
        }
    };
    let json = serde_json::to_vec_pretty(&output).expect("metric serialization cannot fail");
    std::fs::write(out_dir.join("eval.json"), json).map_err(|source| {
        stage(Error::FileWrite {
            path: out_dir.join("eval.json"),
            source,
        })
    })?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::grid::WeightMode;
    use crate::synth::{binary_preset, gen_synthetic};

    fn small_cfg(data: &Path, out: &Path) -> PipelineConfig {
        PipelineConfig {
            image_size: 32,
            patch_sizes: vec![4, 8],
            component_counts: vec![2, 3],
            k_folds: 2,
            seed: 5,
            cost: 1.0,
            class_weight: WeightMode::Balanced,
            data_dir: Some(data.to_path_buf()),
            out_dir: Some(out.to_path_buf()),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn full_run_emits_consistent_reports() {
        let data = tempfile::tempdir().unwrap();
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        gen_synthetic(&binary_preset(6, 3), data.path()).unwrap();
        let cfg_a = small_cfg(data.path(), out_a.path());
        let summary = run_pipeline(&cfg_a).unwrap();
        assert_eq!(
            summary.files,
            vec!["grid.csv", "folds.json", "best_metrics.csv", "roc.csv", "manifest.json"]
        );
        assert!(summary.best.is_some());

        // Same inputs, different output directory: byte-identical files.
        let cfg_b = small_cfg(data.path(), out_b.path());
        run_pipeline(&cfg_b).unwrap();
        for name in &summary.files {
            let a = std::fs::read(out_a.path().join(name)).unwrap();
            let b = std::fs::read(out_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }

        // The grid table shape mirrors the configured lists.
        let grid = std::fs::read_to_string(out_a.path().join("grid.csv")).unwrap();
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines[0], "patch_size,2,3");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("4,"));
        assert!(lines[2].starts_with("8,"));

        // Manifest hashes every other emitted file.
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_a.path().join("manifest.json")).unwrap())
                .unwrap();
        let files = manifest["files"].as_object().unwrap();
        assert_eq!(files.len(), 4);
        for name in ["grid.csv", "folds.json", "best_metrics.csv", "roc.csv"] {
            let hex = files[name].as_str().unwrap();
            assert_eq!(hex.len(), 64);
            let bytes = std::fs::read(out_a.path().join(name)).unwrap();
            let mut h = Sha256::new();
            h.update(&bytes);
            let expect: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
            assert_eq!(hex, expect, "stale hash for {name}");
        }
    }

    #[test]
    fn grid_command_emits_the_sweep_only() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        gen_synthetic(&binary_preset(4, 8), data.path()).unwrap();
        let mut cfg = small_cfg(data.path(), out.path());
        cfg.patch_sizes = vec![8];
        cfg.component_counts = vec![2];
        let summary = grid_command(&cfg).unwrap();
        assert_eq!(summary.files, vec!["grid.csv", "folds.json"]);
        assert!(!out.path().join("manifest.json").exists());
    }

    #[test]
    fn empty_grid_leaves_headers_and_a_warning() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        gen_synthetic(&binary_preset(4, 8), data.path()).unwrap();
        let mut cfg = small_cfg(data.path(), out.path());
        cfg.patch_sizes = vec![];
        let summary = run_pipeline(&cfg).unwrap();
        assert!(summary.warnings.iter().any(|w| w.contains("empty")));
        let grid = std::fs::read_to_string(out.path().join("grid.csv")).unwrap();
        assert_eq!(grid, "patch_size,2,3\n");
        let best = std::fs::read_to_string(out.path().join("best_metrics.csv")).unwrap();
        assert_eq!(best.lines().count(), 1);
    }

    #[test]
    fn artifact_chain_builds_encodes_trains_and_evaluates() {
        let data = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        gen_synthetic(&binary_preset(5, 21), data.path()).unwrap();
        let mut cfg = small_cfg(data.path(), out.path());
        cfg.patch_sizes = vec![8];
        cfg.component_counts = vec![3];

        let dict_path = build_dict_command(&cfg).unwrap();
        assert!(dict_path.ends_with("dictionary.bin"));
        let features_path = encode_command(&cfg).unwrap();
        let rows = read_features_csv(&features_path).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].errors.len(), 16);
        assert!(rows.iter().all(|r| r.label.is_some()));

        let model_path = train_command(&cfg).unwrap();
        assert!(model_path.ends_with("model.bin"));
        let eval = evaluate_command(&cfg).unwrap();
        assert_eq!(eval.n_samples, 10);
        assert!(eval.bal_acc.defined);
        // Training-set evaluation of a separable toy should be strong.
        assert!(eval.bal_acc.value >= 0.8, "bal acc {}", eval.bal_acc.value);
        assert!(out.path().join("eval.json").exists());

        // The forest path consumes the same features file.
        cfg.classifier = ClassifierKind::Forest;
        cfg.n_trees = 12;
        train_command(&cfg).unwrap();
        let eval_rf = evaluate_command(&cfg).unwrap();
        assert!(eval_rf.bal_acc.defined);
    }

    #[test]
    fn missing_directories_are_config_errors() {
        let cfg = PipelineConfig::default();
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let mut cfg2 = PipelineConfig::default();
        cfg2.data_dir = Some(PathBuf::from("/nonexistent"));
        assert_eq!(run_pipeline(&cfg2).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn positive_class_resolution() {
        let names = vec!["alpha".to_string(), "beta".to_string()];
        let mut cfg = PipelineConfig::default();
        assert_eq!(resolve_positive(&cfg, &names).unwrap(), 1);
        cfg.positive_class = Some("alpha".into());
        assert_eq!(resolve_positive(&cfg, &names).unwrap(), 0);
        cfg.positive_class = Some("gamma".into());
        let err = resolve_positive(&cfg, &names).unwrap_err();
        assert!(err.to_string().contains("alpha, beta"));
    }
}
