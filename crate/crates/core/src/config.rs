//! Run configuration: built-in defaults, an optional TOML file, and flag
//! overrides, in ascending precedence. Validation happens once, after
//! merging, and reports every violation in a single error so a bad config
//! never reaches compute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::grid::WeightMode;
use crate::sparse::SolverConfig;

/// Environment variable consulted (by the CLI only) for the default output
/// directory when neither flag nor file names one.
pub const OUT_DIR_ENV: &str = "EIGENPATCH_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassifierKind {
    Svm,
    Forest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Images are resampled to this square size before tiling.
    pub image_size: u32,
    pub patch_sizes: Vec<u32>,
    pub component_counts: Vec<usize>,
    pub solver: SolverConfig,
    pub classifier: ClassifierKind,
    /// Soft-margin penalty for the linear classifier.
    pub cost: f64,
    pub class_weight: WeightMode,
    pub n_trees: usize,
    /// Features tried per split; `None` means `floor(sqrt(dim))`.
    pub m_try: Option<usize>,
    pub k_folds: usize,
    pub seed: u64,
    /// Worker threads; `None` leaves the pool at its default size. Results
    /// are identical either way.
    pub jobs: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Class name treated as positive in two-class contexts; defaults to
    /// the lexicographically second class.
    pub positive_class: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            image_size: 224,
            patch_sizes: vec![7, 8, 14, 16, 28, 32, 56],
            component_counts: (1..=9).collect(),
            solver: SolverConfig::FixedLambda(0.1),
            classifier: ClassifierKind::Svm,
            cost: 1.0,
            class_weight: WeightMode::Balanced,
            n_trees: 100,
            m_try: None,
            k_folds: 5,
            seed: 42,
            jobs: None,
            data_dir: None,
            out_dir: None,
            positive_class: None,
        }
    }
}

/// The TOML schema. Every key is optional; omitted keys keep their default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    image_size: Option<u32>,
    patch_sizes: Option<Vec<u32>>,
    component_counts: Option<Vec<usize>>,
    lambda: Option<f64>,
    epsilon: Option<f64>,
    classifier: Option<String>,
    cost: Option<f64>,
    class_weight: Option<String>,
    n_trees: Option<usize>,
    m_try: Option<usize>,
    k_folds: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    data_dir: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    positive_class: Option<String>,
}

/// Command-line overrides; every set field wins over the file and defaults.
/// `patch_size` and `components` narrow the grid to a single cell.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub patch_size: Option<u32>,
    pub components: Option<usize>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub classifier: Option<String>,
    pub trees: Option<usize>,
    pub mtry: Option<usize>,
    pub cost: Option<f64>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

fn parse_classifier(s: &str) -> Result<ClassifierKind> {
    match s {
        "svm" => Ok(ClassifierKind::Svm),
        "rf" => Ok(ClassifierKind::Forest),
        other => Err(Error::Config(format!(
            "classifier must be `svm` or `rf`, got `{other}`"
        ))),
    }
}

fn parse_weight_mode(s: &str) -> Result<WeightMode> {
    match s {
        "balanced" => Ok(WeightMode::Balanced),
        "uniform" => Ok(WeightMode::Uniform),
        other => Err(Error::Config(format!(
            "class_weight must be `balanced` or `uniform`, got `{other}`"
        ))),
    }
}

/// Build the effective configuration from defaults, then the file at `path`
/// (if any), then `overrides`, and validate the result.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();

    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| Error::FileRead {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| {
            Error::Config(format!("config file `{}`: {e}", path.display()))
        })?;
        if let (Some(_), Some(_)) = (raw.lambda, raw.epsilon) {
            return Err(Error::Config(
                "config file sets both `lambda` and `epsilon`; pick one solver mode".into(),
            ));
        }
        if let Some(v) = raw.image_size {
            cfg.image_size = v;
        }
        if let Some(v) = raw.patch_sizes {
            cfg.patch_sizes = v;
        }
        if let Some(v) = raw.component_counts {
            cfg.component_counts = v;
        }
        if let Some(v) = raw.lambda {
            cfg.solver = SolverConfig::FixedLambda(v);
        }
        if let Some(v) = raw.epsilon {
            cfg.solver = SolverConfig::EpsilonBound(v);
        }
        if let Some(v) = raw.classifier {
            cfg.classifier = parse_classifier(&v)?;
        }
        if let Some(v) = raw.cost {
            cfg.cost = v;
        }
        if let Some(v) = raw.class_weight {
            cfg.class_weight = parse_weight_mode(&v)?;
        }
        if let Some(v) = raw.n_trees {
            cfg.n_trees = v;
        }
        if raw.m_try.is_some() {
            cfg.m_try = raw.m_try;
        }
        if let Some(v) = raw.k_folds {
            cfg.k_folds = v;
        }
        if let Some(v) = raw.seed {
            cfg.seed = v;
        }
        if raw.jobs.is_some() {
            cfg.jobs = raw.jobs;
        }
        if raw.data_dir.is_some() {
            cfg.data_dir = raw.data_dir;
        }
        if raw.out_dir.is_some() {
            cfg.out_dir = raw.out_dir;
        }
        if raw.positive_class.is_some() {
            cfg.positive_class = raw.positive_class;
        }
    }

    if let (Some(_), Some(_)) = (overrides.lambda, overrides.epsilon) {
        return Err(Error::Config(
            "--lambda and --epsilon are mutually exclusive".into(),
        ));
    }
    if let Some(v) = overrides.data_dir.clone() {
        cfg.data_dir = Some(v);
    }
    if let Some(v) = overrides.out_dir.clone() {
        cfg.out_dir = Some(v);
    }
    if let Some(v) = overrides.patch_size {
        cfg.patch_sizes = vec![v];
    }
    if let Some(v) = overrides.components {
        cfg.component_counts = vec![v];
    }
    if let Some(v) = overrides.lambda {
        cfg.solver = SolverConfig::FixedLambda(v);
    }
    if let Some(v) = overrides.epsilon {
        cfg.solver = SolverConfig::EpsilonBound(v);
    }
    if let Some(v) = &overrides.classifier {
        cfg.classifier = parse_classifier(v)?;
    }
    if let Some(v) = overrides.trees {
        cfg.n_trees = v;
    }
    if overrides.mtry.is_some() {
        cfg.m_try = overrides.mtry;
    }
    if let Some(v) = overrides.cost {
        cfg.cost = v;
    }
    if let Some(v) = overrides.folds {
        cfg.k_folds = v;
    }
    if let Some(v) = overrides.seed {
        cfg.seed = v;
    }
    if overrides.jobs.is_some() {
        cfg.jobs = overrides.jobs;
    }

    validate(&cfg)?;
    Ok(cfg)
}

/// Check every invariant, naming each violation; all failures are collected
/// into one error.
pub fn validate(cfg: &PipelineConfig) -> Result<()> {
    let mut problems = Vec::new();
    if cfg.image_size == 0 {
        problems.push("image_size must be at least 1".to_string());
    }
    for &p in &cfg.patch_sizes {
        if p == 0 {
            problems.push("patch size 0 is invalid".to_string());
        } else if cfg.image_size % p != 0 {
            problems.push(format!(
                "patch size {p} does not divide image_size {}",
                cfg.image_size
            ));
        }
    }
    if cfg.component_counts.iter().any(|&k| k == 0) {
        problems.push("component counts must be at least 1".to_string());
    }
    if cfg.k_folds < 2 {
        problems.push(format!("k_folds must be at least 2, got {}", cfg.k_folds));
    }
    match cfg.solver {
        SolverConfig::FixedLambda(l) => {
            if !(l >= 0.0) || !l.is_finite() {
                problems.push(format!("lambda must be finite and non-negative, got {l}"));
            }
        }
        SolverConfig::EpsilonBound(e) => {
            if !(e >= 0.0) || !e.is_finite() {
                problems.push(format!("epsilon must be finite and non-negative, got {e}"));
            }
        }
    }
    if !(cfg.cost > 0.0) || !cfg.cost.is_finite() {
        problems.push(format!("cost must be positive and finite, got {}", cfg.cost));
    }
    if cfg.n_trees == 0 {
        problems.push("n_trees must be at least 1".to_string());
    }
    if cfg.m_try == Some(0) {
        problems.push("m_try must be at least 1".to_string());
    }
    if cfg.jobs == Some(0) {
        problems.push("jobs must be at least 1".to_string());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}
