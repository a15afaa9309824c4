//! Model evaluation: stratified cross-validation, confusion-matrix metrics,
//! ROC/AUC, and the patch-size × component grid search.
//!
//! Standardization is a per-image affine map with no cross-image state, so
//! images standardized once upstream stay leak-free across folds; everything
//! that does learn from data (the dictionary, the classifier) is rebuilt
//! from each fold's training side only.

pub mod cv;
pub mod grid;
pub mod metrics;

pub use cv::{stratified_kfold, CvSplit};
pub use grid::{
    grid_search, CellResult, ClassifierParams, FoldMetrics, GridInput, GridParams, GridResults,
    MetricsReport, RocFold, WeightMode,
};
pub use metrics::{
    aggregate, bal_acc, balanced_auc, confusion, f1, multiclass_bal_acc, ovo_auc, precision,
    roc_points, sensitivity, specificity, trapezoid_auc, Aggregate, BinaryCounts, ConfusionMatrix,
    MetricValue, RocPoint,
};
