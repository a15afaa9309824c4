//! Classifiers over reconstruction-error features: a class-weighted linear
//! SVM for two-class problems and a random forest for multiclass ones.

pub mod forest;
pub mod svm;

pub use forest::{load_forest, rf_margin, rf_predict, rf_train, save_forest, RfModel};
pub use svm::{load_svm, save_svm, svm_predict, svm_train, ClassWeights, SvmModel};
