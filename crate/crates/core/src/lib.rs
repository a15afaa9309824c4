//! Patch-based image classification built on PCA eigenspace dictionaries.
//!
//! The pipeline: standardize a grayscale image, cut it into non-overlapping
//! square patches, learn an orthonormal dictionary from the top principal
//! components of the training patches, sparse-code every patch against that
//! dictionary with an L1 penalty, and use the per-patch reconstruction errors
//! as a feature vector for a linear SVM (two classes) or a random forest
//! (more than two). Model selection runs a stratified k-fold grid over patch
//! size and component count.

pub mod classify;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod eigenspace;
pub mod imaging;
pub mod linalg;
pub mod pipeline;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
