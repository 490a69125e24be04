//! From-scratch deep-learning library for binary MRI lesion classification.
//!
//! The crate implements the full stack needed to train and evaluate
//! EfficientNet-style classifiers on volumetric scans without any external
//! ML framework:
//!
//! - [`tensor`]: dense `f32`/`f64` tensors, layer kernels (conv rank-2/3,
//!   pooling, dense, activations) and reverse-mode autodiff on a tape.
//! - [`nn`]: composite blocks: batch norm, squeeze-and-excitation, the
//!   mobile inverted bottleneck (MBConv), and the multiscale pooling branch.
//! - [`model`]: builders for EfficientNet (rank 2 and 3) with compound
//!   width/depth scaling, the multiscale fusion classifier, parameter
//!   counting, and the binary weight-file format.
//! - [`train`]: binary cross-entropy, Adam/SGD/RMSProp/Adadelta steps,
//!   early stopping on validation AUC, and the epoch loop.
//! - [`metrics`]: ROC-AUC via the pairwise rank statistic and trapezoidal
//!   integration, with both tie conventions.
//! - [`data`]: volume file I/O, label CSVs, preprocessing, augmentation,
//!   case-level splits, synthetic data generation, and the four-modality
//!   ensemble.
//! - [`experiment`]: the optimizer-sweep and model-benchmark protocols used
//!   by the CLI.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
