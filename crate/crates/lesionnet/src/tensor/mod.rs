//! Dense float tensors, primitive layer kernels, and reverse-mode autodiff.

pub mod check;
pub mod ops;
pub mod shape;
pub mod storage;
pub mod tape;

pub use check::{grad_check, grad_check_sampled};
pub use ops::Activation;
pub use shape::{conv_out_extent, pool_out_extent, ConvSpec, Padding, Shape};
pub use storage::{Element, Tensor};
pub use tape::{GradStore, Tape, Var};
