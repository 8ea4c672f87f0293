//! Dense-tensor numerics: 1-D convolution, batch normalization, affine and
//! pooling layers with hand-derived backward passes, SGD, and a
//! finite-difference gradient checker.
//!
//! Layers are small structs that cache what their backward pass needs.
//! Calling `backward` before `forward` is a state error.

mod batch_norm;
mod conv;
pub mod grad_check;
mod ops;
mod params;
mod real;
mod sgd;
mod tensor;

pub use batch_norm::{BatchNorm1d, BatchNormGrads, BnMode, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use conv::{conv1d_forward, conv1d_output_len, Conv1d, Conv1dGrads};
pub use grad_check::{grad_check, GradCheckConfig, GradCheckReport, Probe};
pub use ops::{
    dense, global_avg_pool, l2_normalize_rows, pattern_signature, relu, Dense, DenseGrads,
    GlobalAvgPool, L2Normalize, Normalized, Relu,
};
pub use params::{Entry, EntryKind, ParameterSet, Partition};
pub use real::{Precision, Real};
pub use sgd::sgd_step;
pub use tensor::Tensor;
