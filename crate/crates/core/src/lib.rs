//! Audio declipping by sparse time-frequency regularization.
//!
//! The crate provides the hard-clipping model and its metrics, a painless
//! Gabor frame, four social-sparsity shrinkage operators, a synthesis-model
//! FISTA solver and an analysis-model Loris-Verhoeven solver driven by
//! λ-continuation, plus an experiment harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clip;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod gabor;
pub mod shrinkage;
pub mod solvers;
pub mod wav;

pub use clip::{
    build_masks, delta_sdr_clipped, hard_clip, replace_reliable, sdr, threshold_for_input_sdr, ClipThreshold,
    SampleClass, SampleMasks, Signal,
};
pub use error::{Error, Result};
pub use gabor::{CoefGrid, FrameNormalization, GaborConfig, GaborFrame, TransformParams};
pub use shrinkage::{apply_shrinkage, Neighborhood, ShrinkageKind, ShrinkageSpec, WeightExponent, WeightGrid};
pub use solvers::{data_gradient, declip, declip_with_masks, DeclipConfig, SolverKind, SolverRun, Weighting};
