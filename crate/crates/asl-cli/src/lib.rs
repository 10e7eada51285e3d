//! Command implementations for the `asl` binary: the training pipeline,
//! evaluation and prediction, dataset export, and the architecture summary.
//!
//! Everything here is a thin orchestration layer over `asl_core`; the
//! binary in `main.rs` only parses arguments and maps errors to exit
//! codes, so integration tests can drive the same code paths directly.

pub mod eval;
pub mod images;
pub mod summary;
pub mod train;
