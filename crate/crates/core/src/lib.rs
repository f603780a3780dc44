//! Whole-slide histopathology patch benchmark.
//!
//! The crate reproduces a classical patch classification and retrieval
//! experiment end to end:
//!
//! * [`tiler`] cuts grayscale scans into non-overlapping patches, drops
//!   background-dominated ones, whitens the rest and downsamples them;
//! * [`dataset`] holds the patch manifest with its train/test split and
//!   seeded per-class sampling;
//! * [`features`] turns prepared patches into vectors (intensity histogram,
//!   LBP, an ONNX network behind the `onnx` feature, or imported `PFV1`
//!   files);
//! * [`svm`] is a one-vs-rest linear SVM trained by dual coordinate descent;
//! * [`retrieval`] is exact k-nearest-neighbour search;
//! * [`metrics`] computes patch-to-scan, whole-scan and total accuracy.
//!
//! [`pipeline`] chains the stages and [`cli`] exposes them as the
//! `pathbench` executable. See the `examples/` directory for one runnable
//! program per capability.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod svm;
pub mod synth;
pub mod tiler;

pub use error::{Error, Result};
