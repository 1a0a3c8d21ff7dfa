//! Sleep stage classification from heart rate and triaxial wrist actigraphy.
//!
//! The pipeline runs in four steps:
//!
//! 1. [`ingest`] parses and epochs recordings into 30 s windows.
//! 2. [`features`] extracts per-epoch low-level features (mean RR, DCT
//!    frequency stack, actigraphy cepstra), learns a k-means dictionary and
//!    appends distance-to-word features, then z-scores.
//! 3. [`network`] and [`training`] hold a from-scratch (B)LSTM / MLP
//!    sequence classifier with exact backpropagation through time.
//! 4. [`eval`] scores predictions and runs subject-independent cross-validation.
//!
//! [`synth`] generates cohorts with known stage statistics for testing, and
//! [`config`] / [`model_file`] own the on-disk formats.

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model_file;
pub mod network;
pub mod pipeline;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
