//! Frame-level expression classification from multimodal feature tracks.
//!
//! The pipeline: multirate feature tracks (face, audio, pose) are aligned
//! onto a 2 Hz grid and cut into trailing 12-sample windows; each modality
//! runs through a two-layer Elman encoder; cross-attention against the
//! current-frame face feature pools every temporal sequence; the contexts
//! are concatenated with the current face vector and classified by a fully
//! connected layer over 8 expression classes. Training uses softmax
//! cross-entropy, AdamW with decoupled weight decay, and reduce-on-plateau
//! learning-rate scheduling; evaluation reports per-class F1, macro-F1, and
//! accuracy.
//!
//! Everything is f64 and deterministic given a seed: gradients are exact and
//! verified against central finite differences, and training runs are
//! bit-reproducible. Data-parallel sections (batch gradients, evaluation,
//! corpus generation) run on rayon under the default `parallel` feature and
//! fall back to sequential execution without it, with identical results.

pub mod corpus;
pub mod datamodel;
mod error;
pub mod fusion;
pub mod metrics;
pub mod numerics;
pub mod parallel;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
