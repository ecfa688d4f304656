//! Rolling-Unrolling LSTMs for multi-modal egocentric action anticipation.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense row-major matrices, activations, softmax and the seeded RNG.
//! - [`nn`]: LSTM cell, linear layer, ReLU MLP and dropout with hand-written
//!   backward passes, SGD with momentum, finite-difference gradient checking and
//!   the `RUCK` checkpoint format.
//! - [`model`]: the rolling/unrolling branch, sequence-completion wiring, early,
//!   late and modality-attention fusion, the anticipation loss and verb/noun
//!   marginalization.
//! - [`dataio`]: vocabularies, manifests, `RUFT` feature stores, detections,
//!   timeline alignment and the synthetic dataset generator.
//! - [`training`]: the three-stage training protocol with early stopping.
//! - [`evaluation`]: Top-k accuracy, mean Top-k recall, time to action and
//!   minimum observation ratio.

pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{FusionModel, FusionStrategy, PredictionTimeline, RuBranch, TimelineSpec, UnrollMode};
pub use tensor::{Matrix, Rng};
