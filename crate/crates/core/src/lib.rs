//! Big, deep, plain multilayer perceptrons trained with on-line
//! back-propagation on continually deformed MNIST digits.
//!
//! The crate is organised bottom-up:
//!
//! - [`mnist_io`]: IDX parsing, pixel normalization, dataset handling.
//! - [`deform`]: elastic + affine deformation of training digits.
//! - [`network`]: the MLP model, scaled tanh, initialization, checkpoints.
//! - [`kernels`]: forward / backward / update passes, both as naive
//!   reference loops and as a tiled, optionally parallel variant.
//! - [`trainer`]: the epoch loop with learning-rate decay and
//!   best-validation model selection.
//! - [`eval_report`]: test-set evaluation, confusion matrix, second guesses.
//! - [`bench`]: throughput measurement.
//!
//! All randomness is derived from a single seed through [`rng::Streams`].

pub mod bench;
pub mod deform;
pub mod eval_report;
pub mod kernels;
pub mod mnist_io;
pub mod network;
pub mod pgm;
pub mod rng;
pub mod trainer;

pub use deform::{DeformParams, DisplacementField, NormImage};
pub use eval_report::{evaluate, EvalReport};
pub use kernels::{Engine, TileScheme, Variant};
pub use mnist_io::{Dataset, Label, RawImage, Split};
pub use network::{Architecture, Checkpoint, Classifier, Layer, Mlp, Real};
pub use rng::Streams;
pub use trainer::{train, TrainConfig, TrainResult};
