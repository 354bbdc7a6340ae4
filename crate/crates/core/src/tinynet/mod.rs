//! A small feature-pyramid network trained with the Window Loss.
//!
//! [`tape`] is the reverse-mode core; [`model`] builds the network on it;
//! [`adam`], [`augment`] and [`train`] make up the training loop; and
//! [`checkpoint`] stores weights.

pub mod adam;
pub mod augment;
pub mod checkpoint;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use adam::Adam;
pub use augment::{augment, AugmentConfig};
pub use model::{merge_pyramid, Forward, ModelConfig, PyramidOutput, TinyNet};
pub use tape::{Grads, Param, ParamStore, Tape, Var};
pub use tensor::Tensor;
pub use train::{evaluate_auroc, load_split, train, train_with, EpochLog, Sample, TrainConfig, TrainOutcome};
