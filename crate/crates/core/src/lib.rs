//! Target-aware aerial video prediction: a two-branch encoder that jointly
//! forecasts future frames and the future bounding boxes of one tracked
//! target, with the training, evaluation and data tooling around it.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoders;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod ism;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod sta;
pub mod train;

pub use ablation::{Ablation, IsmConfig, RoiSource, StateSource};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{Inputs, Model, ModelConfig, Outputs};
