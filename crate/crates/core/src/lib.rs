//! Unified feature selection and feature projection with gated MLPs.
//!
//! A gate layer in front of an MLP backbone learns which input columns to
//! keep while a projector maps the backbone output to a low-dimensional
//! embedding. Both are trained jointly so that the embedding preserves the
//! k-NN structure of the data under augmentation.

pub mod augment;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod objective;
pub mod registry;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::AttributedGraph;
pub use model::{Architecture, UdrnModel};
pub use tensor::Matrix;
pub use trainer::{train, TrainConfig, TrainReport, TrainedModel};
