//! Dense matrices, a reverse-mode tape, and the optimizer.

mod adamw;
mod init;
mod matrix;
pub mod ops;
mod tape;

pub use adamw::{AdamW, AdamWConfig};
pub use init::kaiming_init;
pub use matrix::Matrix;
pub use tape::{fuzzy_ce_value, Gradients, NodeId, Tape};
