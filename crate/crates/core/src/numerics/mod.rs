//! Dense matrices and a reverse-mode gradient tape.

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{Gradients, NodeId, Tape};

pub(crate) use tape::{row_l2_normalize, row_logsumexp};
