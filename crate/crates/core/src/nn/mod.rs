//! Layers, initializers and forward passes for the MLP and convnet families.

mod arch;
pub mod checkpoint;
mod init;
mod model;

pub use arch::{Architecture, Head, LayerKind, LayerSpec};
pub use init::{glorot_bound, glorot_uniform, kaiming_bound, kaiming_uniform, Init};
pub use model::{argmax_rows, softmax_cross_entropy, softmax_rows, ForwardTrace, Model};
