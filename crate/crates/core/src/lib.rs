pub mod autodiff;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
#[cfg(doctest)]
mod guide;
pub mod nn;
pub mod penalty;
pub mod protocol;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
