//! Minimal reverse-mode automatic differentiation over dense tensors.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_many, relative_error, DEFAULT_STEP};
pub use tape::{Gradients, Precision, Tape, Var};
pub use tensor::Tensor;
