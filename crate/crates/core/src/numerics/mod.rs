//! Dense tensors, a reverse-mode tape, and a finite-difference checker.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::finite_difference_check;
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{sigmoid, softmax_row, Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;
