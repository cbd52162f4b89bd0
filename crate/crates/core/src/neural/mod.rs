//! From-scratch differentiable numeric core: dense tensors, LSTM cells,
//! bidirectional encoders, affine layers, softmax cross-entropy, and SGD.
//!
//! Gradients are computed by hand-written reverse-mode passes over the
//! caches each forward pass records. Everything runs in double precision;
//! with a fixed seed all of it is bit-reproducible.

mod layers;
mod lstm;
mod optimizer;
mod tensor;

pub use layers::{softmax_xent, Affine};
pub use lstm::{BiEncoderParams, GateParams, LstmCellParams, LstmStepCache};
pub use optimizer::{sgd_step, Sgd};
pub use tensor::Tensor;

pub(crate) use lstm::BiRun;
pub(crate) use tensor::{add_assign, argmax};
