//! Minimal reverse-mode differentiation over dense `f64` matrices.

mod adadelta;
mod gradcheck;
mod graph;
mod rng;
mod tensor;

pub use adadelta::AdadeltaState;
pub use gradcheck::{grad_check, grad_check_detailed, GradCheckReport, REL_FLOOR};
pub use graph::{masked_softmax, sigmoid, Gradients, Graph, NodeId};
pub use rng::{stream_rng, Stream};
pub use tensor::Tensor;
