//! Reverse-mode differentiation, Adam, and a finite-difference oracle.

mod adam;
mod gradcheck;
mod graph;
mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{finite_difference_gradient, max_relative_error, relative_error};
pub use graph::{Gradients, Graph, NodeId, COSINE_EPS};
pub use params::Params;
pub use ops::{cosine_similarity, gru_cell, softmax, GruNodes};
pub use tensor::Tensor;
