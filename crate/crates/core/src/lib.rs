//! Dialogue state tracking with domain transfer by policy gradient.
//!
//! A slot/value tracker is pretrained with turn-level supervision on one
//! domain and then adapted to another domain using only a scalar reward
//! computed at the end of each dialogue.

pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod numerics;
pub mod pg;
pub mod statenet;
pub mod supervised;

mod error;
#[cfg(test)]
mod testutil;

pub use error::{Error, Location, Result};
