//! Encoder-decoder translation with syntax-directed attention.
//!
//! The decoder can attend globally, through a local Gaussian window, through
//! a dependency-tree distance mask, or through both a global and a
//! syntax-directed context at once. Everything runs on a small built-in
//! reverse-mode differentiation engine in 64-bit floats.

pub mod attention;
pub mod cli;
pub mod deptree;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod model;

pub use error::{Error, Result};
