//! One-to-many transformer translation with configurable parameter sharing.
//!
//! The library is organized around one idea: every weight matrix in the
//! model is an addressable *slot*, and a sharing plan partitions the slots
//! into groups that alias a single storage cell. A plan that shares nothing
//! trains independent per-target decoders inside one process; a plan that
//! shares everything collapses to a single joint model; the interesting
//! configurations live in between.

pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod sharing;
pub mod tensor;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
