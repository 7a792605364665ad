//! Deterministic laboratory for the inference-as-auction view of transformers.
//!
//! The crate is split along the objects it studies: dense numerics, a finite
//! knowledge calculus, a brute-force VCG simulator, proper scoring rules, a
//! micro-transformer with full traces, and least-squares attribution.

pub mod attribution;
pub mod error;
pub mod fixtures;
pub mod knowledge;
pub mod mechanism;
pub mod microtransformer;
pub mod numerics;
pub mod scoring;
pub mod selftest;

pub use error::{Error, Result};
