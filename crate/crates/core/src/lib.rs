//! Multi-view vulnerability classifier for Java snippets.
//!
//! The library turns a code snippet into four views — an abstract syntax
//! tree adjacency matrix, a control flow graph, a data flow graph, and a
//! token-embedding matrix — fuses them through per-view self-attention
//! encoders, and classifies the fused matrix with a small convolutional
//! network and multilayer perceptron. Everything, including reverse-mode
//! gradients and the Adam optimizer, is implemented in-crate so training
//! runs are bit-deterministic under a fixed seed.

pub mod config;
pub mod embedding;
pub mod error;
pub mod frontend;
pub mod graphs;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
