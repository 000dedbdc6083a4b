//! Hierarchical coarse-to-fine multimodal retrieval.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod engine;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod index;
pub mod jsonl;
pub mod packing;
pub mod retrieval;

pub use error::{Error, Result};
