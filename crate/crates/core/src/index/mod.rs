//! Sparse (BM25) and dense scoring primitives plus per-query min–max normalization.

mod bm25;
mod normalize;
mod tokenize;

pub use bm25::{Bm25Params, Posting, SparseField, SparseIndex, DEFAULT_B, DEFAULT_K1};
pub use normalize::{minmax, minmax_in_place, minmax_normalize, ScoreTable, DEGENERATE_MINMAX};
pub use tokenize::{is_stopword, tokenize, STOPWORDS};

use crate::embed::{cosine, EmbeddingVector};
use crate::error::Result;

/// Dense relevance of a target to a query: their cosine.
pub fn dense_score(query: &EmbeddingVector, target: &EmbeddingVector) -> Result<f64> {
    cosine(query, target)
}
