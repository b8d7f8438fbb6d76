//! Knowledge graph embeddings (CP, ComplEx, RESCAL, TuckER) represented as
//! probabilistic circuits.
//!
//! Score functions are turned into tractable distributions over triples either
//! by restricting parameters to be non-negative or by squaring the score. Both
//! variants admit exact partition functions, marginals, conditionals and
//! sampling, and can be multiplied with domain-constraint circuits.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod constraints;
pub mod error;
pub mod evaluation;
pub mod kg_data;
pub mod models;
pub mod numeric;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
pub use kg_data::{KnowledgeGraph, Triple, Vocabulary};
pub use models::{Dims, Family, Model, ModelKind, Slot};
pub use numeric::DenseMatrix;
