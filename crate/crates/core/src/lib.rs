//! Corpus-based term set expansion.
//!
//! A corpus is ingested, candidate terms are grouped and indexed, five
//! kinds of context are extracted and one SGNS embedding model is trained
//! per kind. Candidates near a seed set are scored by ten similarity
//! features and combined into a certainty by a small MLP.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the usual single-precision choice.

pub mod contexts;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod expansion;
pub mod pipeline;
pub mod scalar;
pub mod similarity;
pub mod terms;

/// Identifier of a term group.
pub type GroupId = u32;

pub use contexts::ContextType;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Embeddings = embedding::ContextEmbeddingModel<f32>;
pub type Models = similarity::ModelSet<f32>;
pub type Mlp = expansion::MlpModel<f32>;
pub type Candidate = expansion::ExpansionCandidate<f32>;
pub type Category = expansion::Category<f32>;
pub type Engine = pipeline::SetExpander<f32>;

pub type Embeddings64 = embedding::ContextEmbeddingModel<f64>;
pub type Models64 = similarity::ModelSet<f64>;
pub type Mlp64 = expansion::MlpModel<f64>;
pub type Engine64 = pipeline::SetExpander<f64>;
