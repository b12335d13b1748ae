//! Retriever-agnostic engine for four-stage retrieval: exact dense probe
//! retrieval, LLM compensatory-query synthesis, secondary retrieval, and
//! LLM verification/reranking, together with an evaluation and ablation
//! harness that runs fully offline against a deterministic mock oracle or
//! online against any OpenAI-compatible endpoint.

pub mod embed;
pub mod error;
pub mod eval;
pub mod harness;
pub mod ingest;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod report;
pub mod synthbench;
pub mod trace;
pub mod vector_index;

pub use error::{ErrorClass, HiveError, Result};
