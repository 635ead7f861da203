//! Retrieval-augmented question answering with an offline-testable
//! evaluation harness.
//!
//! The pipeline is split the usual way: documents are chunked
//! ([`chunking`]), embedded ([`embedding`]) and indexed twice ([`index`]: a
//! BM25 inverted index and an exact vector index); a [`retrieval`] pipeline
//! selects context for a question; [`generation`] renders a grounded prompt,
//! calls a chat backend and parses the answer; [`metrics`] scores answers
//! against gold references; [`bench`] runs factorial experiment sweeps and
//! aggregates the results.

pub mod bench;
pub mod chunking;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod generation;
pub mod index;
pub mod metrics;
#[cfg(feature = "remote")]
pub mod remote;
pub mod retrieval;

pub use error::{Error, Result};
