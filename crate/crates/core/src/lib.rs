//! Unsupervised question retrieval: an attention autoencoder trained on raw
//! forum questions supplies word representations, and a learning-free matcher
//! reranks search-engine candidates with them.
//!
//! Modules, bottom-up: [`text`] turns raw questions into token id sequences,
//! [`kernel`] holds the dense linear algebra and attention primitives,
//! [`autoencoder`] trains the representation model, [`matcher`] scores and
//! reranks candidates, and [`eval`] computes MAP and MRR.

pub mod autoencoder;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod matcher;
pub mod text;

pub use error::{Error, Result};
