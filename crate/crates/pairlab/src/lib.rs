//! Desk-scale laboratory for aspect-opinion pairing in sentiment triplet
//! extraction.
//!
//! The crate covers the full loop needed to study how aspect terms get
//! matched with the opinion terms that describe them:
//!
//! * [`corpus`] — the standard triplet line format (`sentence####[...]`),
//!   dataset statistics, and seeded synthetic corpora,
//! * [`codec`] — bidirectional conversion between triplet sets and the two
//!   generative target styles (annotation and extraction), with fuzzy
//!   normalization of imperfect generated terms,
//! * [`encoder`] — a small trainable text encoder plus span pooling, pair
//!   embeddings and description embeddings,
//! * [`pairing`] — the three pairing strategies (random, linear head,
//!   contrastive against description prototypes) and their losses,
//! * [`trainer`] — seeded AdamW training with analytic gradients and a
//!   finite-difference gradient checker,
//! * [`eval`] — exact-match triplet/pair F1, strategy comparison and a 2D
//!   embedding export.
//!
//! Everything is deterministic given a seed: corpora, initialization,
//! batching, dropout masks and checkpoints.

pub mod checkpoint;
pub mod codec;
pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod pairing;
pub mod trainer;

pub use error::{Error, Result};
