//! Paraphrase question generation with a pairwise discriminator.
//!
//! An LSTM encoder-decoder is trained with a per-token cross-entropy loss
//! and a batch-level pairwise margin loss computed by re-encoding generated
//! and ground-truth sentences. The crate also carries the downstream pieces:
//! corpus ingestion, generation metrics, a rank-based significance test, and
//! a frozen-embedding sentiment classifier.

pub mod config;
pub mod corpus;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod training;
