//! Toolkit for metadata-conditioned symbolic music: a token codec over a
//! fixed 729-entry vocabulary, MIDI ingestion and augmentation, chord-constrained
//! autoregressive generation, objective metrics, and multi-track combination.

pub mod codec;
pub mod combiner;
pub mod generator;
pub mod metrics;
pub mod midi;
pub mod preprocess;
pub mod types;
pub mod vocab;

pub use codec::{decode, encode, validate_grammar, GrammarReport, TokenSequence};
pub use types::*;
pub use vocab::{Token, VOCAB_SIZE};
