//! Outfit compatibility prediction and complementary item retrieval.
//!
//! Items are represented by the concatenation of a frozen image embedding and
//! a frozen text embedding. A transformer encoder without positional encodings
//! reads an outfit as a set: a learnable outfit token is prepended for
//! compatibility scoring, and a target-item token (blank image placeholder
//! followed by a description embedding) is prepended for retrieval. Retrieval
//! runs as an exact nearest-neighbour scan over per-item index embeddings.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, run
//! directories and the command line live in the `fashionrec` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod retrieval;
pub mod scalar;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Seeded generator used everywhere randomness is needed.
pub type SeedRng = rand_chacha::ChaCha8Rng;
