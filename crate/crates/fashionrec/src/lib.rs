//! File formats, corpus loaders, run directories and the command line for
//! the `fashionrec-core` models.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod emb;
pub mod error;
pub mod io;
pub mod orix;
pub mod polyvore;
pub mod run;

pub use error::{Error, Result};
