//! Set-level artistic style attribution over precomputed image embeddings.
//!
//! The pipeline tags images with interpretable concepts, mines per-artist
//! tag signatures, and attributes a set of images to an artist either by
//! matching signatures ([`tagmatch`]) or with a classifier ([`deepmatch`]).
//! [`harness`] runs both under the same evaluation protocols.

pub mod composer;
pub mod corpus;
pub mod deepmatch;
mod error;
pub mod harness;
pub mod synthetic;
pub mod tagger;
pub mod tagmatch;

pub use error::{Error, Result};
