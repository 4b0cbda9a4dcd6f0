//! Interpretable human-likeness judge for speech-to-speech dialogue embeddings.
//!
//! The pipeline has two stages. An ordinal scoring head ([`odl`]) maps a
//! dialogue embedding to 18 latent human-likeness scores, each read out as a
//! distribution over rating levels. A linear classifier ([`classifier`]) then
//! separates human from machine dialogues using those scores, and
//! [`attribution`] explains each decision dimension by dimension.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod checkpoint;
pub mod classifier;
pub mod cli;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod odl;
pub mod pipeline;
pub mod readout;
pub mod registry;
pub mod search;
pub mod synth;

pub use checkpoint::Model;
pub use error::{Error, Result};
