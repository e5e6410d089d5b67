//! Phrase-level copying for abstractive summarization.
//!
//! - [`textcore`]: tokenization, sentence splitting, n-grams, shared fragments
//! - [`copylabel`]: n-gram copy labels for the copy indicator
//! - [`metrics`]: fragment density, copy length, novelty, copied n-gram F1,
//!   entity coverage, overlap positions and ROUGE
//! - [`pseudodata`]: self-supervised pseudo document/summary pairs
//! - [`promnet`]: the copy-enhanced encoder-decoder with analytic gradients
//! - [`par`]: order-preserving parallel map (rayon, or sequential without
//!   the `parallel` feature)

pub mod copylabel;
pub mod error;
pub mod metrics;
pub mod par;
pub mod promnet;
pub mod pseudodata;
pub mod record;
pub mod textcore;

pub use error::{Error, Result};
