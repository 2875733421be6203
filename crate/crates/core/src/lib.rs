//! Contrastive musical-instrument retrieval at desk scale.
//!
//! The crate covers the whole pipeline:
//!
//! - [`synthbank`]: a seeded procedural bank of virtual instruments and a
//!   deterministic renderer with a toggleable effect chain;
//! - [`datasetgen`]: family note distributions, scores, positive pairs,
//!   contrastive minibatches and instrument mixtures;
//! - [`dspfeatures`]: log-Mel spectrograms and a handcrafted timbre
//!   descriptor baseline;
//! - [`encoder`]: a small pooled-Mel MLP with InfoNCE, triplet, full triplet,
//!   classification and multi-encoder objectives, exact gradients and an
//!   Adam/SGD training loop;
//! - [`retrieval`]: embedding databases, exact cosine query-by-example and
//!   top-k evaluation for single sounds and mixtures;
//! - [`experiment`]: config-driven orchestration used by the `timbre` CLI.

pub mod audio;
pub mod config;
pub mod datasetgen;
pub mod dspfeatures;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod retrieval;
pub mod rng;
pub mod synthbank;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use synthbank::{Family, InstrumentPatch, NoteEvent};
