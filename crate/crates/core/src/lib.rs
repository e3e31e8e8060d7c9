//! Multimodal misinformation detection by measuring how far the text and
//! image of a post disagree.
//!
//! Each post's text and image embeddings are projected into a *fact* space
//! and a *sentiment* space. Inside each space the per-modality features are
//! evolved by a tension-weighted attraction field; the most strained pair
//! (the conflict) and the mean (the consensus) are standardized into a view
//! vector. The two view vectors are fused and classified as fake or real.
//!
//! ```no_run
//! use dccf::{data, harness, TrainConfig};
//!
//! let ds = data::generate_synthetic(&data::SynthSpec::default())?;
//! let config = TrainConfig::default();
//! let ds = data::split(&ds, config.split_fractions(), config.seed)?;
//! let outcome = harness::train(&config, &ds)?;
//! let report = harness::evaluate(&outcome.model, &ds, data::Split::Test)?;
//! println!("accuracy {:.3}", report.accuracy);
//! # Ok::<(), dccf::Error>(())
//! ```

pub mod config;
pub mod data;
pub mod disentangler;
pub mod error;
pub mod harness;
pub mod judgment;
pub mod numcore;
pub mod pipeline;
pub mod tensionfield;

pub use config::{Ablation, TrainConfig};
pub use data::{Dataset, Sample, Split, SynthSpec};
pub use error::{Error, Result};
pub use judgment::{Label, Prediction};
pub use pipeline::DccfModel;
