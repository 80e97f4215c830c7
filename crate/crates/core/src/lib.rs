//! Log template mining, anomaly filtering and Bloom-encoded pattern sharing.
//!
//! Training turns raw log files into a small set of patterns (constant
//! tokens plus wildcards). Filtering drops every line that matches a trained
//! pattern or occurs too often, leaving the anomalies. The [`privacy`] module
//! lets independent deployments share what they learned as Bloom-filter
//! bitmaps instead of pattern text.

pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod filter;
mod jsonl;
pub mod metrics;
pub mod minhash_lsh;
pub mod parser;
pub mod pattern_model;
pub mod privacy;
pub mod seq_align;
pub mod tokenizer;

pub use config::Config;
pub use error::{Error, Result};
