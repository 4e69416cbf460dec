//! Visio-linguistic puzzle solving at desk scale.
//!
//! The pipeline grounds puzzle images in text (two-stage VQA-then-caption
//! enhancement), encodes them as a patch stream plus an object-level segment
//! stream, bridges both into a language decoder through learned query
//! tokens, and routes each puzzle to an option-key or a value specialist.
//! Predictions are scored with option selection accuracy and its weighted
//! variant.

pub mod caption;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod evaluator;
pub mod nn;
pub mod puzzle;
pub mod qformer;
pub mod raster;
pub mod regions;
pub mod router;
pub mod tokenizer;
pub mod trainer;
pub mod vision;

pub use error::{Error, Result};
