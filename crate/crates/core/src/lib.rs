//! Trigger-set watermarking for text classifiers.
//!
//! Pipeline: [`corpus`] loads and normalizes labeled text, [`tfidf`] ranks
//! the words of each document, [`trigger`] builds the watermark key by
//! exchanging low-ranked words between documents of different classes and
//! swapping their labels, [`classifier`] trains the model the key is
//! embedded in, and [`watermark`] verifies ownership of any label-only
//! oracle. [`evalsuite`] runs the evaluation battery.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod demo;
pub mod error;
pub mod evalsuite;
pub mod seed;
pub mod tfidf;
pub mod trigger;
pub mod watermark;

pub use error::{Error, Result};
