//! Classification of grocery products into taxonomy varieties from their
//! label text.
//!
//! The pipeline cleans a catalog, turns each product's name, legal name and
//! ingredients into a set of words, and then either ranks varieties directly
//! with a BM25-style score over a variety × word count matrix, or projects
//! the binary product matrix with PCA and applies KNN, fuzzy KNN, gradient
//! boosted trees or a multilayer perceptron. Every classifier returns a
//! [`RankedPrediction`], from which Top-1/2/3 sets are evaluated.

pub mod bm25;
pub mod boosted;
pub mod catalog;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod matrix;
pub mod mlp;
pub mod neighbors;
pub mod pipeline;
pub mod ranking;
pub mod reduce;
pub mod synth;
pub mod textprep;
pub mod tuning;
pub mod vectorize;

pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
pub use ranking::{RankedPrediction, Scored};
