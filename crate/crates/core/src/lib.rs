//! Multi-domain debiasing toolkit for extractive question answering.
//!
//! The crate is organised as a file-based pipeline:
//!
//! * [`corpus`] ingests SQuAD / MRQA data, tokenizes it and aligns answers to
//!   token spans, and generates synthetic desk-scale datasets.
//! * [`spanmodel`] holds the span-prediction encoder, decoding, training and
//!   teacher-output caching.
//! * [`bias`] scores examples with a lexical-overlap bias model and turns its
//!   predictions into per-example bias weights.
//! * [`distill`] smooths teacher distributions by bias weight and trains a
//!   student across one or more domains.
//! * [`metrics`] implements SQuAD v1.1 exact match and F1.
//! * [`analysis`] classifies wrong predictions into an error taxonomy and
//!   builds error-reduction reports.

pub mod analysis;
pub mod bias;
pub mod corpus;
pub mod distill;
mod error;
pub mod jsonl;
pub mod metrics;
pub mod prob;
pub mod spanmodel;
pub mod text;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
