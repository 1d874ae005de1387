//! Weak-label audio tagging with a visual side channel.
//!
//! The audio branch trains a frame-level scorer under the multiple-instance
//! assumption (a clip is positive for an event iff some frame is) with
//! max-pooled clip scores. The video branch picks key frames by sparse
//! representative selection, pools per-frame object distributions, and maps
//! objects onto sound events through word-embedding cosine similarity. The two
//! branches are fused per event and binarized with class-specific thresholds
//! tuned for micro-averaged F1.

// `!(x > 0.0)` is deliberate throughout: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod fuse;
pub mod io;
pub mod metrics;
pub mod mil;
pub mod pipeline;
pub mod repsel;
pub mod synth;
pub mod vmap;

pub use domain::{ClipBag, Dataset, EventTaxonomy, ScoreMatrix, ThresholdVector};
pub use error::{Error, Result};
