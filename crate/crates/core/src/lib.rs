//! Cell-level error detection for relational tables.
//!
//! The pipeline has three parts:
//!
//! * [`qta`] splits each cell into at most `N` tokens of at most `D`
//!   characters with a backtracking tokenizer and embeds the tokens as
//!   scaled Unicode code points.
//! * [`profiler`] picks `D` and `N` (and their compact variants) from
//!   frequency histograms over the corpus.
//! * [`pat_net`] classifies each cell with a pre-norm transformer encoder
//!   whose input interleaves data tokens with learned, attribute-specific
//!   pattern tokens. [`trainer`] fits it and [`explain`] turns its last
//!   layer attention into per-token heatmap vectors.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, CSV
//! ingestion and the command line live in the companion `pat` crate.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod explain;
pub mod pat_net;
pub mod profiler;
pub mod qta;
pub mod trainer;

pub use error::{Error, Result};
