//! File formats, IO and the command line for the `pat_core` detector.
// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binfmt;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod lexicon_io;
pub mod pipeline;
pub mod report;
pub mod table_io;

pub use error::{PatError, Result};
