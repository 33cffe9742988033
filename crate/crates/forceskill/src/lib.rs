//! File formats, model archive, plots and the command-line interface of
//! forceskill.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod cli;
pub mod config;
pub mod demo_io;
pub mod error;
pub mod exec_log;
pub mod plot;
pub mod scene;

pub use error::{IoError, Result};
