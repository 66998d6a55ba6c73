//! Statistics lab, dataset formats and the command-line driver built on
//! [`pghash_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod lab;
pub mod output;
pub mod xc;

pub use error::{Error, Result};
