//! Periodic Gaussian hashing (PGHash) and LSH-pruned training.
//!
//! The crate is `no_std` with `alloc`. It contains:
//!
//! - [`fold`]: the `(d, c)`-folding operator and its permute-truncate variant
//! - [`hash`] and [`table`]: SimHash, PGHash, DWTA and PGHash-D hash families, codes and tables
//! - [`sampling`]: neuron selection from hash tables (exact match, Hamming, uniform)
//! - [`net`]: a two-layer recommender network whose output layer can be evaluated
//!   and trained on a subset of neurons
//! - [`fed`]: an in-process simulator of distributed PGHash training with byte and
//!   memory accounting
//! - [`data`]: sparse multi-label examples and a seeded synthetic generator
//!
//! IO, file formats, the statistics lab and the command-line tool live in the
//! `pghash` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod fed;
pub mod fold;
pub mod hash;
pub mod matrix;
pub mod net;
pub mod rng;
pub mod sampling;
pub mod table;

pub use error::{Error, Result};
pub use fold::{FoldKind, FoldingOperator};
pub use hash::{hamming, ArgmaxRule, HashCode, HashFamily, HashFunction};
pub use matrix::Matrix;
pub use sampling::{NeuronSet, SamplingConfig, Strategy};
pub use table::HashTable;
