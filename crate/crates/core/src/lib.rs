//! Continuous-time multi-state capture-recapture (Arnason-Schwarz) model.
//!
//! Encounter histories recorded at irregular capture occasions are treated as
//! realisations of a partially observed continuous-time Markov chain with
//! alive states `1..=M` and an absorbing death state `M + 1`. The crate
//! provides:
//!
//! - [`linalg`]: small dense matrices, intensity and transition matrices and
//!   their exponentials;
//! - [`data`]: occasion grids with survey effort and encounter histories;
//! - [`model`]: covariate links (seasonal trigonometric intensities, individual
//!   covariates) and the piecewise-constant intensity approximation;
//! - [`likelihood`]: the forward algorithm plus a brute-force enumeration;
//! - [`inference`]: maximum likelihood fitting, Wald intervals, Monte Carlo
//!   intensity bands and interval-length sweeps;
//! - [`decode`]: Viterbi and forward-backward decoding;
//! - [`simulate`]: synthetic encounter data from day-constant seasonal chains.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. With `std`, likelihood evaluation and fitting run in parallel via
//! rayon and fits record wall-clock time.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

extern crate alloc;

pub mod data;
pub mod decode;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod simulate;

mod math;
mod par;

pub use error::{Error, Issue, Result};
