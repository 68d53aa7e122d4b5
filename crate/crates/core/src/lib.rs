//! Divide-and-conquer multi-rate CSI feedback.
//!
//! The crate covers the whole pipeline: a geometric multipath generator for
//! massive-MIMO OFDM channels, pilot sampling and delay-domain truncation,
//! antenna-wise segmentation, a successive convolutional encoder whose single
//! down-sizing block is reused at every compression stage, per-rate decoders,
//! multi-rate training and NMSE / correlation / complexity evaluation.
//!
//! All neural-network math lives in [`nn`] and is written by hand so that it
//! can be checked against finite differences in 64-bit precision.

pub mod channel_gen;
pub mod config;
pub mod error;
pub mod eval;
pub mod nn;
pub mod preprocess;
pub mod run;
pub mod scenet;
pub mod seed;
pub mod training;

pub use error::{Error, Result};

/// Complex matrix type used for all CSI representations (antennas × columns).
pub type CsiMatrix = ndarray::Array2<num_complex::Complex64>;
