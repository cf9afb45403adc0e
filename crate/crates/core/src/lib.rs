//! Cooperative active/passive OFDM sensing between two base stations.
//!
//! SBS1 senses monostatically while receiving SBS2's signal bistatically.
//! The bistatic path carries unknown timing and carrier frequency offsets;
//! cross-correlating the two channel estimates exposes those offsets so the
//! passive echoes can be moved onto monostatic coordinates and fused.
//!
//! Pipeline: [`synth`] → [`extract`] → [`cccs`] → [`estimate`] → [`aoa`],
//! scored by [`metrics`] and driven by [`harness`].

pub mod aoa;
pub mod cccs;
pub mod config;
pub mod dsp;
pub mod error;
pub mod estimate;
pub mod extract;
pub mod harness;
pub mod metrics;
pub mod scenario;
pub mod synth;

pub use error::{Error, Result};
