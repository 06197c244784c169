//! Desk-scale simulator and learning library for user tracking with a
//! Dynamic Metasurface Antenna (DMA) receiver.
//!
//! The pipeline has three stages: a DMA front end estimates multipath OFDM
//! channels from `N_E` pilot rounds ([`dma`]), an attention-based regression
//! network maps each channel estimate to a 2D position ([`mmhsa`]), and a
//! learnable autoregressive filter smooths the per-step estimates along a
//! trajectory ([`ar`]). Synthetic geometric multipath channels and Bézier
//! user trajectories are produced by [`chansim`], and [`fingerprint`] holds
//! the RSSI nearest-neighbor baseline.

pub mod ar;
pub mod autograd;
pub mod chansim;
pub mod dma;
pub mod error;
pub mod fingerprint;
pub mod io;
pub mod mmhsa;
pub mod rng;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
