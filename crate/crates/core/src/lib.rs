//! Early-reflection analysis for Ambisonic recordings.
//!
//! The crate simulates spherical-harmonic room impulse responses, estimates
//! relative direction-of-arrival-dependent RIRs (RD-RIRs) and time-domain
//! velocity vectors from reverberant recordings, extracts echo delays and
//! directions from them, and scores the result against ground truth.

pub mod axis;
pub mod cli;
pub mod config;
pub mod echoes;
pub mod error;
pub mod evalkit;
pub mod gfvv;
pub mod io;
pub mod ism;
pub mod pipeline;
pub mod rdrir;
pub mod sh;
pub mod signal;
pub mod spectral;

pub use axis::{CenteredMatrix, GtvvMatrix};
pub use error::{Error, Result};
pub use sh::{Beamformer, Direction, DirectionGrid};
pub use signal::AmbisonicSignal;
