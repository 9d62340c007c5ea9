//! Robust transmit beamforming for downlink beam-based MISO power-domain
//! NOMA with norm-bounded channel-estimation error.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: channel, beam and error types; SINR, rate and QoS margins.
//! - [`sdp`]: a small dense interior-point SDP solver and Hermitian helpers.
//! - [`qt`]: the quadratic transform for sums of ratios and its SINR form.
//! - [`worst_case`]: worst-case CSI error through the Lagrangian dual.
//! - [`sdr`]: semidefinite-relaxation power minimisation and beam extraction.
//! - [`robust`]: the alternating robust design loop and its baselines.
//! - [`campaign`]: Monte Carlo experiments, configuration and export.
//! - [`sampling`]: channel and error draws and seed derivation.
//! - [`selftest`]: quick oracle checks behind the `selftest` command.

pub mod campaign;
pub mod error;
pub mod model;
pub mod qt;
pub mod robust;
pub mod sampling;
pub mod sdp;
pub mod sdr;
pub mod selftest;
pub mod worst_case;

pub use error::{Error, Result};
