//! Joint blind identification of the number of MIMO transmit antennas and the
//! space-time/space-frequency coding scheme from received baseband samples.
//!
//! The pipeline restructures received samples into sliding windows, estimates
//! window covariances, compresses their Gerschgorin radii after a unitary
//! similarity transform, regresses subspace-rank features with small
//! feed-forward networks and decides the scheme with a weighted norm-1
//! distance over a 17-entry scheme registry. Single-carrier, STBC-OFDM and
//! SFBC-OFDM front-ends are provided together with a transmitter/channel
//! simulator and a seeded Monte Carlo harness.

pub mod channel;
pub mod classifier;
pub mod error;
pub mod fnn;
pub mod harness;
pub mod mat;
pub mod schemes;
pub mod subspace;
pub mod txchain;

pub use error::{Error, Result};
