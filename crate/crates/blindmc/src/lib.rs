//! Multichannel blind deconvolution under a gain-and-subspace channel model.
//!
//! One unknown source signal x drives M channels; channel m observes the
//! circular convolution of x with an unknown impulse response limited to K
//! taps, plus noise. Each response is further modeled as an unknown per-
//! channel gain times a known K×D basis applied to a coefficient vector
//! shared by all channels:
//!
//! ```text
//!   y_m = h_m ⊛ x + w_m,      h_m = a_m · Φ_m · b,    m = 1..M.
//! ```
//!
//! The library recovers the responses (up to the inherent global scale
//! ambiguity) from the outputs alone, by cross-correlating channel pairs:
//!
//! * `cc_estimate` — the classical baseline: the minimum eigenvector of the
//!   cross-convolution Gram matrix over all MK taps.
//! * `sccc_estimate` — the same program restricted to the span of the
//!   basis, with a noise-compensating shift.
//! * `spectral_init` + `alt_eig` — spectral initialization of the shared
//!   coefficients followed by alternating minimum-eigenvector updates of
//!   gains and coefficients.
//! * `spectral_init` + `rtpm` — the same initialization followed by a
//!   shifted power method whose iterates are truncated to rank one in the
//!   gain×coefficient matrix layout.
//!
//! A seeded Monte Carlo harness (`sim`) measures recovery error across
//! parameter sweeps and phase-transition grids, and the `blindmc` binary
//! exposes everything on the command line. All randomness is reproducible:
//! any run is a pure function of its configuration, including the master
//! seed and regardless of thread count.

pub mod algorithms;
pub mod cli;
pub mod crosscorr;
pub mod eig;
pub mod error;
pub mod io;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
