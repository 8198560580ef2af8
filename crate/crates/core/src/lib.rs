//! Multi-user UFMC (universal filtered multicarrier) link model.
//!
//! The crate is organised bottom-up:
//!
//! * [`sigcore`] holds the complex kernels (DFT matrices, Toeplitz
//!   convolution, circulant checks) and the brute-force matrix oracles.
//! * [`waveform`] plans subbands, designs Dolph-Chebyshev subband filters,
//!   maps QAM and synthesizes UFMC symbols with zero padding or tail cutting.
//! * [`channel`] realizes tapped-delay-line Rayleigh channels and propagates
//!   a symbol stream with timing offset, inter-symbol overlap and noise.
//! * [`receiver`] implements the oversampled DFT front end, one-tap ZF/MMSE
//!   equalization and hard decisions.
//! * [`analysis`] evaluates the closed-form desired/ICI/ISI power split,
//!   SINR, capacity, BER approximations and the PBGR filter-length rule.
//! * [`optimizer`] searches filter and zero-padding lengths for capacity.
//! * [`montecarlo`] is the seeded simulation harness used as the
//!   statistical oracle for [`analysis`].
//! * [`scenario`] is the serializable experiment description shared with
//!   the command-line front end.

pub mod analysis;
pub mod channel;
mod error;
#[cfg(test)]
mod invariants;
pub mod montecarlo;
pub mod optimizer;
pub mod properties;
pub mod receiver;
pub mod scenario;
pub mod sigcore;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
