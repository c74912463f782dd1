//! Coherent DSCM transmission simulator and fiber-nonlinearity equalization
//! workbench.
//!
//! The crate covers the full chain of a digital-subcarrier-multiplexing
//! optical link study at desk scale:
//!
//! * [`signal`] — constellations, RRC pulse shaping, subcarrier mux/demux and
//!   the waveform/symbol containers shared by everything else.
//! * [`channel`] — dual-polarization fiber propagation (Manakov equation via
//!   adaptive split-step Fourier), EDFA noise loading and dispersion maps.
//! * [`rxdsp`] — linear receiver chain, digital back-propagation benchmark and
//!   EVM/BER/Q metrics.
//! * [`perturbation`] — first-order perturbation coefficient grids for
//!   iSPM/iXPM analysis and a least-squares triplet oracle (PNLC baseline).
//! * [`neural`] — the CNN + bidirectional-LSTM + MLP equalizer core with
//!   hand-rolled reverse-mode gradients, Adam and the training loop.
//! * [`nlc`] — the CC/SC/M1/M2 macro-architectures assembled from cores with
//!   weight sharing, block-mode inference, real-multiplication accounting and
//!   post-CDC delay alignment.

pub mod channel;
pub mod error;
pub mod fft;
pub mod neural;
pub mod nlc;
pub mod perturbation;
pub mod rxdsp;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;
