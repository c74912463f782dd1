//! Waveform and symbol containers plus the Tx/Rx signal-processing
//! primitives: constellation mapping, RRC shaping, subcarrier mux/demux.
//!
//! All types are immutable values after construction and every operation is
//! a pure function, so concurrent use needs no synchronisation.

mod constellation;
mod io;
mod mux;
mod shaping;

pub use constellation::{map_symbols, Constellation};
pub use io::{read_frame, read_waveform, write_frame, write_waveform, WaveformHeader};
pub use mux::{demux_subcarrier, mux_subcarriers, PowerNorm};
pub use shaping::{freq_shift, resample, rrc_matched_decimate, rrc_shape, rrc_spectrum};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Sampled complex field with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeq {
    pub(crate) samples: Vec<Complex64>,
    pub(crate) rate: f64,
}

impl ComplexSeq {
    pub fn new(samples: Vec<Complex64>, rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Shape("ComplexSeq must not be empty".into()));
        }
        if !(rate > 0.0) {
            return Err(Error::Config(format!("sample rate must be > 0, got {rate}")));
        }
        Ok(Self { samples, rate })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean power per sample (|s|^2 averaged).
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// Dual-polarization sampled field. Both rails share rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolWaveform {
    pub(crate) x: ComplexSeq,
    pub(crate) y: ComplexSeq,
    /// Nominal combined launch power carried as metadata (dBm).
    pub center_power_dbm: f64,
}

impl DualPolWaveform {
    pub fn new(x: ComplexSeq, y: ComplexSeq, center_power_dbm: f64) -> Result<Self> {
        if x.rate != y.rate {
            return Err(Error::Shape(format!(
                "polarization rates differ: {} vs {}",
                x.rate, y.rate
            )));
        }
        if x.len() != y.len() {
            return Err(Error::Shape(format!(
                "polarization lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Ok(Self { x, y, center_power_dbm })
    }

    pub fn x(&self) -> &ComplexSeq {
        &self.x
    }

    pub fn y(&self) -> &ComplexSeq {
        &self.y
    }

    pub fn rate(&self) -> f64 {
        self.x.rate
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    /// Combined mean power of both polarizations, in watts.
    pub fn total_power_w(&self) -> f64 {
        self.x.mean_power() + self.y.mean_power()
    }

    pub fn total_power_dbm(&self) -> f64 {
        watts_to_dbm(self.total_power_w())
    }

    /// Rescales both rails so the combined mean power hits `target_dbm`.
    pub fn with_power_dbm(&self, target_dbm: f64) -> Self {
        let current = self.total_power_w();
        let scale = (dbm_to_watts(target_dbm) / current).sqrt();
        let mut out = self.clone();
        for s in out.x.samples.iter_mut().chain(out.y.samples.iter_mut()) {
            *s *= scale;
        }
        out.center_power_dbm = target_dbm;
        out
    }
}

/// One subcarrier's symbol streams for both polarizations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolSymbols {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Per-subcarrier, per-polarization complex symbol sequences aligned in time.
///
/// Holds either transmitted hard symbols or received soft symbols; a
/// "super-symbol" is one time instance across all subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierSymbolFrame {
    pub(crate) subcarriers: Vec<PolSymbols>,
    pub(crate) baud_per_subcarrier: f64,
    pub(crate) roll_off: f64,
}

impl SubcarrierSymbolFrame {
    pub fn new(
        subcarriers: Vec<PolSymbols>,
        baud_per_subcarrier: f64,
        roll_off: f64,
    ) -> Result<Self> {
        if subcarriers.is_empty() {
            return Err(Error::Shape("frame needs at least one subcarrier".into()));
        }
        if !(0.0..=1.0).contains(&roll_off) {
            return Err(Error::Config(format!("roll-off must be in [0,1], got {roll_off}")));
        }
        let n = subcarriers[0].x.len();
        for (i, sc) in subcarriers.iter().enumerate() {
            if sc.x.len() != n || sc.y.len() != n {
                return Err(Error::Shape(format!(
                    "subcarrier {i} length mismatch: expected {n}"
                )));
            }
        }
        if n == 0 {
            return Err(Error::Shape("empty symbol sequences".into()));
        }
        Ok(Self { subcarriers, baud_per_subcarrier, roll_off })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.subcarriers.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.subcarriers[0].x.len()
    }

    pub fn baud_per_subcarrier(&self) -> f64 {
        self.baud_per_subcarrier
    }

    pub fn roll_off(&self) -> f64 {
        self.roll_off
    }

    pub fn subcarrier(&self, idx: usize) -> &PolSymbols {
        &self.subcarriers[idx]
    }

    pub fn subcarriers(&self) -> &[PolSymbols] {
        &self.subcarriers
    }

    /// Swaps the X and Y streams of every subcarrier. Applying twice is the
    /// identity; the equalizer relies on this to reuse an X-trained model on Y.
    pub fn swap_polarizations(&self) -> Self {
        let subcarriers = self
            .subcarriers
            .iter()
            .map(|sc| PolSymbols { x: sc.y.clone(), y: sc.x.clone() })
            .collect();
        Self {
            subcarriers,
            baud_per_subcarrier: self.baud_per_subcarrier,
            roll_off: self.roll_off,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}
