//! Sequence-backed training data: full-length feature channels plus
//! per-instant targets; windows are gathered on demand with zero padding at
//! the record edges.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Channel-major feature sequences and target sequences of equal length.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    /// `[channel][instant]`.
    pub features: Vec<Vec<f64>>,
    /// `[target dim][instant]`.
    pub targets: Vec<Vec<f64>>,
    pub len: usize,
}

impl SequenceDataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let len = features.first().map_or(0, |c| c.len());
        if len == 0 {
            return Err(Error::Shape("empty dataset".into()));
        }
        if features.iter().chain(targets.iter()).any(|c| c.len() != len) {
            return Err(Error::Shape("ragged dataset channels".into()));
        }
        Ok(Self { features, targets, len })
    }

    /// Interleaves I/Q rails of complex streams into feature channels.
    pub fn channels_from_complex(streams: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * streams.len());
        for s in streams {
            out.push(s.iter().map(|v| v.re).collect());
            out.push(s.iter().map(|v| v.im).collect());
        }
        out
    }

    /// Target values (all dims) at instant `i`.
    pub fn target_at(&self, i: usize) -> Vec<f64> {
        self.targets.iter().map(|t| t[i]).collect()
    }
}

/// Gathers a channel-major window `[channels][len]` centered windows:
/// instants `start..start+len` of every channel, zero-padded outside the
/// record.
pub fn gather_window(channels: &[Vec<f64>], start: i64, len: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), channels.len() * len);
    let n = channels.first().map_or(0, |c| c.len()) as i64;
    for (ci, ch) in channels.iter().enumerate() {
        let dst = &mut out[ci * len..(ci + 1) * len];
        for (j, d) in dst.iter_mut().enumerate() {
            let idx = start + j as i64;
            *d = if idx >= 0 && idx < n { ch[idx as usize] } else { 0.0 };
        }
    }
}
