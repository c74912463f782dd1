//! Subcarrier multiplexing onto a symmetric frequency grid, and the matching
//! per-subcarrier demux (down-shift, matched filter, decimate).

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::shaping::{freq_shift, rrc_matched_decimate, rrc_shape};
use super::{ComplexSeq, DualPolWaveform, SubcarrierSymbolFrame};

/// How the requested launch power is distributed over subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerNorm {
    /// One scale factor for the aggregate waveform (default).
    Global,
    /// Each subcarrier is first normalized to an equal share.
    PerSubcarrier,
}

/// Center frequency of subcarrier `idx` on the symmetric grid.
pub fn subcarrier_offset_hz(idx: usize, n_subcarriers: usize, spacing_hz: f64) -> f64 {
    (idx as f64 - (n_subcarriers as f64 - 1.0) / 2.0) * spacing_hz
}

/// Shapes every subcarrier, shifts it to its grid slot, sums, and normalizes
/// the aggregate mean power to `launch_dbm`.
///
/// `sps` is samples per subcarrier symbol; the output rate is
/// `sps * baud_per_subcarrier`.
pub fn mux_subcarriers(
    frame: &SubcarrierSymbolFrame,
    spacing_hz: f64,
    sps: usize,
    launch_dbm: f64,
    norm: PowerNorm,
) -> Result<DualPolWaveform> {
    let n_sc = frame.n_subcarriers();
    let baud = frame.baud_per_subcarrier();
    if spacing_hz < baud {
        return Err(Error::Config(format!(
            "subcarrier spacing {spacing_hz} below baud {baud}"
        )));
    }
    let rate = baud * sps as f64;
    let edge = subcarrier_offset_hz(n_sc - 1, n_sc, spacing_hz)
        + (1.0 + frame.roll_off()) * baud / 2.0;
    if edge > rate / 2.0 {
        return Err(Error::Config(format!(
            "aggregate spectrum edge {edge:.3e} Hz exceeds Nyquist {:.3e} Hz",
            rate / 2.0
        )));
    }

    let n = frame.n_symbols() * sps;
    let mut x = vec![Complex64::default(); n];
    let mut y = vec![Complex64::default(); n];
    for (idx, sc) in frame.subcarriers().iter().enumerate() {
        let f_off = subcarrier_offset_hz(idx, n_sc, spacing_hz);
        for (dst, src) in [(&mut x, &sc.x), (&mut y, &sc.y)] {
            let shaped = rrc_shape(src, frame.roll_off(), sps, baud)?;
            let shifted = freq_shift(&shaped, f_off);
            let scale = match norm {
                PowerNorm::Global => 1.0,
                PowerNorm::PerSubcarrier => {
                    // Equal share per subcarrier before the global trim.
                    let p = shifted.mean_power();
                    if p > 0.0 {
                        (1.0 / (n_sc as f64 * p)).sqrt()
                    } else {
                        1.0
                    }
                }
            };
            for (d, s) in dst.iter_mut().zip(shifted.samples()) {
                *d += s * scale;
            }
        }
    }
    let w = DualPolWaveform::new(ComplexSeq::new(x, rate)?, ComplexSeq::new(y, rate)?, launch_dbm)?;
    if w.total_power_w() <= 0.0 {
        return Err(Error::Config("all-zero frame cannot be power-normalized".into()));
    }
    Ok(w.with_power_dbm(launch_dbm))
}

/// Down-shifts subcarrier `index`, matched-filters and decimates to one
/// sample per symbol. Returns the (x, y) soft symbol streams, unscaled.
pub fn demux_subcarrier(
    w: &DualPolWaveform,
    index: usize,
    n_subcarriers: usize,
    spacing_hz: f64,
    baud: f64,
    roll_off: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if index >= n_subcarriers {
        return Err(Error::Config(format!(
            "subcarrier index {index} out of range (n = {n_subcarriers})"
        )));
    }
    let f_off = subcarrier_offset_hz(index, n_subcarriers, spacing_hz);
    let x = rrc_matched_decimate(&freq_shift(w.x(), -f_off), roll_off, baud)?;
    let y = rrc_matched_decimate(&freq_shift(w.y(), -f_off), roll_off, baud)?;
    Ok((x, y))
}
