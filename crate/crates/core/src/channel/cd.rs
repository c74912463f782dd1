//! All-pass frequency-domain chromatic dispersion filter.

use num_complex::Complex64;

use crate::error::Result;
use crate::fft::{angular_freqs, fft_in_place, ifft_in_place};
use crate::signal::DualPolWaveform;

use super::LinkConfig;

/// Filter orientation relative to fiber propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdDirection {
    /// Same sign as propagation through the fiber (emulates dispersion).
    Emulate,
    /// Opposite sign (pre- or post-compensation).
    Compensate,
}

impl CdDirection {
    fn sign(self) -> f64 {
        match self {
            CdDirection::Emulate => 1.0,
            CdDirection::Compensate => -1.0,
        }
    }
}

/// Dispersion accumulated over a share of the link, in ps^2.
pub fn accumulated_beta2_ps2(link: &LinkConfig, share: f64) -> f64 {
    link.total_beta2_ps2() * share
}

/// Applies `exp(sign * j * beta2_acc/2 * w^2)`. Unitary: compensating the
/// same amount restores the input to rounding error.
pub fn apply_cd(
    w: &DualPolWaveform,
    accumulated_beta2_ps2: f64,
    direction: CdDirection,
) -> Result<DualPolWaveform> {
    if accumulated_beta2_ps2 == 0.0 {
        return Ok(w.clone());
    }
    let b2 = accumulated_beta2_ps2 * 1e-24 * direction.sign();
    let mut out = w.clone();
    let n = out.len();
    let freqs = angular_freqs(n, out.rate());
    for rail in [&mut out.x.samples, &mut out.y.samples] {
        fft_in_place(rail);
        for (v, om) in rail.iter_mut().zip(&freqs) {
            *v *= Complex64::from_polar(1.0, 0.5 * b2 * om * om);
        }
        ifft_in_place(rail);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::ComplexSeq;

    fn impulse_wave(n: usize, rate: f64) -> DualPolWaveform {
        let mut v = vec![Complex64::default(); n];
        v[n / 2] = Complex64::new(1.0, 0.0);
        let x = ComplexSeq::new(v, rate).unwrap();
        DualPolWaveform::new(x.clone(), x, 0.0).unwrap()
    }

    #[test]
    fn zero_dispersion_is_identity() {
        let w = impulse_wave(64, 1e9);
        let out = apply_cd(&w, 0.0, CdDirection::Emulate).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn sign_inversion_round_trip() {
        let w = impulse_wave(256, 64e9);
        let d = -21.68 * 80.0 * 40.0; // ps^2 over a 40x80 km link
        let there = apply_cd(&w, d, CdDirection::Emulate).unwrap();
        let back = apply_cd(&there, d, CdDirection::Compensate).unwrap();
        let max_err = w
            .x()
            .samples()
            .iter()
            .zip(back.x().samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn dispersion_spreads_a_pulse() {
        let w = impulse_wave(4096, 64e9);
        let out = apply_cd(&w, -21.68 * 80.0, CdDirection::Emulate).unwrap();
        let peak_in = w.x().samples().iter().map(|s| s.norm()).fold(0.0f64, f64::max);
        let peak_out = out.x().samples().iter().map(|s| s.norm()).fold(0.0f64, f64::max);
        assert!(peak_out < 0.5 * peak_in);
        // Unitary: energy preserved.
        assert!((out.total_power_w() - w.total_power_w()).abs() < 1e-12);
    }
}
