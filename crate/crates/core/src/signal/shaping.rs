//! Root-raised-cosine pulse shaping, matched filtering and resampling.
//!
//! Shaping is done spectrally over the full record (circular convolution
//! with the exact RRC frequency response, zero phase). The shape and matched
//! filter therefore cascade to an exactly Nyquist raised cosine: decimating
//! the matched-filter output recovers the symbols to float rounding, for any
//! roll-off in (0, 1] and any integer sps >= 2. Symbol k sits at sample k*sps.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{bin_freq, fft_in_place, ifft_in_place};

use super::ComplexSeq;

/// Raised-cosine amplitude response at frequency `f` (Hz) for the given
/// symbol rate. Unit gain at DC, cosine-squared flanks, zero outside
/// (1+roll_off)*baud/2.
pub fn rrc_spectrum(f: f64, baud: f64, roll_off: f64) -> f64 {
    let nu = f.abs() / baud;
    let lo = 0.5 * (1.0 - roll_off);
    let hi = 0.5 * (1.0 + roll_off);
    if nu <= lo {
        1.0
    } else if nu < hi {
        let arg = std::f64::consts::PI / (2.0 * roll_off) * (nu - lo);
        let c = arg.cos();
        c * c
    } else {
        0.0
    }
}

fn check_shape_args(roll_off: f64, sps: usize) -> Result<()> {
    if sps < 2 {
        return Err(Error::Config(format!("sps must be >= 2, got {sps}")));
    }
    if !(roll_off > 0.0 && roll_off <= 1.0) {
        return Err(Error::Config(format!("roll-off must be in (0,1], got {roll_off}")));
    }
    Ok(())
}

/// Upsamples symbols by `sps` and applies the RRC transmit filter.
///
/// The filter gain is `sqrt(sps * RC(f))` so that shape -> matched filter ->
/// decimate is the identity and total energy equals the symbol energy.
pub fn rrc_shape(symbols: &[Complex64], roll_off: f64, sps: usize, baud: f64) -> Result<ComplexSeq> {
    check_shape_args(roll_off, sps)?;
    if symbols.is_empty() {
        return Err(Error::Shape("no symbols to shape".into()));
    }
    let n = symbols.len() * sps;
    let rate = baud * sps as f64;
    let mut buf = vec![Complex64::default(); n];
    for (k, s) in symbols.iter().enumerate() {
        buf[k * sps] = *s;
    }
    fft_in_place(&mut buf);
    let sqrt_sps = (sps as f64).sqrt();
    for (k, v) in buf.iter_mut().enumerate() {
        let g = rrc_spectrum(bin_freq(k, n, rate), baud, roll_off).sqrt() * sqrt_sps;
        *v *= g;
    }
    ifft_in_place(&mut buf);
    ComplexSeq::new(buf, rate)
}

/// Matched RRC filter followed by decimation to one sample per symbol.
///
/// The waveform rate must be an integer multiple of `baud`.
pub fn rrc_matched_decimate(seq: &ComplexSeq, roll_off: f64, baud: f64) -> Result<Vec<Complex64>> {
    let ratio = seq.rate / baud;
    let sps = ratio.round() as usize;
    if sps < 1 || (ratio - sps as f64).abs() > 1e-6 * ratio {
        return Err(Error::Config(format!(
            "rate {} is not an integer multiple of baud {}",
            seq.rate, baud
        )));
    }
    if seq.len() % sps != 0 {
        return Err(Error::Shape(format!(
            "length {} not divisible by sps {sps}",
            seq.len()
        )));
    }
    let n = seq.len();
    let mut buf = seq.samples.clone();
    fft_in_place(&mut buf);
    let sqrt_sps = (sps as f64).sqrt();
    for (k, v) in buf.iter_mut().enumerate() {
        let g = rrc_spectrum(bin_freq(k, n, seq.rate), baud, roll_off).sqrt() * sqrt_sps;
        *v *= g;
    }
    ifft_in_place(&mut buf);
    Ok(buf.iter().step_by(sps).copied().collect())
}

/// Multiplies by `exp(j*2*pi*f_hz*t)` (exact in the time domain, so shifting
/// by `-f_hz` afterwards restores the input bit-exactly up to rounding).
pub fn freq_shift(seq: &ComplexSeq, f_hz: f64) -> ComplexSeq {
    let step = 2.0 * std::f64::consts::PI * f_hz / seq.rate;
    let samples = seq
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, step * n as f64))
        .collect();
    ComplexSeq { samples, rate: seq.rate }
}

/// Band-limited rate change via spectral crop/extension. The new length
/// `len * new_rate / rate` must be an integer. Sample values are preserved
/// for signals confined to the narrower of the two Nyquist bands.
pub fn resample(seq: &ComplexSeq, new_rate: f64) -> Result<ComplexSeq> {
    let n = seq.len();
    let exact = n as f64 * new_rate / seq.rate;
    let m = exact.round() as usize;
    if m == 0 || (exact - m as f64).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "resample {} -> {} does not give an integer length from {n}",
            seq.rate, new_rate
        )));
    }
    if m == n {
        return Ok(seq.clone());
    }
    let mut spec = seq.samples.clone();
    fft_in_place(&mut spec);
    let mut out = vec![Complex64::default(); m];
    let keep = n.min(m);
    let half = keep / 2;
    out[..half].copy_from_slice(&spec[..half]);
    out[m - (keep - half)..].copy_from_slice(&spec[n - (keep - half)..]);
    let scale = m as f64 / n as f64;
    for v in out.iter_mut() {
        *v *= scale;
    }
    ifft_in_place(&mut out);
    ComplexSeq::new(out, new_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{map_symbols, Constellation};
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn random_qpsk(n: usize, seed: u64) -> Vec<Complex64> {
        let c = Constellation::square_qam(4).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let bits: Vec<u8> = (0..2 * n).map(|_| rng.gen_range(0..=1u8)).collect();
        map_symbols(&bits, &c).unwrap()
    }

    #[test]
    fn impulse_gives_centered_pulse() {
        let mut symbols = vec![Complex64::default(); 64];
        symbols[32] = Complex64::new(1.0, 0.0);
        let w = rrc_shape(&symbols, 0.25, 8, 1.0).unwrap();
        // Zero-phase shaping: the response peaks exactly at the symbol instant.
        let peak = w
            .samples()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 32 * 8);
    }

    #[test]
    fn shape_matched_decimate_recovers_symbols() {
        let symbols = random_qpsk(256, 7);
        for &(roll, sps) in &[(1.0 / 16.0, 2usize), (0.5, 4), (1.0, 3)] {
            let w = rrc_shape(&symbols, roll, sps, 2e9).unwrap();
            let back = rrc_matched_decimate(&w, roll, 2e9).unwrap();
            let max_err = symbols
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-6, "roll {roll} sps {sps}: {max_err}");
        }
    }

    #[test]
    fn pair_evm_below_minus_50_db() {
        let symbols = random_qpsk(512, 9);
        let w = rrc_shape(&symbols, 1.0 / 16.0, 4, 8e9).unwrap();
        let back = rrc_matched_decimate(&w, 1.0 / 16.0, 8e9).unwrap();
        let err: f64 = symbols.iter().zip(&back).map(|(a, b)| (a - b).norm_sqr()).sum();
        let sig: f64 = symbols.iter().map(|s| s.norm_sqr()).sum();
        let evm_db = 10.0 * (err / sig).log10();
        assert!(evm_db < -50.0, "EVM {evm_db} dB");
    }

    #[test]
    fn occupied_bandwidth_matches_roll_off() {
        // roll_off = 1/16 -> support is exactly (1 + 1/16) * baud.
        let baud = 8e9;
        let roll = 1.0 / 16.0;
        let edge = (1.0 + roll) * baud / 2.0;
        assert!(rrc_spectrum(edge * 0.999, baud, roll) > 0.0);
        assert_eq!(rrc_spectrum(edge * 1.001, baud, roll), 0.0);
        assert_eq!(rrc_spectrum(edge, baud, roll), 0.0);
    }

    #[test]
    fn shaped_power_is_symbol_power_over_sps() {
        let symbols = random_qpsk(1024, 3);
        let sps = 8;
        let w = rrc_shape(&symbols, 0.2, sps, 1e9).unwrap();
        assert!((w.mean_power() - 1.0 / sps as f64).abs() < 1e-3);
    }

    #[test]
    fn freq_shift_round_trip() {
        let symbols = random_qpsk(64, 5);
        let w = rrc_shape(&symbols, 0.5, 4, 1e9).unwrap();
        let back = freq_shift(&freq_shift(&w, 123e6), -123e6);
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn resample_preserves_bandlimited_signal() {
        let symbols = random_qpsk(256, 11);
        let w = rrc_shape(&symbols, 0.3, 8, 1e9).unwrap();
        let down = resample(&w, 4e9).unwrap();
        let up = resample(&down, 8e9).unwrap();
        let max_err = w
            .samples()
            .iter()
            .zip(up.samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "{max_err}");
    }

    #[test]
    fn bad_args_rejected() {
        let s = vec![Complex64::new(1.0, 0.0); 4];
        assert!(rrc_shape(&s, 0.5, 1, 1.0).is_err());
        assert!(rrc_shape(&s, 0.0, 4, 1.0).is_err());
        assert!(rrc_shape(&s, 1.5, 4, 1.0).is_err());
    }
}
