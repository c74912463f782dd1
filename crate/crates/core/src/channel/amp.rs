//! Lumped EDFA model: flat gain plus circularly-symmetric ASE per
//! polarization.
//!
//! The ASE power spectral density per polarization is
//! `S = h*nu*(NF_lin*G_lin - 1)/2` (Friis-consistent, both quadratures), so
//! each complex sample picks up Gaussian noise of variance `S * rate`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::error::{Error, Result};
use crate::signal::DualPolWaveform;

use super::PLANCK;

/// ASE PSD per polarization in W/Hz for the given gain/noise figure.
pub fn ase_psd_w_per_hz(gain_db: f64, nf_db: f64, center_freq_hz: f64) -> f64 {
    let g = 10f64.powf(gain_db / 10.0);
    let nf = 10f64.powf(nf_db / 10.0);
    (PLANCK * center_freq_hz * (nf * g - 1.0) / 2.0).max(0.0)
}

/// Box-Muller standard normal pair from a seeded PCG64 stream.
fn normal_pair(rng: &mut Pcg64) -> (f64, f64) {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = 2.0 * std::f64::consts::PI * u2;
    (r * th.cos(), r * th.sin())
}

/// Scales the field by `gain_db` and, when `nf_db` is given, loads ASE noise
/// on both polarizations independently. Deterministic for a fixed seed.
pub fn amplify(
    w: &DualPolWaveform,
    gain_db: f64,
    nf_db: Option<f64>,
    center_freq_hz: f64,
    seed: u64,
) -> Result<DualPolWaveform> {
    if gain_db < 0.0 {
        return Err(Error::Config(format!("amplifier gain must be >= 0 dB, got {gain_db}")));
    }
    let mut out = w.clone();
    let g_field = 10f64.powf(gain_db / 20.0);
    for s in out.x.samples.iter_mut().chain(out.y.samples.iter_mut()) {
        *s *= g_field;
    }
    if let Some(nf_db) = nf_db {
        let sigma2 = ase_psd_w_per_hz(gain_db, nf_db, center_freq_hz) * w.rate();
        let sigma_q = (sigma2 / 2.0).sqrt();
        let mut rng = Pcg64::seed_from_u64(seed);
        for rail in [&mut out.x.samples, &mut out.y.samples] {
            for s in rail.iter_mut() {
                let (a, b) = normal_pair(&mut rng);
                *s += Complex64::new(a * sigma_q, b * sigma_q);
            }
        }
    }
    Ok(out)
}
