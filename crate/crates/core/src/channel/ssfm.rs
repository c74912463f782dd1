//! Symmetrized split-step Fourier propagation of the Manakov equation.
//!
//! Each step applies a linear half (loss + dispersion, frequency domain),
//! the Manakov nonlinear phase rotation with the 8/9 factor (time domain),
//! and another linear half. Adjacent half steps are merged into one
//! frequency-domain pass. The step size is adapted so the nonlinear phase at
//! the instantaneous peak power stays below the configured bound.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{angular_freqs, fft_in_place, ifft_in_place};
use crate::signal::DualPolWaveform;

use super::{FiberParams, SsfmControl};

const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

/// Dispersion + loss over `dz` meters, applied in the frequency domain.
/// The propagation convention is `U(z+dz) = U(z) * exp((-alpha/2 + j*beta2/2*w^2) dz)`.
fn linear_op(x: &mut [Complex64], y: &mut [Complex64], w2: &[f64], alpha: f64, beta2: f64, dz: f64) {
    if dz == 0.0 {
        return;
    }
    let att = (-0.5 * alpha * dz).exp();
    fft_in_place(x);
    fft_in_place(y);
    for ((xv, yv), w2k) in x.iter_mut().zip(y.iter_mut()).zip(w2) {
        let phase = 0.5 * beta2 * w2k * dz;
        let h = Complex64::from_polar(att, phase);
        *xv *= h;
        *yv *= h;
    }
    ifft_in_place(x);
    ifft_in_place(y);
}

/// Manakov nonlinear rotation: both rails rotate by (8/9) gamma (|x|^2+|y|^2) dz.
fn nonlinear_op(x: &mut [Complex64], y: &mut [Complex64], gamma: f64, dz: f64) {
    if gamma == 0.0 || dz == 0.0 {
        return;
    }
    let c = MANAKOV_FACTOR * gamma * dz;
    for (xv, yv) in x.iter_mut().zip(y.iter_mut()) {
        let p = xv.norm_sqr() + yv.norm_sqr();
        let rot = Complex64::from_polar(1.0, c * p);
        *xv *= rot;
        *yv *= rot;
    }
}

fn peak_power(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
        .fold(0.0f64, f64::max)
}

enum StepPlan<'a> {
    Adaptive(&'a SsfmControl),
    Explicit(&'a [f64]),
}

fn run(
    w: &DualPolWaveform,
    fiber: &FiberParams,
    plan: StepPlan<'_>,
    log: Option<&mut Vec<f64>>,
) -> Result<DualPolWaveform> {
    // No sign validation here: back-propagation legitimately runs with
    // negated alpha/beta2/gamma. Physical links are vetted by LinkConfig.
    if !(fiber.length_km > 0.0) {
        return Err(Error::Config(format!(
            "span length must be > 0, got {}",
            fiber.length_km
        )));
    }
    let mut out = w.clone();
    let n = out.len();
    let rate = out.rate();
    let w2: Vec<f64> = angular_freqs(n, rate).iter().map(|w| w * w).collect();
    let alpha = fiber.alpha_np_per_m();
    let beta2 = fiber.beta2_si();
    let gamma = fiber.gamma_si();
    let length = fiber.length_km * 1e3;

    let (x, y) = (&mut out.x.samples, &mut out.y.samples);
    let mut steps_taken = Vec::new();
    let mut pending = 0.0f64;
    let mut z = 0.0f64;
    let mut explicit_idx = 0usize;
    // Step sums may land a few ulps short of the span; the remainder is
    // folded into the trailing linear pass.
    let done = length * (1.0 - 1e-12);
    while z < done {
        let dz = match &plan {
            StepPlan::Adaptive(ctrl) => {
                let cap = ctrl.max_nl_phase_deg.to_radians();
                let peak = peak_power(x, y);
                let raw = if gamma.abs() * peak > 0.0 {
                    cap / (MANAKOV_FACTOR * gamma.abs() * peak)
                } else {
                    ctrl.max_step_m
                };
                if raw < ctrl.min_step_m {
                    return Err(Error::Divergence(format!(
                        "required step {raw:.3e} m below minimum {:.3e} m at z = {z:.1} m",
                        ctrl.min_step_m
                    )));
                }
                raw.min(ctrl.max_step_m).min(length - z)
            }
            StepPlan::Explicit(steps) => {
                let dz = steps.get(explicit_idx).copied().ok_or_else(|| {
                    Error::Config("explicit step list shorter than fiber length".into())
                })?;
                explicit_idx += 1;
                dz.min(length - z)
            }
        };
        // Leading linear part: trailing half of the previous step plus the
        // leading half of this one, fused into a single FFT pass.
        linear_op(x, y, &w2, alpha, beta2, pending + dz / 2.0);
        nonlinear_op(x, y, gamma, dz);
        pending = dz / 2.0;
        z += dz;
        steps_taken.push(dz);
    }
    linear_op(x, y, &w2, alpha, beta2, pending + (length - z).max(0.0));
    if let Some(log) = log {
        *log = steps_taken;
    }
    Ok(out)
}

/// Propagates through one fiber segment with adaptive step sizing.
pub fn ssfm_propagate(
    w: &DualPolWaveform,
    fiber: &FiberParams,
    ctrl: &SsfmControl,
) -> Result<DualPolWaveform> {
    ctrl.validate()?;
    run(w, fiber, StepPlan::Adaptive(ctrl), None)
}

/// Same as [`ssfm_propagate`] but also returns the step sizes used.
pub fn ssfm_propagate_logged(
    w: &DualPolWaveform,
    fiber: &FiberParams,
    ctrl: &SsfmControl,
) -> Result<(DualPolWaveform, Vec<f64>)> {
    ctrl.validate()?;
    let mut log = Vec::new();
    let out = run(w, fiber, StepPlan::Adaptive(ctrl), Some(&mut log))?;
    Ok((out, log))
}

/// Propagates with an externally supplied step sequence (used by the DBP
/// benchmark and the inverse-identity checks).
pub fn ssfm_with_steps(
    w: &DualPolWaveform,
    fiber: &FiberParams,
    steps: &[f64],
) -> Result<DualPolWaveform> {
    run(w, fiber, StepPlan::Explicit(steps), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::apply_transfer;
    use crate::signal::{map_symbols, rrc_shape, ComplexSeq, Constellation};
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn qpsk_waveform(n: usize, seed: u64, power_scale: f64) -> DualPolWaveform {
        let c = Constellation::square_qam(4).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut gen = || {
            let bits: Vec<u8> = (0..2 * n).map(|_| rng.gen_range(0..=1u8)).collect();
            let syms = map_symbols(&bits, &c).unwrap();
            let mut shaped = rrc_shape(&syms, 0.1, 4, 8e9).unwrap();
            for s in shaped.samples.iter_mut() {
                *s *= power_scale;
            }
            shaped
        };
        DualPolWaveform::new(gen(), gen(), 0.0).unwrap()
    }

    #[test]
    fn linear_only_matches_analytic_filter() {
        let w = qpsk_waveform(256, 1, 1e-2);
        let fiber = FiberParams {
            alpha_db_per_km: 0.0,
            gamma_per_w_km: 0.0,
            beta2_ps2_per_km: -21.68,
            length_km: 80.0,
        };
        let out = ssfm_propagate(&w, &fiber, &SsfmControl::default()).unwrap();
        let mut expect = w.x().samples().to_vec();
        let b2l = fiber.beta2_si() * fiber.length_km * 1e3;
        apply_transfer(&mut expect, w.rate(), |om| {
            Complex64::from_polar(1.0, 0.5 * b2l * om * om)
        });
        let max_err = out
            .x()
            .samples()
            .iter()
            .zip(&expect)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "max sample error {max_err}");
    }

    #[test]
    fn cw_spm_phase_matches_analytic() {
        // beta2 = 0, alpha = 0, constant envelope: exact phase rotation of
        // (8/9) gamma (Px + Py) L on both rails.
        let n = 1024;
        let px: f64 = 2e-3;
        let py: f64 = 1e-3;
        let x = ComplexSeq::new(vec![Complex64::new(px.sqrt(), 0.0); n], 32e9).unwrap();
        let y = ComplexSeq::new(vec![Complex64::new(py.sqrt(), 0.0); n], 32e9).unwrap();
        let w = DualPolWaveform::new(x, y, 0.0).unwrap();
        let fiber = FiberParams {
            alpha_db_per_km: 0.0,
            beta2_ps2_per_km: 0.0,
            gamma_per_w_km: 1.3,
            length_km: 80.0,
        };
        let out = ssfm_propagate(&w, &fiber, &SsfmControl::default()).unwrap();
        let expect = 8.0 / 9.0 * fiber.gamma_si() * (px + py) * fiber.length_km * 1e3;
        let got = out.x().samples()[10].arg();
        let wrapped = (expect + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
            - std::f64::consts::PI;
        assert!((got - wrapped).abs() < 1e-6, "phase {got} vs {wrapped}");
    }

    #[test]
    fn attenuation_only_loses_exact_db() {
        let w = qpsk_waveform(128, 2, 1.0);
        let fiber = FiberParams {
            alpha_db_per_km: 0.2,
            beta2_ps2_per_km: 0.0,
            gamma_per_w_km: 0.0,
            length_km: 80.0,
        };
        let out = ssfm_propagate(&w, &fiber, &SsfmControl::default()).unwrap();
        let loss_db = 10.0 * (w.total_power_w() / out.total_power_w()).log10();
        assert!((loss_db - 16.0).abs() < 1e-6, "loss {loss_db} dB");
    }

    #[test]
    fn noiseless_inverse_restores_input() {
        let w = qpsk_waveform(256, 3, 0.04);
        let fiber = FiberParams::default();
        let ctrl = SsfmControl::default();
        let (fwd, steps) = ssfm_propagate_logged(&w, &fiber, &ctrl).unwrap();
        let inv = FiberParams {
            alpha_db_per_km: -fiber.alpha_db_per_km,
            beta2_ps2_per_km: -fiber.beta2_ps2_per_km,
            gamma_per_w_km: -fiber.gamma_per_w_km,
            length_km: fiber.length_km,
        };
        let mut rev: Vec<f64> = steps.clone();
        rev.reverse();
        let back = ssfm_with_steps(&fwd, &inv, &rev).unwrap();
        let err: f64 = w
            .x()
            .samples()
            .iter()
            .zip(back.x().samples())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let sig: f64 = w.x().samples().iter().map(|s| s.norm_sqr()).sum();
        let evm_db = 10.0 * (err / sig).log10();
        assert!(evm_db < -40.0, "inverse EVM {evm_db} dB");
    }

    #[test]
    fn step_underflow_is_divergence() {
        let w = qpsk_waveform(64, 4, 1e3);
        let ctrl = SsfmControl { max_nl_phase_deg: 1e-9, min_step_m: 1.0, max_step_m: 1000.0 };
        let err = ssfm_propagate(&w, &FiberParams::default(), &ctrl).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn step_halving_converges() {
        let w = qpsk_waveform(256, 5, 0.04);
        let fiber = FiberParams::default();
        let coarse = ssfm_propagate(
            &w,
            &fiber,
            &SsfmControl { max_nl_phase_deg: 0.1, ..Default::default() },
        )
        .unwrap();
        let fine = ssfm_propagate(
            &w,
            &fiber,
            &SsfmControl { max_nl_phase_deg: 0.05, ..Default::default() },
        )
        .unwrap();
        let err: f64 = coarse
            .x()
            .samples()
            .iter()
            .zip(fine.x().samples())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let sig: f64 = fine.x().samples().iter().map(|s| s.norm_sqr()).sum();
        assert!((err / sig).sqrt() < 1e-4, "step-halving EVM {}", (err / sig).sqrt());
    }
}
