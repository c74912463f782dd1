//! Digital back-propagation benchmark: invert the link span by span with
//! sign-negated fiber parameters, then run the linear receiver tail.

use serde::{Deserialize, Serialize};

use crate::channel::{
    accumulated_beta2_ps2, apply_cd, ssfm_with_steps, CdDirection, FiberParams, LinkConfig,
    SsfmControl,
};
use crate::error::{Error, Result};
use crate::signal::{resample, DualPolWaveform, SubcarrierSymbolFrame};

use super::linear::{demux_all, finish_frame};
use super::RxChainConfig;

/// Step resolution for the backward solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DbpSteps {
    /// Fixed uniform steps per span (the deployable benchmark).
    PerSpan(usize),
    /// Same adaptive controller as the forward simulation ("matched
    /// resolution", used for inverse-identity checks).
    Matched(SsfmControl),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbpOptions {
    /// Samples per aggregate symbol to back-propagate at; `None` keeps the
    /// incoming rate.
    pub samples_per_symbol: Option<usize>,
    pub steps: DbpSteps,
}

impl DbpOptions {
    pub fn per_span(samples_per_symbol: usize, steps_per_span: usize) -> Self {
        Self {
            samples_per_symbol: Some(samples_per_symbol),
            steps: DbpSteps::PerSpan(steps_per_span),
        }
    }

    pub fn matched(ctrl: SsfmControl) -> Self {
        Self { samples_per_symbol: None, steps: DbpSteps::Matched(ctrl) }
    }
}

fn inverted(span: &FiberParams) -> FiberParams {
    FiberParams {
        alpha_db_per_km: -span.alpha_db_per_km,
        beta2_ps2_per_km: -span.beta2_ps2_per_km,
        gamma_per_w_km: -span.gamma_per_w_km,
        length_km: span.length_km,
    }
}

/// Adaptive backward pass mirroring the forward controller: the step bound
/// is evaluated against the instantaneous peak power as usual.
fn backward_adaptive(
    w: &DualPolWaveform,
    span: &FiberParams,
    ctrl: &SsfmControl,
) -> Result<DualPolWaveform> {
    // Plan steps by walking the inverse span with the adaptive rule applied
    // to the growing (de-attenuating) field, mirrored from the output side.
    let inv = inverted(span);
    let cap = ctrl.max_nl_phase_deg.to_radians();
    let gamma = span.gamma_si().abs();
    let length = span.length_km * 1e3;
    let mut peak = w
        .x()
        .samples()
        .iter()
        .zip(w.y().samples())
        .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
        .fold(0.0f64, f64::max);
    let alpha = span.alpha_np_per_m();
    let mut steps = Vec::new();
    let mut z = 0.0;
    while z < length * (1.0 - 1e-12) {
        let raw = if gamma * peak > 0.0 {
            cap / ((8.0 / 9.0) * gamma * peak)
        } else {
            ctrl.max_step_m
        };
        if raw < ctrl.min_step_m {
            return Err(Error::Divergence(format!(
                "backward step {raw:.3e} m below minimum at z = {z:.1} m"
            )));
        }
        let dz = raw.min(ctrl.max_step_m).min(length - z);
        steps.push(dz);
        // Backward propagation grows the field back toward launch power.
        peak *= (alpha * dz).exp();
        z += dz;
    }
    ssfm_with_steps(w, &inv, &steps)
}

/// Back-propagates the received waveform through the whole link and runs the
/// linear receiver tail (demux, alignment, normalization, carrier recovery).
pub fn dbp_equalize(
    w: &DualPolWaveform,
    link: &LinkConfig,
    rx: &RxChainConfig,
    reference: &SubcarrierSymbolFrame,
    spacing_hz: f64,
    opts: &DbpOptions,
) -> Result<SubcarrierSymbolFrame> {
    rx.validate()?;
    link.validate()?;
    if let DbpSteps::PerSpan(0) = opts.steps {
        return Err(Error::Config("DBP needs steps_per_span >= 1".into()));
    }
    let aggregate_baud = reference.baud_per_subcarrier() * reference.n_subcarriers() as f64;
    let mut field = match opts.samples_per_symbol {
        Some(sps) => {
            if sps == 0 {
                return Err(Error::Config("DBP needs samples_per_symbol >= 1".into()));
            }
            let new_rate = aggregate_baud * sps as f64;
            // Guard band: the resampled grid must still hold the signal.
            let edge = spacing_hz * (reference.n_subcarriers() as f64 - 1.0) / 2.0
                + (1.0 + reference.roll_off()) * reference.baud_per_subcarrier() / 2.0;
            if edge > new_rate / 2.0 {
                return Err(Error::Config(format!(
                    "DBP rate {new_rate:.3e} cannot carry spectrum edge {edge:.3e}"
                )));
            }
            let x = resample(w.x(), new_rate)?;
            let y = resample(w.y(), new_rate)?;
            DualPolWaveform::new(x, y, w.center_power_dbm)?
        }
        None => w.clone(),
    };
    for span in link.spans.iter().rev() {
        // Undo the amplifier, then walk the span backwards.
        let g_field = 10f64.powf(span.span_loss_db() / 20.0);
        let mut de_amped = field.clone();
        for s in de_amped
            .x
            .samples
            .iter_mut()
            .chain(de_amped.y.samples.iter_mut())
        {
            *s /= g_field;
        }
        field = match &opts.steps {
            DbpSteps::PerSpan(n) => {
                let steps = vec![span.length_km * 1e3 / *n as f64; *n];
                ssfm_with_steps(&de_amped, &inverted(span), &steps)?
            }
            DbpSteps::Matched(ctrl) => backward_adaptive(&de_amped, span, ctrl)?,
        };
    }
    // The spans are inverted; what remains is the transmitter's digital
    // pre-compensation, undone with the fiber-signed filter.
    let precomp = accumulated_beta2_ps2(link, link.precomp_ratio);
    let field = apply_cd(&field, precomp, CdDirection::Emulate)?;
    let soft = demux_all(
        &field,
        reference.n_subcarriers(),
        spacing_hz,
        reference.baud_per_subcarrier(),
        reference.roll_off(),
    )?;
    let super::CarrierRecovery::GenieDataAided { window } = rx.carrier_recovery;
    finish_frame(soft, reference, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{transmit, TransmitConfig};
    use crate::rxdsp::metrics::evm_db;
    use crate::signal::{map_symbols, Constellation, PolSymbols};
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn frame(n_sym: usize, seed: u64) -> SubcarrierSymbolFrame {
        let c = Constellation::square_qam(16).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let subcarriers = (0..4)
            .map(|_| {
                let mut gen = || {
                    let bits: Vec<u8> = (0..4 * n_sym).map(|_| rng.gen_range(0..=1u8)).collect();
                    map_symbols(&bits, &c).unwrap()
                };
                PolSymbols { x: gen(), y: gen() }
            })
            .collect();
        SubcarrierSymbolFrame::new(subcarriers, 8e9, 1.0 / 16.0).unwrap()
    }

    #[test]
    fn zero_steps_is_config_error() {
        let f = frame(256, 1);
        let link = LinkConfig::uniform(1, FiberParams::default(), 6.0, 0.0);
        let tx = TransmitConfig::new(8.5e9, 16);
        let w = transmit(&f, &link, &tx, 0.0, None).unwrap();
        let opts = DbpOptions::per_span(2, 0);
        let err =
            dbp_equalize(&w, &link, &RxChainConfig::default(), &f, 8.5e9, &opts).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn matched_resolution_inverse_identity() {
        // Noiseless 2-span link at a nonlinear power: matched-resolution
        // full-rate DBP must restore the tx symbols.
        let f = frame(1024, 2);
        let link = LinkConfig::uniform(2, FiberParams::default(), 6.0, 0.5);
        let tx = TransmitConfig::new(8.5e9, 16);
        let w = transmit(&f, &link, &tx, 2.0, None).unwrap();
        let opts = DbpOptions::matched(SsfmControl::default());
        let soft = dbp_equalize(&w, &link, &RxChainConfig::default(), &f, 8.5e9, &opts).unwrap();
        for (sc_soft, sc_ref) in soft.subcarriers().iter().zip(f.subcarriers()) {
            let e = evm_db(&sc_soft.x, &sc_ref.x);
            assert!(e < -40.0, "EVM {e} dB");
        }
    }

    #[test]
    fn more_steps_never_hurt() {
        let f = frame(1024, 3);
        let link = LinkConfig::uniform(4, FiberParams::default(), 6.0, 0.5);
        let tx = TransmitConfig::new(8.5e9, 16);
        let w = transmit(&f, &link, &tx, 2.0, Some(77)).unwrap();
        let rx = RxChainConfig::default();
        let q = |steps: usize| {
            let soft =
                dbp_equalize(&w, &link, &rx, &f, 8.5e9, &DbpOptions::per_span(2, steps)).unwrap();
            let c = Constellation::square_qam(16).unwrap();
            crate::rxdsp::q_factor(&soft, &f, &c).unwrap().aggregate.q_evm_db
        };
        let q1 = q(1);
        let q2 = q(2);
        assert!(q2 >= q1, "DBP 2 StPS {q2} dB < 1 StPS {q1} dB");
    }
}
