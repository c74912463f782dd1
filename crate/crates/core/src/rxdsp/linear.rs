//! Linear receiver chain: residual dispersion compensation, per-subcarrier
//! matched filtering, normalization, genie carrier recovery and frame
//! alignment.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{accumulated_beta2_ps2, apply_cd, CdDirection, LinkConfig};
use crate::error::{Error, Result};
use crate::signal::{demux_subcarrier, DualPolWaveform, PolSymbols, SubcarrierSymbolFrame};

/// Where chromatic dispersion is removed in the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdcMode {
    /// Everything at the receiver; only valid with zero pre-compensation.
    Post,
    /// Total minus the transmitter's pre-compensated share (default).
    ResidualAfterPrecomp,
}

/// Carrier recovery flavor. Only the genie data-aided estimator is
/// implemented: a sliding-window ML phase against the known symbols,
/// applied before the nonlinear equalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarrierRecovery {
    GenieDataAided { window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbpConfig {
    /// Samples per aggregate symbol for back-propagation (2 in the studies).
    pub samples_per_symbol: usize,
    pub steps_per_span: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxChainConfig {
    pub cdc_mode: CdcMode,
    pub carrier_recovery: CarrierRecovery,
    pub dbp: Option<DbpConfig>,
}

impl Default for RxChainConfig {
    fn default() -> Self {
        Self {
            cdc_mode: CdcMode::ResidualAfterPrecomp,
            carrier_recovery: CarrierRecovery::GenieDataAided { window: 64 },
            dbp: None,
        }
    }
}

impl RxChainConfig {
    pub fn validate(&self) -> Result<()> {
        let CarrierRecovery::GenieDataAided { window } = self.carrier_recovery;
        if window == 0 {
            return Err(Error::Config("carrier recovery window must be >= 1".into()));
        }
        if let Some(dbp) = &self.dbp {
            if dbp.steps_per_span == 0 {
                return Err(Error::Config("DBP needs steps_per_span >= 1".into()));
            }
            if dbp.samples_per_symbol == 0 {
                return Err(Error::Config("DBP needs samples_per_symbol >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Circularly rotates a sequence left by `lag` (negative = right).
fn rotate<T: Clone>(v: &[T], lag: i64) -> Vec<T> {
    let n = v.len() as i64;
    let shift = lag.rem_euclid(n) as usize;
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[shift..]);
    out.extend_from_slice(&v[..shift]);
    out
}

/// Finds the integer symbol lag of `soft` against `reference` by normalized
/// cross-correlation over a preamble region, summed across subcarriers and
/// polarizations. Errors when the best peak is indistinct.
fn find_lag(
    soft: &[PolSymbols],
    reference: &SubcarrierSymbolFrame,
    preamble: usize,
    max_lag: i64,
) -> Result<i64> {
    let n = reference.n_symbols();
    let window = preamble.min(n);
    let mut best = (0i64, 0.0f64);
    for lag in -max_lag..=max_lag {
        let mut score = 0.0;
        for (sc_soft, sc_ref) in soft.iter().zip(reference.subcarriers()) {
            for (r_rail, t_rail) in [(&sc_soft.x, &sc_ref.x), (&sc_soft.y, &sc_ref.y)] {
                let mut acc = Complex64::default();
                let mut pr = 0.0;
                let mut pt = 0.0;
                for i in 0..window {
                    let j = (i as i64 + lag).rem_euclid(n as i64) as usize;
                    acc += r_rail[j] * t_rail[i].conj();
                    pr += r_rail[j].norm_sqr();
                    pt += t_rail[i].norm_sqr();
                }
                score += acc.norm() / (pr * pt).sqrt().max(1e-30);
            }
        }
        if score > best.1 {
            best = (lag, score);
        }
    }
    let rails = (2 * soft.len()) as f64;
    if best.1 / rails < 0.5 {
        return Err(Error::Alignment(format!(
            "correlation peak {:.3} below threshold 0.5",
            best.1 / rails
        )));
    }
    Ok(best.0)
}

/// Complex LS gain of `soft` against the reference, then per-symbol genie
/// carrier phase over a centered sliding window.
fn normalize_and_cpe(soft: &mut [Complex64], reference: &[Complex64], window: usize) {
    let num: Complex64 = reference.iter().zip(soft.iter()).map(|(t, r)| r * t.conj()).sum();
    let den: f64 = reference.iter().map(|t| t.norm_sqr()).sum();
    if den > 0.0 && num.norm() > 0.0 {
        let g = num / den;
        for s in soft.iter_mut() {
            *s /= g;
        }
    }
    let n = soft.len();
    let half = window / 2;
    // Prefix sums of r * conj(t) make the sliding-window phase O(n).
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Complex64::default());
    let mut acc = Complex64::default();
    for (r, t) in soft.iter().zip(reference) {
        acc += r * t.conj();
        prefix.push(acc);
    }
    let rotated: Vec<Complex64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let sum = prefix[hi] - prefix[lo];
            let phase = sum.arg();
            soft[i] * Complex64::from_polar(1.0, -phase)
        })
        .collect();
    soft.copy_from_slice(&rotated);
}

/// Shared receiver tail: align, normalize, carrier-recover each subcarrier.
pub(crate) fn finish_frame(
    mut soft: Vec<PolSymbols>,
    reference: &SubcarrierSymbolFrame,
    cr_window: usize,
) -> Result<SubcarrierSymbolFrame> {
    let lag = find_lag(&soft, reference, 1024, 64)?;
    for sc in soft.iter_mut() {
        sc.x = rotate(&sc.x, lag);
        sc.y = rotate(&sc.y, lag);
    }
    for (sc, sc_ref) in soft.iter_mut().zip(reference.subcarriers()) {
        normalize_and_cpe(&mut sc.x, &sc_ref.x, cr_window);
        normalize_and_cpe(&mut sc.y, &sc_ref.y, cr_window);
    }
    SubcarrierSymbolFrame::new(
        soft,
        reference.baud_per_subcarrier(),
        reference.roll_off(),
    )
}

/// Demuxes every subcarrier of the waveform (no CDC).
pub(crate) fn demux_all(
    w: &DualPolWaveform,
    n_subcarriers: usize,
    spacing_hz: f64,
    baud: f64,
    roll_off: f64,
) -> Result<Vec<PolSymbols>> {
    (0..n_subcarriers)
        .map(|idx| {
            let (x, y) = demux_subcarrier(w, idx, n_subcarriers, spacing_hz, baud, roll_off)?;
            Ok(PolSymbols { x, y })
        })
        .collect()
}

/// Linear receiver: residual CDC, matched filter per subcarrier, alignment,
/// normalization and genie carrier recovery against the reference frame.
pub fn rx_linear(
    w: &DualPolWaveform,
    link: &LinkConfig,
    rx: &RxChainConfig,
    reference: &SubcarrierSymbolFrame,
    spacing_hz: f64,
) -> Result<SubcarrierSymbolFrame> {
    rx.validate()?;
    let residual_share = match rx.cdc_mode {
        CdcMode::Post => {
            if link.precomp_ratio != 0.0 {
                return Err(Error::Config(
                    "post CDC mode requires zero pre-compensation".into(),
                ));
            }
            1.0
        }
        CdcMode::ResidualAfterPrecomp => 1.0 - link.precomp_ratio,
    };
    let residual = accumulated_beta2_ps2(link, residual_share);
    let eq = apply_cd(w, residual, CdDirection::Compensate)?;
    let soft = demux_all(
        &eq,
        reference.n_subcarriers(),
        spacing_hz,
        reference.baud_per_subcarrier(),
        reference.roll_off(),
    )?;
    let CarrierRecovery::GenieDataAided { window } = rx.carrier_recovery;
    finish_frame(soft, reference, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{transmit, FiberParams, TransmitConfig};
    use crate::rxdsp::metrics::evm_db;
    use crate::signal::{map_symbols, Constellation};
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
    fn linear_regime_identity_all_precomp_ratios() {
        let f = frame(2048, 10);
        let tx = TransmitConfig::new(8.5e9, 16);
        for ratio in [0.0, 0.5, 1.0] {
            let link = LinkConfig::uniform(4, FiberParams::default(), 6.0, ratio);
            let w = transmit(&f, &link, &tx, -20.0, None).unwrap();
            let soft = rx_linear(&w, &link, &RxChainConfig::default(), &f, 8.5e9).unwrap();
            for (sc_soft, sc_ref) in soft.subcarriers().iter().zip(f.subcarriers()) {
                let e = evm_db(&sc_soft.x, &sc_ref.x);
                assert!(e < -40.0, "ratio {ratio}: EVM {e} dB");
            }
        }
    }

    #[test]
    fn misaligned_reference_errors() {
        let f = frame(2048, 11);
        let other = frame(2048, 12);
        let tx = TransmitConfig::new(8.5e9, 16);
        let link = LinkConfig::uniform(2, FiberParams::default(), 6.0, 0.5);
        let w = transmit(&f, &link, &tx, -20.0, None).unwrap();
        let err = rx_linear(&w, &link, &RxChainConfig::default(), &other, 8.5e9).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn post_mode_requires_no_precomp() {
        let f = frame(256, 13);
        let link = LinkConfig::uniform(2, FiberParams::default(), 6.0, 0.5);
        let rx = RxChainConfig { cdc_mode: CdcMode::Post, ..Default::default() };
        let tx = TransmitConfig::new(8.5e9, 16);
        let w = transmit(&f, &link, &tx, -20.0, None).unwrap();
        assert!(rx_linear(&w, &link, &rx, &f, 8.5e9).is_err());
    }

    #[test]
    fn recovers_known_circular_shift() {
        let f = frame(2048, 14);
        let tx = TransmitConfig::new(8.5e9, 16);
        let link = LinkConfig::uniform(2, FiberParams::default(), 6.0, 0.5);
        let w = transmit(&f, &link, &tx, -20.0, None).unwrap();
        let soft_raw = {
            let residual = accumulated_beta2_ps2(&link, 0.5);
            let eq = apply_cd(&w, residual, CdDirection::Compensate).unwrap();
            let mut soft = demux_all(&eq, 4, 8.5e9, 8e9, 1.0 / 16.0).unwrap();
            // Inject a known 5-symbol circular delay on every rail.
            for sc in soft.iter_mut() {
                sc.x = rotate(&sc.x, -5);
                sc.y = rotate(&sc.y, -5);
            }
            soft
        };
        let fixed = finish_frame(soft_raw, &f, 64).unwrap();
        let e = evm_db(&fixed.subcarrier(0).x, &f.subcarrier(0).x);
        assert!(e < -40.0, "EVM after realignment {e} dB");
    }
}
