//! EVM, BER and Q-factor estimation.
//!
//! Two Q conventions are reported side by side:
//!
//! * `q_db` — from the hard-decision BER through the Gaussian inverse,
//!   `Q = 20*log10(sqrt(2) * erfcinv(2*BER))`. When no errors are counted,
//!   the BER is replaced by the `1/(2*bits)` lower bound and flagged.
//! * `q_evm_db` — from the measured SNR (1/EVM^2) through the square-QAM
//!   AWGN BER formula and the same Gaussian inverse. This estimator stays
//!   informative when the error count is too small to be meaningful.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Constellation, SubcarrierSymbolFrame};

/// Inverse standard-normal CDF (Acklam's rational approximation, |rel err|
/// below 1.2e-9 over (0, 1)).
pub fn probit(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probit domain");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -probit(1.0 - p)
    }
}

/// Complementary error function (fractional error < 1.2e-7 everywhere).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z
        - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Gaussian tail probability Q(x) = 0.5 erfc(x / sqrt(2)).
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// BER -> Q-factor in dB: 20*log10(sqrt(2)*erfcinv(2*ber)) = 20*log10(-probit(ber)).
pub fn q_db_from_ber(ber: f64) -> f64 {
    let q_lin = -probit(ber.clamp(1e-15, 0.5 - 1e-15));
    if q_lin <= 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * q_lin.log10()
    }
}

/// First-term Gray-coded square-QAM BER over AWGN at symbol SNR `snr`.
pub fn qam_ber_awgn(snr: f64, order: usize) -> f64 {
    let m = order as f64;
    let l = m.sqrt();
    let bits = m.log2();
    let coef = 4.0 * (1.0 - 1.0 / l) / bits;
    (coef * gaussian_q((3.0 * snr / (m - 1.0)).sqrt())).min(0.5)
}

/// Per-stream or aggregate quality numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub evm_db: f64,
    pub ber: f64,
    pub q_db: f64,
    pub q_evm_db: f64,
    pub symbols: u64,
    pub bits: u64,
    pub bit_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_subcarrier: Vec<ChannelMetrics>,
    pub aggregate: ChannelMetrics,
    /// True when zero bit errors were counted anywhere: `ber`/`q_db` are
    /// then the `1/(2*bits)` lower-bound convention.
    pub zero_error_floor: bool,
}

fn finish(err_energy: f64, ref_energy: f64, bit_errors: u64, bits: u64, symbols: u64, order: usize) -> ChannelMetrics {
    let evm_lin = err_energy / ref_energy;
    let evm_db = 10.0 * evm_lin.log10();
    let ber = if bit_errors == 0 {
        1.0 / (2.0 * bits as f64)
    } else {
        bit_errors as f64 / bits as f64
    };
    let snr = 1.0 / evm_lin;
    let q_evm_db = q_db_from_ber(qam_ber_awgn(snr, order));
    ChannelMetrics {
        evm_db,
        ber,
        q_db: q_db_from_ber(ber),
        q_evm_db,
        symbols,
        bits,
        bit_errors,
    }
}

/// Hard-decision BER/Q plus EVM of `soft` against the reference frame.
pub fn q_factor(
    soft: &SubcarrierSymbolFrame,
    reference: &SubcarrierSymbolFrame,
    c: &Constellation,
) -> Result<MetricsReport> {
    if soft.n_subcarriers() != reference.n_subcarriers()
        || soft.n_symbols() != reference.n_symbols()
    {
        return Err(Error::Shape(format!(
            "frame mismatch: {}x{} vs {}x{}",
            soft.n_subcarriers(),
            soft.n_symbols(),
            reference.n_subcarriers(),
            reference.n_symbols()
        )));
    }
    let m = c.bits_per_symbol() as u64;
    let mut per_subcarrier = Vec::with_capacity(soft.n_subcarriers());
    let mut tot_err_energy = 0.0;
    let mut tot_ref_energy = 0.0;
    let mut tot_bit_errors = 0u64;
    let mut tot_bits = 0u64;
    let mut tot_symbols = 0u64;
    for (s_sc, r_sc) in soft.subcarriers().iter().zip(reference.subcarriers()) {
        let mut err_energy = 0.0;
        let mut ref_energy = 0.0;
        let mut bit_errors = 0u64;
        let mut symbols = 0u64;
        for (s_rail, r_rail) in [(&s_sc.x, &r_sc.x), (&s_sc.y, &r_sc.y)] {
            for (s, r) in s_rail.iter().zip(r_rail) {
                err_energy += (s - r).norm_sqr();
                ref_energy += r.norm_sqr();
                bit_errors += u64::from((c.decide(*s) ^ c.decide(*r)).count_ones());
                symbols += 1;
            }
        }
        let bits = symbols * m;
        per_subcarrier.push(finish(err_energy, ref_energy, bit_errors, bits, symbols, c.order()));
        tot_err_energy += err_energy;
        tot_ref_energy += ref_energy;
        tot_bit_errors += bit_errors;
        tot_bits += bits;
        tot_symbols += symbols;
    }
    let aggregate = finish(
        tot_err_energy,
        tot_ref_energy,
        tot_bit_errors,
        tot_bits,
        tot_symbols,
        c.order(),
    );
    Ok(MetricsReport {
        per_subcarrier,
        aggregate,
        zero_error_floor: tot_bit_errors == 0,
    })
}

/// EVM in dB between two symbol slices (error energy over reference energy).
pub fn evm_db(soft: &[Complex64], reference: &[Complex64]) -> f64 {
    let err: f64 = soft.iter().zip(reference).map(|(s, r)| (s - r).norm_sqr()).sum();
    let sig: f64 = reference.iter().map(|r| r.norm_sqr()).sum();
    10.0 * (err / sig).log10()
}
