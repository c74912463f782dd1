//! Closed-form Gaussian-pulse perturbation integrand, summed over spans.
//!
//! Each transmitted pulse is modeled as a Gaussian of rms width
//! `tau = pulse_width_ratio * T` that disperses to complex width
//! `s(z) = tau^2 + j*B(z)`, with `B(z)` the accumulated dispersion at global
//! position `z` under the configured map (pre-compensation offsets `B(0)`).
//! The interferer at subcarrier offset `ell` rides at `Omega = 2*pi*ell*df`
//! and walks off by `d(z) = Omega*B(z)`.
//!
//! The triplet kernel for target symbol 0 driven by
//! `a_n * b_m * conj(b_{m+n})` reduces to
//!
//! ```text
//! K(z) = tau^2/(sqrt(2)|s|) * exp(-tau^2 * ((mT+d)^2 + (nT)^2) / (2|s|^2))
//!        * exp(j * (-B*nT*(mT+d)/|s|^2 + Omega*T*n))
//! ```
//!
//! which obeys the mirror identity `C^(-ell)[m][n] = conj(C^(ell)[-m][n])`
//! exactly, cell by cell. Coefficients are weighted by the span's gamma and
//! loss profile and integrated with a midpoint rule.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::LinkConfig;
use crate::error::{Error, Result};

use super::CoeffGrid;

/// Dispersion map of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionMap {
    /// 50% pre-compensated at the transmitter.
    Symmetric,
    /// Everything compensated at the receiver.
    Post,
}

impl DispersionMap {
    pub fn precomp_ratio(self) -> f64 {
        match self {
            DispersionMap::Symmetric => 0.5,
            DispersionMap::Post => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PertModelConfig {
    pub link: LinkConfig,
    pub baud: f64,
    pub spacing_hz: f64,
    pub map: DispersionMap,
    /// Gaussian width over the symbol period. The 0.30 default was
    /// calibrated against least-squares grid fits of the simulated channel
    /// (best magnitude correlation, and it reproduces the observed gap
    /// between first- and second-neighbor coefficient peaks).
    pub pulse_width_ratio: f64,
    /// Midpoint-rule resolution of the z integral.
    pub z_steps_per_span: usize,
}

impl PertModelConfig {
    pub fn new(link: LinkConfig, baud: f64, spacing_hz: f64, map: DispersionMap) -> Self {
        Self {
            link,
            baud,
            spacing_hz,
            map,
            pulse_width_ratio: 0.30,
            z_steps_per_span: 400,
        }
    }
}

struct Accumulator<'a> {
    grid: &'a mut CoeffGrid,
    t_sym: f64,
    tau2: f64,
    omega: f64,
}

impl Accumulator<'_> {
    /// Adds `weight * K(z)` for every (m, n) cell at accumulated dispersion
    /// `b_acc` (s^2).
    fn add_layer(&mut self, b_acc: f64, weight: f64) {
        let hw = self.grid.half_window as i64;
        let tau2 = self.tau2;
        let s_abs2 = tau2 * tau2 + b_acc * b_acc;
        let amp = weight * tau2 / (2.0f64.sqrt() * s_abs2.sqrt());
        let d = self.omega * b_acc;
        let t = self.t_sym;
        let side = self.grid.side();
        for (mi, row) in self.grid.values.chunks_mut(side).enumerate() {
            let m = mi as i64 - hw;
            let md = m as f64 * t + d;
            for (ni, cell) in row.iter_mut().enumerate() {
                let n = (ni as i64 - hw) as f64 * t;
                let re = -tau2 * (md * md + n * n) / (2.0 * s_abs2);
                let im = -b_acc * n * md / s_abs2 + self.omega * n;
                *cell += Complex64::from_polar(amp * re.exp(), im);
            }
        }
    }
}

fn integrate(cfg: &PertModelConfig, ell: i32, half_window: usize, z_steps: usize) -> CoeffGrid {
    let t_sym = 1.0 / cfg.baud;
    let tau = cfg.pulse_width_ratio * t_sym;
    let omega = 2.0 * std::f64::consts::PI * ell as f64 * cfg.spacing_hz;
    let b_total: f64 = cfg.link.spans.iter().map(|s| s.beta2_si() * s.length_km * 1e3).sum();
    let mut grid = CoeffGrid::zeros(ell, half_window);
    let mut acc = Accumulator { grid: &mut grid, t_sym, tau2: tau * tau, omega };
    let mut b_start = -cfg.map.precomp_ratio() * b_total;
    for span in &cfg.link.spans {
        let length = span.length_km * 1e3;
        let alpha = span.alpha_np_per_m();
        let gamma = span.gamma_si();
        let beta2 = span.beta2_si();
        let dz = length / z_steps as f64;
        for k in 0..z_steps {
            let z_mid = (k as f64 + 0.5) * dz;
            let weight = (8.0 / 9.0) * gamma * (-alpha * z_mid).exp() * dz;
            acc.add_layer(b_start + beta2 * z_mid, weight);
        }
        b_start += beta2 * length;
    }
    grid
}

/// Evaluates the first-order coefficient grid for offset `ell`, integrating
/// the Gaussian-pulse kernel over every span under the configured map.
///
/// A coarse/fine refinement probe guards the z resolution: if doubling the
/// step count still moves the result, a tolerance error is returned.
pub fn compute_coeff_grid(cfg: &PertModelConfig, ell: i32, half_window: usize) -> Result<CoeffGrid> {
    if half_window < 1 {
        return Err(Error::Config("half_window must be >= 1".into()));
    }
    cfg.link.validate()?;
    if cfg.z_steps_per_span < 2 {
        return Err(Error::Config("z_steps_per_span must be >= 2".into()));
    }
    let coarse = integrate(cfg, ell, half_window, cfg.z_steps_per_span / 2);
    let fine = integrate(cfg, ell, half_window, cfg.z_steps_per_span);
    fine.validate_finite()?;
    let scale = fine.max_abs();
    let dev = coarse
        .values
        .iter()
        .zip(&fine.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max)
        / scale.max(1e-300);
    // Richardson-style check: midpoint rule converges as O(dz^2), so the
    // coarse/fine gap bounds the fine-grid error well.
    if dev > 5e-3 {
        return Err(Error::Tolerance(format!(
            "z integration not converged: refinement moved grid by {dev:.2e}"
        )));
    }
    Ok(fine)
}

/// Maximum relative deviation from the mirror identity
/// `C^(-ell)[m][n] = conj(C^(ell)[-m][n])`, normalized by max |C|.
pub fn check_symmetry(g_plus: &CoeffGrid, g_minus: &CoeffGrid) -> Result<f64> {
    if g_plus.ell != -g_minus.ell {
        return Err(Error::Shape(format!(
            "offsets must be opposite: {} vs {}",
            g_plus.ell, g_minus.ell
        )));
    }
    if g_plus.half_window != g_minus.half_window {
        return Err(Error::Shape("window mismatch".into()));
    }
    let hw = g_plus.half_window as i64;
    let scale = g_plus.max_abs().max(g_minus.max_abs()).max(1e-300);
    let mut worst = 0.0f64;
    for m in -hw..=hw {
        for n in -hw..=hw {
            let dev = (g_minus.at(m, n) - g_plus.at(-m, n).conj()).norm() / scale;
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}
