//! Dual-polarization fiber channel: adaptive split-step Fourier solution of
//! the Manakov equation, lumped EDFA amplification with ASE loading, and
//! frequency-domain dispersion (pre/post compensation).

mod amp;
mod cd;
mod ssfm;
mod transmit;

pub use amp::amplify;
pub use cd::{accumulated_beta2_ps2, apply_cd, CdDirection};
pub use ssfm::{ssfm_propagate, ssfm_propagate_logged, ssfm_with_steps};
pub use transmit::{transmit, TransmitConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0; // m/s
pub const PLANCK: f64 = 6.626_070_15e-34; // J s

/// One fiber segment. Units follow common datasheet conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub alpha_db_per_km: f64,
    /// Group-velocity dispersion beta2, ps^2/km (negative for SSMF).
    pub beta2_ps2_per_km: f64,
    /// Kerr nonlinear coefficient, 1/(W km).
    pub gamma_per_w_km: f64,
    pub length_km: f64,
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::Config(format!("span length must be > 0, got {}", self.length_km)));
        }
        if self.alpha_db_per_km < 0.0 {
            return Err(Error::Config(format!(
                "attenuation must be >= 0, got {}",
                self.alpha_db_per_km
            )));
        }
        Ok(())
    }

    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.length_km
    }

    /// Attenuation in nepers per meter (field decays as exp(-alpha/2 z)).
    pub(crate) fn alpha_np_per_m(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    /// beta2 in s^2/m.
    pub(crate) fn beta2_si(&self) -> f64 {
        self.beta2_ps2_per_km * 1e-27
    }

    /// gamma in 1/(W m).
    pub(crate) fn gamma_si(&self) -> f64 {
        self.gamma_per_w_km * 1e-3
    }
}

impl Default for FiberParams {
    /// Standard single-mode fiber (D = 17 ps/nm/km at 1550 nm).
    fn default() -> Self {
        Self {
            alpha_db_per_km: 0.2,
            beta2_ps2_per_km: -21.68,
            gamma_per_w_km: 1.3,
            length_km: 80.0,
        }
    }
}

/// Amplifier gain policy. Span loss is always restored exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpGainMode {
    #[default]
    CompensateLoss,
}

/// Fiber link: spans, amplification and the dispersion pre-compensation share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub spans: Vec<FiberParams>,
    pub amp_noise_figure_db: f64,
    #[serde(default)]
    pub amp_gain_mode: AmpGainMode,
    /// Share of total dispersion compensated digitally at the transmitter.
    pub precomp_ratio: f64,
    pub center_wavelength_nm: f64,
}

impl LinkConfig {
    pub fn uniform(n_spans: usize, span: FiberParams, nf_db: f64, precomp_ratio: f64) -> Self {
        Self {
            spans: vec![span; n_spans],
            amp_noise_figure_db: nf_db,
            amp_gain_mode: AmpGainMode::CompensateLoss,
            precomp_ratio,
            center_wavelength_nm: 1550.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spans.is_empty() {
            return Err(Error::Config("link needs at least one span".into()));
        }
        if !(0.0..=1.0).contains(&self.precomp_ratio) {
            return Err(Error::Config(format!(
                "precomp ratio must be in [0,1], got {}",
                self.precomp_ratio
            )));
        }
        for s in &self.spans {
            s.validate()?;
        }
        Ok(())
    }

    pub fn total_length_km(&self) -> f64 {
        self.spans.iter().map(|s| s.length_km).sum()
    }

    /// Accumulated dispersion over the whole link, ps^2.
    pub fn total_beta2_ps2(&self) -> f64 {
        self.spans.iter().map(|s| s.beta2_ps2_per_km * s.length_km).sum()
    }

    pub fn center_frequency_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.center_wavelength_nm * 1e-9)
    }
}

/// Split-step accuracy control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfmControl {
    /// Per-step nonlinear phase bound at the instantaneous peak power.
    pub max_nl_phase_deg: f64,
    pub min_step_m: f64,
    pub max_step_m: f64,
}

impl Default for SsfmControl {
    fn default() -> Self {
        Self { max_nl_phase_deg: 0.05, min_step_m: 0.01, max_step_m: 1000.0 }
    }
}

impl SsfmControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_nl_phase_deg > 0.0) {
            return Err(Error::Config(format!(
                "max nonlinear phase must be > 0, got {}",
                self.max_nl_phase_deg
            )));
        }
        if !(self.min_step_m > 0.0) || self.max_step_m < self.min_step_m {
            return Err(Error::Config("step bounds must satisfy 0 < min <= max".into()));
        }
        Ok(())
    }
}
