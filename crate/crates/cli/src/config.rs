//! Experiment configuration: one JSON file drives every subcommand.
//!
//! See `configs/desk.json` in the repository root for a complete example;
//! `ExperimentConfig::desk_default()` and `paper_default()` are the two
//! built-in profiles.

use serde::{Deserialize, Serialize};

use dscm_core::channel::{FiberParams, LinkConfig, SsfmControl, TransmitConfig};
use dscm_core::error::{Error, Result};
use dscm_core::neural::{AnnCoreSpec, TrainRun};
use dscm_core::nlc::{ArchKind, GraphSpecs};
use dscm_core::rxdsp::{CarrierRecovery, CdcMode, RxChainConfig};
use dscm_core::signal::PowerNorm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Scaled-down sizes that run on a desk.
    Desk,
    /// The full study scale (multi-hour runs).
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSection {
    pub n_spans: usize,
    pub span: FiberParams,
    pub nf_db: f64,
    pub precomp_ratio: f64,
    pub wavelength_nm: f64,
}

impl LinkSection {
    pub fn to_link(&self) -> LinkConfig {
        let mut link = LinkConfig::uniform(self.n_spans, self.span, self.nf_db, self.precomp_ratio);
        link.center_wavelength_nm = self.wavelength_nm;
        link
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSection {
    pub n_subcarriers: usize,
    pub baud_per_subcarrier: f64,
    pub roll_off: f64,
    /// Defaults to baud * (1 + roll_off) when omitted: Nyquist-separated.
    pub spacing_hz: Option<f64>,
    /// Samples per subcarrier symbol in the simulation band.
    pub sps: usize,
    pub constellation_order: usize,
    pub power_norm: PowerNorm,
    pub max_nl_phase_deg: f64,
}

impl SignalSection {
    pub fn spacing(&self) -> f64 {
        self.spacing_hz
            .unwrap_or(self.baud_per_subcarrier * (1.0 + self.roll_off))
    }

    pub fn to_transmit(&self) -> TransmitConfig {
        TransmitConfig {
            spacing_hz: self.spacing(),
            sps: self.sps,
            power_norm: self.power_norm,
            ssfm: SsfmControl { max_nl_phase_deg: self.max_nl_phase_deg, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxSection {
    pub cr_window: usize,
    pub dbp_samples_per_symbol: usize,
    pub dbp_steps_per_span: Vec<usize>,
}

impl RxSection {
    pub fn to_chain(&self) -> RxChainConfig {
        RxChainConfig {
            cdc_mode: CdcMode::ResidualAfterPrecomp,
            carrier_recovery: CarrierRecovery::GenieDataAided { window: self.cr_window },
            dbp: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSection {
    pub train: u64,
    pub eval: u64,
    pub noise_train: u64,
    pub noise_eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub symbols_per_subcarrier: usize,
    pub launch_dbm: f64,
    pub seeds: SeedSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSection {
    pub kind: ArchKind,
    pub ell_max: usize,
    pub single: AnnCoreSpec,
    pub pair: AnnCoreSpec,
    pub mlp_hidden_layers: usize,
    pub mlp_layer_size: usize,
}

impl ArchSection {
    pub fn to_specs(&self) -> GraphSpecs {
        GraphSpecs {
            single: self.single.clone(),
            pair: self.pair.clone(),
            mlp_hidden_layers: self.mlp_hidden_layers,
            mlp_layer_size: self.mlp_layer_size,
        }
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub lo: usize,
    pub hi: usize,
}

impl Range {
    pub fn contains(&self, v: usize) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub n_models: usize,
    pub block_sizes: Vec<usize>,
    pub seed: u64,
    pub filter_tap: Range,
    pub cnn_filters: Range,
    pub cnn_kernel: Range,
    pub lstm_hidden: Range,
    pub lstm_out_features: Range,
    pub mlp_hidden_layers: Range,
    pub mlp_layer_size: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweepSection {
    pub grid_dbm: Vec<f64>,
    pub eval_symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub link: LinkSection,
    pub signal: SignalSection,
    pub rx: RxSection,
    pub dataset: DatasetSection,
    pub train: TrainRun,
    pub arch: ArchSection,
    pub sweep: SweepSection,
    pub power_sweep: PowerSweepSection,
}

impl ExperimentConfig {
    pub fn desk_default() -> Self {
        let single = AnnCoreSpec {
            in_channels: 0,
            cnn_filters: 10,
            cnn_kernel: 5,
            lstm_hidden: 12,
            lstm_out_features: 12,
            mlp_hidden_layers: 1,
            mlp_layer_size: 24,
            filter_tap: 10,
            leaky_slope: 0.01,
            out_dim: 0,
        };
        let pair = AnnCoreSpec { cnn_filters: 12, lstm_hidden: 16, lstm_out_features: 16, ..single.clone() };
        Self {
            profile: Profile::Desk,
            link: LinkSection {
                n_spans: 10,
                span: FiberParams::default(),
                nf_db: 6.0,
                precomp_ratio: 0.5,
                wavelength_nm: 1550.0,
            },
            signal: SignalSection {
                n_subcarriers: 4,
                baud_per_subcarrier: 8e9,
                roll_off: 1.0 / 16.0,
                spacing_hz: None,
                sps: 16,
                constellation_order: 16,
                power_norm: PowerNorm::Global,
                max_nl_phase_deg: 0.05,
            },
            rx: RxSection {
                cr_window: 64,
                dbp_samples_per_symbol: 2,
                dbp_steps_per_span: vec![1, 2],
            },
            dataset: DatasetSection {
                symbols_per_subcarrier: 1 << 14,
                launch_dbm: 6.0,
                seeds: SeedSection { train: 11, eval: 22, noise_train: 1001, noise_eval: 2002 },
            },
            train: TrainRun {
                lr: 1e-3,
                batch: 128,
                max_epochs: 80,
                early_stop_patience: 30,
                lr_factor: 0.8,
                lr_patience: 10,
                min_lr: 1e-6,
                p_train_dbm: 6.0,
                validation_fraction: 0.2,
                seed: 7,
            },
            arch: ArchSection {
                kind: ArchKind::M2,
                ell_max: 1,
                single,
                pair,
                mlp_hidden_layers: 1,
                mlp_layer_size: 24,
            },
            sweep: SweepSection {
                n_models: 8,
                block_sizes: vec![1, 16, 1024],
                seed: 99,
                filter_tap: Range { lo: 5, hi: 14 },
                cnn_filters: Range { lo: 10, hi: 24 },
                cnn_kernel: Range { lo: 5, hi: 9 },
                lstm_hidden: Range { lo: 10, hi: 32 },
                lstm_out_features: Range { lo: 10, hi: 32 },
                mlp_hidden_layers: Range { lo: 0, hi: 2 },
                mlp_layer_size: Range { lo: 10, hi: 40 },
            },
            power_sweep: PowerSweepSection {
                grid_dbm: vec![-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0],
                eval_symbols: 1 << 13,
            },
        }
    }

    /// The full study scale: 40 x 80 km, 2^18 symbols per subcarrier,
    /// Table-1 sweep ranges.
    pub fn paper_default() -> Self {
        let mut cfg = Self::desk_default();
        cfg.profile = Profile::Paper;
        cfg.link.n_spans = 40;
        cfg.dataset.symbols_per_subcarrier = 1 << 18;
        cfg.dataset.launch_dbm = 2.0;
        cfg.train.batch = 512;
        cfg.train.max_epochs = 200;
        cfg.train.p_train_dbm = 2.0;
        cfg.sweep.filter_tap = Range { lo: 5, hi: 40 };
        cfg.sweep.cnn_filters = Range { lo: 10, hi: 200 };
        cfg.sweep.cnn_kernel = Range { lo: 5, hi: 29 };
        cfg.sweep.lstm_hidden = Range { lo: 10, hi: 300 };
        cfg.sweep.lstm_out_features = Range { lo: 10, hi: 300 };
        cfg.sweep.mlp_hidden_layers = Range { lo: 0, hi: 2 };
        cfg.sweep.mlp_layer_size = Range { lo: 10, hi: 100 };
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.link.to_link().validate()?;
        if self.dataset.seeds.train == self.dataset.seeds.eval {
            return Err(Error::Config("train and eval seeds must differ".into()));
        }
        if self.signal.spacing() < self.signal.baud_per_subcarrier {
            return Err(Error::Config("spacing below baud".into()));
        }
        if !self.signal.constellation_order.is_power_of_two() {
            return Err(Error::Config("constellation order must be a power of two".into()));
        }
        if self.profile == Profile::Paper {
            // Table-1 bounds are binding in paper mode.
            let t1 = [
                (self.sweep.filter_tap, 5usize, 40usize, "filter_tap"),
                (self.sweep.cnn_filters, 10, 200, "cnn_filters"),
                (self.sweep.cnn_kernel, 5, 30, "cnn_kernel"),
                (self.sweep.lstm_hidden, 10, 300, "lstm_hidden"),
                (self.sweep.lstm_out_features, 10, 300, "lstm_out_features"),
                (self.sweep.mlp_hidden_layers, 0, 2, "mlp_hidden_layers"),
                (self.sweep.mlp_layer_size, 10, 100, "mlp_layer_size"),
            ];
            for (r, lo, hi, name) in t1 {
                if r.lo < lo || r.hi > hi {
                    return Err(Error::Config(format!(
                        "paper-mode sweep range {name} [{}, {}] outside [{lo}, {hi}]",
                        r.lo, r.hi
                    )));
                }
            }
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
