//! The multi-purpose equalizer core: 1-D CNN + LeakyReLU feeding a
//! bidirectional LSTM, finished by an optional per-direction projection and
//! an MLP head. Includes hand-rolled reverse-mode gradients, Adam with
//! plateau LR scheduling and early stopping, and block-mode inference.
//!
//! Training always runs symbol-by-symbol (window length 2t+1); deployment
//! may batch N symbols per LSTM pass (window 2t+N), trading a state
//! approximation at the block edges for a large cut in per-symbol work.

mod core_fwd;
mod dataset;
mod params;
mod store;
mod train;

pub use core_fwd::{
    core_backward, core_forward_block, core_forward_symbol, mlp_backward, mlp_forward, CoreCache,
    MlpTape, MulCount,
};
pub use dataset::{gather_window, SequenceDataset};
pub use params::{CoreParams, Lin, LstmParams, MlpParams};
pub use store::{read_param_store, write_param_store, ParamStore, Tensor};
pub use train::{run_training, split_indices, train_core, Adam, EpochStats, TrainOutcome, TrainRun};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters of one CNN + biLSTM + MLP core.
///
/// Channel contract: inputs are ordered `[XI, XQ, YI, YQ]` per contributing
/// subcarrier, subcarriers by spectral position, so `in_channels` is always
/// four times the number of contributing subcarriers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnCoreSpec {
    /// Set by the graph builder from the wiring; configs may omit it.
    #[serde(default)]
    pub in_channels: usize,
    /// CNN output channels N_f.
    pub cnn_filters: usize,
    /// CNN kernel size N_ke (odd; valid convolution).
    pub cnn_kernel: usize,
    /// LSTM hidden size N_h.
    pub lstm_hidden: usize,
    /// LSTM output features per direction; a linear projection follows the
    /// cell when this differs from `lstm_hidden`.
    pub lstm_out_features: usize,
    /// Hidden layers in the MLP head (0..=2).
    pub mlp_hidden_layers: usize,
    /// Hidden layer width n_m.
    pub mlp_layer_size: usize,
    /// Side context t: the symbol-mode input covers 2t+1 instants.
    pub filter_tap: usize,
    pub leaky_slope: f64,
    /// Head outputs per target instant (I and Q per equalized subcarrier).
    /// Zero means a headless feature core (detached-MLP designs). Set by
    /// the graph builder; configs may omit it.
    #[serde(default)]
    pub out_dim: usize,
}

impl AnnCoreSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cnn_kernel % 2 == 0 || self.cnn_kernel == 0 {
            return Err(Error::Config(format!("kernel must be odd, got {}", self.cnn_kernel)));
        }
        if self.filter_tap < (self.cnn_kernel - 1) / 2 {
            return Err(Error::Config(format!(
                "filter tap {} too small for kernel {}",
                self.filter_tap, self.cnn_kernel
            )));
        }
        if self.in_channels == 0
            || self.cnn_filters == 0
            || self.lstm_hidden == 0
            || self.lstm_out_features == 0
        {
            return Err(Error::Config("zero-sized layer".into()));
        }
        if self.mlp_hidden_layers > 2 {
            return Err(Error::Config(format!(
                "at most 2 hidden layers, got {}",
                self.mlp_hidden_layers
            )));
        }
        if self.mlp_hidden_layers > 0 && self.mlp_layer_size == 0 {
            return Err(Error::Config("hidden layers need a nonzero width".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!("leaky slope {} out of (0,1)", self.leaky_slope)));
        }
        Ok(())
    }

    /// Side context after the CNN: k = t - (N_ke - 1)/2.
    pub fn k(&self) -> usize {
        self.filter_tap - (self.cnn_kernel - 1) / 2
    }

    /// Symbol-mode input length 2t+1.
    pub fn window_len(&self) -> usize {
        2 * self.filter_tap + 1
    }

    /// Features per target instant delivered to the head (both directions).
    pub fn feature_dim(&self) -> usize {
        2 * self.lstm_out_features
    }

    pub fn has_projection(&self) -> bool {
        self.lstm_out_features != self.lstm_hidden
    }
}

/// Block-mode deployment geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub n: usize,
}

impl BlockSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("block size must be >= 1".into()));
        }
        Ok(Self { n })
    }
}

/// Launch-power adaptation of nonlinear error estimates:
/// `alpha = 10^((P_inf - P_train)/10)`.
pub fn power_scale_factor(p_train_dbm: f64, p_inf_dbm: f64) -> f64 {
    10f64.powf((p_inf_dbm - p_train_dbm) / 10.0)
}

/// Scales complex error estimates in place by the power-adaptation factor.
pub fn power_scale(estimates: &mut [Complex64], p_train_dbm: f64, p_inf_dbm: f64) {
    let alpha = power_scale_factor(p_train_dbm, p_inf_dbm);
    for e in estimates.iter_mut() {
        *e *= alpha;
    }
}
