//! Real-multiplication accounting per super-symbol.
//!
//! Per core instance at block size N with window N_w = 2t + N:
//!
//! ```text
//! CNN_RM  = C_in * N_f * N_ke * (N_w - N_ke + 1) / N
//! LSTM_RM = 2 * N_s * N_h * (4*(N_f + N_h) + 3) / N,  N_s = k + N
//! MLP_RM  = sum over layers of in*out      (per symbol, e.g. n_m*2N_h + 2n_m)
//! ```
//!
//! with the CNN channel factor scaled by the number of contributing
//! subcarriers (C_in = 4 per subcarrier). The optional LSTM output
//! projection is reported separately (2 * N_o * N_h per symbol) so the LSTM
//! term stays exactly the closed form. Totals sum every deployed instance
//! across one polarization's super-symbol.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::neural::{AnnCoreSpec, BlockSpec};

use super::{ComplexityReport, EqualizerGraph, GraphTopology, MlpShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCost {
    pub label: String,
    pub cnn_rm: f64,
    pub lstm_rm: f64,
    pub proj_rm: f64,
    pub mlp_rm: f64,
}

impl InstanceCost {
    pub fn total(&self) -> f64 {
        self.cnn_rm + self.lstm_rm + self.proj_rm + self.mlp_rm
    }
}

/// Closed-form CNN term.
pub fn cnn_rm(spec: &AnnCoreSpec, n: usize) -> f64 {
    let nw = 2 * spec.filter_tap + n;
    (spec.in_channels * spec.cnn_filters * spec.cnn_kernel * (nw - spec.cnn_kernel + 1)) as f64
        / n as f64
}

/// Closed-form combined forward+backward LSTM term.
pub fn lstm_rm(spec: &AnnCoreSpec, n: usize) -> f64 {
    let ns = spec.k() + n;
    (2 * ns * spec.lstm_hidden * (4 * (spec.cnn_filters + spec.lstm_hidden) + 3)) as f64
        / n as f64
}

fn proj_rm(spec: &AnnCoreSpec) -> f64 {
    if spec.has_projection() {
        (2 * spec.lstm_out_features * spec.lstm_hidden) as f64
    } else {
        0.0
    }
}

/// Attached-head MLP term per symbol.
fn head_mlp_rm(spec: &AnnCoreSpec) -> f64 {
    if spec.out_dim == 0 {
        return 0.0;
    }
    let mut total = 0usize;
    let mut cur = spec.feature_dim();
    for i in 0..=spec.mlp_hidden_layers {
        let out = if i == spec.mlp_hidden_layers { spec.out_dim } else { spec.mlp_layer_size };
        total += cur * out;
        cur = out;
    }
    total as f64
}

fn detached_mlp_rm(shape: &MlpShape) -> f64 {
    let mut total = 0usize;
    let mut cur = shape.in_dim;
    for i in 0..=shape.hidden_layers {
        let out = if i == shape.hidden_layers { shape.out_dim } else { shape.width };
        total += cur * out;
        cur = out;
    }
    total as f64
}

/// Per-instance and total RMpS of the deployed graph at block size N.
pub fn complexity(graph: &EqualizerGraph, block: BlockSpec) -> Result<ComplexityReport> {
    let n = block.n;
    let mut per_instance = Vec::new();
    match &graph.topology {
        GraphTopology::Headed { cores } => {
            for core in cores {
                let spec = &graph.core_groups[&core.inst.group];
                per_instance.push(InstanceCost {
                    label: core.inst.label.clone(),
                    cnn_rm: cnn_rm(spec, n),
                    lstm_rm: lstm_rm(spec, n),
                    proj_rm: proj_rm(spec),
                    mlp_rm: head_mlp_rm(spec),
                });
            }
        }
        GraphTopology::Detached { producers, mlps } => {
            for prod in producers {
                let spec = &graph.core_groups[&prod.group];
                per_instance.push(InstanceCost {
                    label: prod.label.clone(),
                    cnn_rm: cnn_rm(spec, n),
                    lstm_rm: lstm_rm(spec, n),
                    proj_rm: proj_rm(spec),
                    mlp_rm: 0.0,
                });
            }
            for mlp in mlps {
                per_instance.push(InstanceCost {
                    label: format!("{}@{}", mlp.variant, mlp.target_sc),
                    cnn_rm: 0.0,
                    lstm_rm: 0.0,
                    proj_rm: 0.0,
                    mlp_rm: detached_mlp_rm(&graph.mlp_groups[&mlp.variant]),
                });
            }
        }
    }
    let sum = |f: fn(&InstanceCost) -> f64| per_instance.iter().map(f).sum::<f64>();
    let report = ComplexityReport {
        block_n: n,
        cnn_rm: sum(|c| c.cnn_rm),
        lstm_rm: sum(|c| c.lstm_rm),
        proj_rm: sum(|c| c.proj_rm),
        mlp_rm: sum(|c| c.mlp_rm),
        rmps: per_instance.iter().map(|c| c.total()).sum(),
        per_instance,
    };
    Ok(report)
}
