//! Macro-architectures for nonlinear compensation: Common-Core (CC),
//! Separate-Core-per-Band (SC), Modular-I (M1) and Modular-II (M2), wired
//! from equalizer cores with explicit weight-sharing groups, plus
//! real-multiplication accounting and dispersion-map delay alignment.

mod build;
mod complexity;
mod delay;
mod equalize;
mod train_graph;

pub use build::{build_graph, graph_params_to_store, init_graph_params, store_to_graph_params, GraphSpecs};
pub use complexity::{cnn_rm, complexity, lstm_rm, InstanceCost};
pub use delay::{attach_delay_plan, delay_align, delay_plan, DelayDirection};
pub use equalize::{count_real_muls, equalize, FeatureBank};
pub use train_graph::train_graph;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{AnnCoreSpec, CoreParams, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Cc,
    Sc,
    M1,
    M2,
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ArchKind::Cc => "cc",
            ArchKind::Sc => "sc",
            ArchKind::M1 => "m1",
            ArchKind::M2 => "m2",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(ArchKind::Cc),
            "sc" => Ok(ArchKind::Sc),
            "m1" => Ok(ArchKind::M1),
            "m2" => Ok(ArchKind::M2),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

/// One deployed core instance referencing its weight group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreInstance {
    pub group: String,
    /// Contributing subcarriers, ordered by spectral position.
    pub input_scs: Vec<usize>,
    pub label: String,
}

/// Output routing of a headed core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Targets {
    /// CC: one head emits I/Q for every subcarrier.
    All,
    One(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadedCore {
    pub inst: CoreInstance,
    pub targets: Targets,
}

/// M2 detached MLP deployment: which producers feed which subcarrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpInstance {
    /// Weight group (variant) id.
    pub variant: String,
    pub target_sc: usize,
    /// Producer indices, concatenation order: iSPM first, then iXPM by
    /// signed offset ascending.
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraphTopology {
    /// CC / SC / M1: cores own their MLP heads.
    Headed { cores: Vec<HeadedCore> },
    /// M2: headless feature cores plus detached per-position MLPs.
    Detached { producers: Vec<CoreInstance>, mlps: Vec<MlpInstance> },
}

/// Geometry of one detached MLP variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub in_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub out_dim: usize,
}

/// Wiring of core instances into one equalizer, with shared-weight groups
/// and the per-subcarrier delay plan for asymmetric dispersion maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizerGraph {
    pub arch: ArchKind,
    pub n_subcarriers: usize,
    pub ell_max: usize,
    pub topology: GraphTopology,
    pub core_groups: BTreeMap<String, AnnCoreSpec>,
    pub mlp_groups: BTreeMap<String, MlpShape>,
    /// Per-subcarrier integer symbol delays; `None` until attached via
    /// [`delay_plan`]. All zeros for the symmetric map.
    pub delay_plan: Option<Vec<i64>>,
}

impl EqualizerGraph {
    pub fn leaky_slope(&self) -> f64 {
        self.core_groups.values().next().map_or(0.01, |s| s.leaky_slope)
    }

    /// Largest side context over all core groups (inference context need).
    pub fn max_filter_tap(&self) -> usize {
        self.core_groups.values().map(|s| s.filter_tap).max().unwrap_or(0)
    }
}

/// Learned parameters keyed by weight group. One entry serves every
/// instance of its group, which is what makes the sharing real.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphParams {
    pub cores: BTreeMap<String, CoreParams>,
    pub mlps: BTreeMap<String, MlpParams>,
}

impl GraphParams {
    pub fn n_params(&self) -> usize {
        let cores: usize = self.cores.values().map(|c| c.n_params()).sum();
        let mlps: usize = self
            .mlps
            .values()
            .flat_map(|m| m.layers.iter())
            .map(|l| l.w.len() + l.b.len())
            .sum();
        cores + mlps
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for c in self.cores.values() {
            c.flatten_into(&mut out);
        }
        for m in self.mlps.values() {
            for l in &m.layers {
                out.extend_from_slice(&l.w);
                out.extend_from_slice(&l.b);
            }
        }
        out
    }

    pub fn unflatten_from(&mut self, flat: &[f64]) {
        let mut off = 0;
        for c in self.cores.values_mut() {
            let n = c.n_params();
            c.unflatten_from(&flat[off..off + n]);
            off += n;
        }
        for m in self.mlps.values_mut() {
            for l in &mut m.layers {
                let nw = l.w.len();
                l.w.copy_from_slice(&flat[off..off + nw]);
                off += nw;
                let nb = l.b.len();
                l.b.copy_from_slice(&flat[off..off + nb]);
                off += nb;
            }
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            cores: self.cores.iter().map(|(k, v)| (k.clone(), v.zeros_like())).collect(),
            mlps: self.mlps.iter().map(|(k, v)| (k.clone(), v.zeros_like())).collect(),
        }
    }
}

/// A graph with its learned parameters and training launch power.
#[derive(Debug, Clone)]
pub struct TrainedEqualizer {
    pub graph: EqualizerGraph,
    pub params: GraphParams,
    pub p_train_dbm: f64,
}

/// Per-core and total real multiplications per super-symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub block_n: usize,
    pub per_instance: Vec<InstanceCost>,
    pub cnn_rm: f64,
    pub lstm_rm: f64,
    pub proj_rm: f64,
    pub mlp_rm: f64,
    pub rmps: f64,
}
