//! Shared experiment plumbing: dataset generation and persistence, model
//! training/saving/loading, and evaluation against references.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dscm_core::channel::transmit;
use dscm_core::error::{Error, Result};
use dscm_core::neural::{read_param_store, write_param_store, BlockSpec, TrainOutcome};
use dscm_core::nlc::{
    attach_delay_plan, build_graph, equalize, graph_params_to_store, store_to_graph_params,
    train_graph, ArchKind, EqualizerGraph, GraphSpecs, TrainedEqualizer,
};
use dscm_core::rxdsp::{q_factor, rx_linear, MetricsReport};
use dscm_core::signal::{
    map_symbols, read_frame, write_frame, Constellation, PolSymbols, SubcarrierSymbolFrame,
};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::config::ExperimentConfig;
use crate::output::{fnv1a64, hash_of, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Eval,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Eval => "eval",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Role::Train),
            "eval" => Ok(Role::Eval),
            other => Err(Error::Config(format!("unknown role '{other}'"))),
        }
    }
}

/// PCG64-seeded uniform bit stream mapped through the configured
/// constellation into a frame.
pub fn generate_frame(cfg: &ExperimentConfig, n_symbols: usize, seed: u64) -> Result<SubcarrierSymbolFrame> {
    let c = Constellation::square_qam(cfg.signal.constellation_order)?;
    let m = c.bits_per_symbol() as usize;
    let mut rng = Pcg64::seed_from_u64(seed);
    let subcarriers = (0..cfg.signal.n_subcarriers)
        .map(|_| {
            let mut stream = || -> Result<Vec<_>> {
                let bits: Vec<u8> = (0..m * n_symbols).map(|_| rng.gen_range(0..=1u8)).collect();
                map_symbols(&bits, &c)
            };
            Ok(PolSymbols { x: stream()?, y: stream()? })
        })
        .collect::<Result<Vec<_>>>()?;
    SubcarrierSymbolFrame::new(
        subcarriers,
        cfg.signal.baud_per_subcarrier,
        cfg.signal.roll_off,
    )
}

/// Full tx -> link -> linear-rx run at the given power, returning the
/// aligned soft frame.
pub fn simulate_soft(
    cfg: &ExperimentConfig,
    frame: &SubcarrierSymbolFrame,
    launch_dbm: f64,
    noise_seed: Option<u64>,
) -> Result<SubcarrierSymbolFrame> {
    let link = cfg.link.to_link();
    let tx_cfg = cfg.signal.to_transmit();
    let w = transmit(frame, &link, &tx_cfg, launch_dbm, noise_seed)?;
    rx_linear(&w, &link, &cfg.rx.to_chain(), frame, cfg.signal.spacing())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub role: Role,
    pub seed: u64,
    pub noise_seed: u64,
    pub launch_dbm: f64,
    pub symbols_per_subcarrier: usize,
    pub n_subcarriers: usize,
    pub baud_per_subcarrier: f64,
    pub roll_off: f64,
    /// FNV over the tx and soft payload bytes.
    pub data_hash: String,
}

pub struct Dataset {
    pub tx: SubcarrierSymbolFrame,
    pub soft: SubcarrierSymbolFrame,
    pub manifest: DatasetManifest,
}

/// Datasets are keyed by the sections that shape the data, so training or
/// sweep edits reuse cached transmissions.
pub fn dataset_key(cfg: &ExperimentConfig) -> String {
    hash_of(&(&cfg.link, &cfg.signal, &cfg.dataset, &cfg.rx))
}

pub fn dataset_dir(root: &Path, cfg: &ExperimentConfig, role: Role) -> PathBuf {
    root.join("datasets").join(format!("{}-{}", dataset_key(cfg), role.as_str()))
}

/// Generates and persists a tx/soft pair (or reuses files already present).
/// Partial outputs from a failed run are cleaned up.
pub fn gen_dataset(cfg: &ExperimentConfig, root: &Path, role: Role) -> Result<Dataset> {
    let (seed, noise_seed) = match role {
        Role::Train => (cfg.dataset.seeds.train, cfg.dataset.seeds.noise_train),
        Role::Eval => (cfg.dataset.seeds.eval, cfg.dataset.seeds.noise_eval),
    };
    let dir = dataset_dir(root, cfg, role);
    let tx_path = dir.join("tx.bin");
    let soft_path = dir.join("soft.bin");
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
        let (tx, _) = read_frame(&tx_path, cfg.signal.roll_off)?;
        let (soft, _) = read_frame(&soft_path, cfg.signal.roll_off)?;
        return Ok(Dataset { tx, soft, manifest });
    }
    std::fs::create_dir_all(&dir)?;
    let result = (|| -> Result<Dataset> {
        let tx = generate_frame(cfg, cfg.dataset.symbols_per_subcarrier, seed)?;
        let soft = simulate_soft(cfg, &tx, cfg.dataset.launch_dbm, Some(noise_seed))?;
        write_frame(&tx_path, &tx, seed, cfg.dataset.launch_dbm)?;
        write_frame(&soft_path, &soft, seed, cfg.dataset.launch_dbm)?;
        let mut bytes = std::fs::read(&tx_path)?;
        bytes.extend(std::fs::read(&soft_path)?);
        let manifest = DatasetManifest {
            config_hash: hash_of(cfg),
            role,
            seed,
            noise_seed,
            launch_dbm: cfg.dataset.launch_dbm,
            symbols_per_subcarrier: cfg.dataset.symbols_per_subcarrier,
            n_subcarriers: cfg.signal.n_subcarriers,
            baud_per_subcarrier: cfg.signal.baud_per_subcarrier,
            roll_off: cfg.signal.roll_off,
            data_hash: format!("{:016x}", fnv1a64(&bytes)),
        };
        write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(Dataset { tx, soft, manifest })
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&dir);
    }
    result
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub version: u32,
    pub config_hash: String,
    pub arch: ArchKind,
    pub ell_max: usize,
    pub n_subcarriers: usize,
    pub p_train_dbm: f64,
    pub best_val_rmse: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub adam: (f64, f64, f64),
    /// Resolved open choices baked into this artifact.
    pub notes: Vec<String>,
    pub graph: EqualizerGraph,
}

/// Builds the configured graph (with the link's delay plan attached),
/// trains it jointly on the dataset, and persists parameters + manifest.
pub fn train_model(
    cfg: &ExperimentConfig,
    data: &Dataset,
    specs_override: Option<(&GraphSpecs, ArchKind)>,
    out_dir: &Path,
    tag: &str,
) -> Result<(TrainedEqualizer, TrainOutcome, PathBuf)> {
    let (specs, kind) = match specs_override {
        Some((s, k)) => (s.clone(), k),
        None => (cfg.arch.to_specs(), cfg.arch.kind),
    };
    let mut graph = build_graph(kind, cfg.signal.n_subcarriers, cfg.arch.ell_max, &specs)?;
    attach_delay_plan(
        &mut graph,
        &cfg.link.to_link(),
        cfg.signal.spacing(),
        cfg.signal.baud_per_subcarrier,
    )?;
    let (model, outcome) = train_graph(&graph, &cfg.train, &data.tx, &data.soft)?;
    let path = save_model(cfg, &model, &outcome, out_dir, tag)?;
    Ok((model, outcome, path))
}

pub fn save_model(
    cfg: &ExperimentConfig,
    model: &TrainedEqualizer,
    outcome: &TrainOutcome,
    out_dir: &Path,
    tag: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let base = out_dir.join(tag);
    let store = graph_params_to_store(&model.graph, &model.params)?;
    write_param_store(&base.with_extension("params"), &store)?;
    let manifest = ModelManifest {
        version: 1,
        config_hash: hash_of(cfg),
        arch: model.graph.arch,
        ell_max: model.graph.ell_max,
        n_subcarriers: model.graph.n_subcarriers,
        p_train_dbm: model.p_train_dbm,
        best_val_rmse: outcome.best_val_rmse,
        epochs_run: outcome.history.len(),
        stopped_early: outcome.stopped_early,
        adam: (0.9, 0.999, 1e-8),
        notes: vec![
            "cc head: one shared MLP emitting I/Q for all subcarriers".into(),
            "power normalization: global across subcarriers".into(),
        ],
        graph: model.graph.clone(),
    };
    write_atomic(
        &base.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(base.with_extension("params"))
}

/// Loads a model saved by [`save_model`]; parameters are shape-checked
/// against the manifest's graph.
pub fn load_model(params_path: &Path) -> Result<TrainedEqualizer> {
    let manifest_path = params_path.with_extension("json");
    let manifest: ModelManifest =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    let store = read_param_store(params_path)?;
    let params = store_to_graph_params(&manifest.graph, &store)?;
    Ok(TrainedEqualizer { graph: manifest.graph, params, p_train_dbm: manifest.p_train_dbm })
}

/// Equalizes the soft frame with the model and scores it against tx.
pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &TrainedEqualizer,
    data: &Dataset,
    block_n: usize,
    p_inf_dbm: f64,
) -> Result<MetricsReport> {
    let corrected = equalize(model, &data.soft, BlockSpec::new(block_n)?, p_inf_dbm)?;
    let c = Constellation::square_qam(cfg.signal.constellation_order)?;
    q_factor(&corrected, &data.tx, &c)
}

/// Linear-only baseline metrics.
pub fn evaluate_linear(cfg: &ExperimentConfig, data: &Dataset) -> Result<MetricsReport> {
    let c = Constellation::square_qam(cfg.signal.constellation_order)?;
    q_factor(&data.soft, &data.tx, &c)
}
