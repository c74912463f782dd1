//! Subcommand implementations. Each returns the files it wrote so tests and
//! callers can chase the outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dscm_core::channel::transmit;
use dscm_core::error::{Error, Result};
use dscm_core::neural::BlockSpec;
use dscm_core::nlc::{attach_delay_plan, build_graph, complexity, ArchKind, GraphSpecs};
use dscm_core::perturbation::{compute_coeff_grid, DispersionMap, PertModelConfig};
use dscm_core::rxdsp::{dbp_equalize, q_factor, DbpOptions};
use dscm_core::signal::{write_waveform, Constellation};

use crate::config::ExperimentConfig;
use crate::output::{
    complexity_csv_header, complexity_csv_row, hash_of, metrics_csv_header, metrics_csv_row,
    pareto_envelope, write_atomic, RunRecord,
};
use crate::pipeline::{
    evaluate, evaluate_linear, gen_dataset, generate_frame, load_model, simulate_soft,
    train_model, Role,
};
use crate::sampling::sample_spec;

/// `simulate`: one tx -> link -> rx run at a given power; metrics CSV plus
/// an optional waveform dump.
pub fn simulate(
    cfg: &ExperimentConfig,
    root: &Path,
    power_dbm: f64,
    dump_waveform: bool,
) -> Result<PathBuf> {
    let frame = generate_frame(cfg, cfg.dataset.symbols_per_subcarrier, cfg.dataset.seeds.eval)?;
    let start = Instant::now();
    if dump_waveform {
        let link = cfg.link.to_link();
        let w = transmit(
            &frame,
            &link,
            &cfg.signal.to_transmit(),
            power_dbm,
            Some(cfg.dataset.seeds.noise_eval),
        )?;
        let dir = root.join("waveforms");
        std::fs::create_dir_all(&dir)?;
        write_waveform(
            &dir.join(format!("rx_{power_dbm}dBm.bin")),
            &w,
            cfg.signal.n_subcarriers,
            cfg.dataset.seeds.noise_eval,
        )?;
    }
    let soft = simulate_soft(cfg, &frame, power_dbm, Some(cfg.dataset.seeds.noise_eval))?;
    let c = Constellation::square_qam(cfg.signal.constellation_order)?;
    let metrics = q_factor(&soft, &frame, &c)?;
    let run_id = format!("simulate-{}-{power_dbm}dBm", hash_of(cfg));
    let csv = format!(
        "{}\n{}\n",
        metrics_csv_header(cfg.signal.n_subcarriers),
        metrics_csv_row(&run_id, power_dbm, "linear", 1, 0.0, &metrics)
    );
    let path = root.join("simulate").join(format!("{run_id}.csv"));
    write_atomic(&path, csv.as_bytes())?;
    let record = RunRecord {
        run_id,
        config_hash: hash_of(cfg),
        arch: "linear".into(),
        block_n: 1,
        power_dbm,
        metrics: Some(metrics.clone()),
        complexity: None,
        artifacts: vec![path.display().to_string()],
        wall_clock_s: start.elapsed().as_secs_f64(),
        error: None,
    };
    record.save(&root.join("records"))?;
    println!(
        "linear @ {power_dbm} dBm: Q {:.2} dB (EVM-Q {:.2} dB, BER {:.3e})",
        metrics.aggregate.q_db, metrics.aggregate.q_evm_db, metrics.aggregate.ber
    );
    Ok(path)
}

/// `gen-dataset`: persist a seeded tx/soft pair for one role.
pub fn gen_dataset_cmd(cfg: &ExperimentConfig, root: &Path, role: Role) -> Result<PathBuf> {
    let data = gen_dataset(cfg, root, role)?;
    let dir = crate::pipeline::dataset_dir(root, cfg, role);
    println!(
        "dataset {} ({} symbols/subcarrier) hash {} at {}",
        role.as_str(),
        data.manifest.symbols_per_subcarrier,
        data.manifest.data_hash,
        dir.display()
    );
    Ok(dir)
}

/// `train`: joint graph training on the train dataset; saves params+manifest.
pub fn train_cmd(cfg: &ExperimentConfig, root: &Path, arch: Option<ArchKind>) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    if let Some(kind) = arch {
        cfg.arch.kind = kind;
    }
    let data = gen_dataset(&cfg, root, Role::Train)?;
    let tag = format!("{}-{}", cfg.arch.kind, hash_of(&cfg));
    let (_, outcome, path) =
        train_model(&cfg, &data, None, &root.join("models"), &tag)?;
    println!(
        "trained {} in {} epochs (best val RMSE {:.5}{}), saved {}",
        cfg.arch.kind,
        outcome.history.len(),
        outcome.best_val_rmse,
        if outcome.stopped_early { ", early-stopped" } else { "" },
        path.display()
    );
    Ok(path)
}

/// `equalize`: run a trained model on the eval dataset.
pub fn equalize_cmd(
    cfg: &ExperimentConfig,
    root: &Path,
    model_path: &Path,
    block_n: usize,
    power_dbm: Option<f64>,
) -> Result<PathBuf> {
    let start = Instant::now();
    let model = load_model(model_path)?;
    let data = gen_dataset(cfg, root, Role::Eval)?;
    let p_inf = power_dbm.unwrap_or(cfg.dataset.launch_dbm);
    let metrics = evaluate(cfg, &model, &data, block_n, p_inf)?;
    let report = complexity(&model.graph, BlockSpec::new(block_n)?)?;
    let run_id = format!("equalize-{}-{}-n{}", model.graph.arch, hash_of(cfg), block_n);
    let csv = format!(
        "{}\n{}\n",
        metrics_csv_header(cfg.signal.n_subcarriers),
        metrics_csv_row(
            &run_id,
            p_inf,
            &model.graph.arch.to_string(),
            block_n,
            report.rmps,
            &metrics
        )
    );
    let path = root.join("equalize").join(format!("{run_id}.csv"));
    write_atomic(&path, csv.as_bytes())?;
    RunRecord {
        run_id,
        config_hash: hash_of(cfg),
        arch: model.graph.arch.to_string(),
        block_n,
        power_dbm: p_inf,
        metrics: Some(metrics.clone()),
        complexity: Some(report),
        artifacts: vec![path.display().to_string()],
        wall_clock_s: start.elapsed().as_secs_f64(),
        error: None,
    }
    .save(&root.join("records"))?;
    println!(
        "{} N={block_n} @ {p_inf} dBm: Q {:.2} dB (EVM-Q {:.2} dB)",
        model.graph.arch, metrics.aggregate.q_db, metrics.aggregate.q_evm_db
    );
    Ok(path)
}

/// `sweep`: trains a sampled population of specs for one architecture and
/// emits the scatter plus the Pareto envelope per block size. Failed runs
/// are quarantined, never fatal.
pub fn sweep_cmd(
    cfg: &ExperimentConfig,
    root: &Path,
    arch: ArchKind,
    n_models: Option<usize>,
) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    cfg.arch.kind = arch;
    let n_models = n_models.unwrap_or(cfg.sweep.n_models);
    let train_data = gen_dataset(&cfg, root, Role::Train)?;
    let eval_data = gen_dataset(&cfg, root, Role::Eval)?;
    let dir = root.join("sweeps").join(format!("{arch}-{}", hash_of(&cfg)));
    std::fs::create_dir_all(&dir)?;
    let mut scatter = vec![metrics_csv_header(cfg.signal.n_subcarriers)];
    let mut quarantine = vec!["run_id,error".to_string()];
    let mut points: Vec<(usize, f64, f64)> = Vec::new(); // (block, rmps, q_evm)
    for i in 0..n_models {
        let start = Instant::now();
        let single = sample_spec(&cfg.sweep, i, cfg.arch.single.leaky_slope);
        let pair = sample_spec(&cfg.sweep, i + n_models, cfg.arch.single.leaky_slope);
        let specs = GraphSpecs {
            single: single.clone(),
            pair,
            mlp_hidden_layers: single.mlp_hidden_layers,
            mlp_layer_size: single.mlp_layer_size.max(2),
        };
        let run_id = format!("{arch}-model{i:03}");
        let mut run_cfg = cfg.clone();
        run_cfg.train.seed = cfg.train.seed.wrapping_add(i as u64);
        let outcome = train_model(&run_cfg, &train_data, Some((&specs, arch)), &dir, &run_id)
            .and_then(|(model, _, _)| {
                let mut rows = Vec::new();
                for &n in &cfg.sweep.block_sizes {
                    let metrics = evaluate(&run_cfg, &model, &eval_data, n, cfg.dataset.launch_dbm)?;
                    let report = complexity(&model.graph, BlockSpec::new(n)?)?;
                    points.push((n, report.rmps, metrics.aggregate.q_evm_db));
                    rows.push(metrics_csv_row(
                        &format!("{run_id}-n{n}"),
                        cfg.dataset.launch_dbm,
                        &arch.to_string(),
                        n,
                        report.rmps,
                        &metrics,
                    ));
                }
                Ok(rows)
            });
        match outcome {
            Ok(rows) => scatter.extend(rows),
            Err(e) => {
                // Quarantined: the sweep carries on.
                quarantine.push(format!("{run_id},\"{e}\""));
                RunRecord {
                    run_id: run_id.clone(),
                    config_hash: hash_of(&run_cfg),
                    arch: arch.to_string(),
                    block_n: 0,
                    power_dbm: cfg.dataset.launch_dbm,
                    metrics: None,
                    complexity: None,
                    artifacts: vec![],
                    wall_clock_s: start.elapsed().as_secs_f64(),
                    error: Some(e.to_string()),
                }
                .save(&dir)?;
            }
        }
    }
    write_atomic(&dir.join("scatter.csv"), (scatter.join("\n") + "\n").as_bytes())?;
    write_atomic(&dir.join("quarantine.csv"), (quarantine.join("\n") + "\n").as_bytes())?;
    let mut envelope = vec!["arch,block_n,rmps,q_evm_db".to_string()];
    for &n in &cfg.sweep.block_sizes {
        let pts: Vec<(f64, f64)> =
            points.iter().filter(|p| p.0 == n).map(|p| (p.1, p.2)).collect();
        for (rmps, q) in pareto_envelope(&pts) {
            envelope.push(format!("{arch},{n},{rmps:.2},{q:.4}"));
        }
    }
    let env_path = dir.join("envelope.csv");
    write_atomic(&env_path, (envelope.join("\n") + "\n").as_bytes())?;
    println!("sweep {arch}: {n_models} models, outputs in {}", dir.display());
    Ok(env_path)
}

/// `power-sweep`: Q vs launch power for a trained model with the
/// power-scaling rule, next to linear-only and DBP baselines.
pub fn power_sweep_cmd(
    cfg: &ExperimentConfig,
    root: &Path,
    model_path: &Path,
    block_n: usize,
) -> Result<PathBuf> {
    let model = load_model(model_path)?;
    let c = Constellation::square_qam(cfg.signal.constellation_order)?;
    let mut rows = vec!["power_dbm,method,block_n,q_db,q_evm_db,ber,evm_db".to_string()];
    for &p in &cfg.power_sweep.grid_dbm {
        let mut point_cfg = cfg.clone();
        point_cfg.dataset.symbols_per_subcarrier = cfg.power_sweep.eval_symbols;
        point_cfg.dataset.launch_dbm = p;
        let data = gen_dataset(&point_cfg, root, Role::Eval)?;
        let mut emit = |method: &str, m: &dscm_core::rxdsp::MetricsReport| {
            rows.push(format!(
                "{p},{method},{block_n},{:.4},{:.4},{:.6e},{:.4}",
                m.aggregate.q_db, m.aggregate.q_evm_db, m.aggregate.ber, m.aggregate.evm_db
            ));
        };
        let linear = evaluate_linear(&point_cfg, &data)?;
        emit("linear", &linear);
        let nlc = evaluate(&point_cfg, &model, &data, block_n, p)?;
        emit(&format!("nlc-{}", model.graph.arch), &nlc);
        // DBP baselines re-run the waveform path at this power.
        let frame = generate_frame(&point_cfg, point_cfg.dataset.symbols_per_subcarrier, point_cfg.dataset.seeds.eval)?;
        let link = point_cfg.link.to_link();
        let w = transmit(
            &frame,
            &link,
            &point_cfg.signal.to_transmit(),
            p,
            Some(point_cfg.dataset.seeds.noise_eval),
        )?;
        for &stps in &cfg.rx.dbp_steps_per_span {
            let soft = dbp_equalize(
                &w,
                &link,
                &point_cfg.rx.to_chain(),
                &frame,
                point_cfg.signal.spacing(),
                &DbpOptions::per_span(cfg.rx.dbp_samples_per_symbol, stps),
            )?;
            emit(&format!("dbp-{stps}stps"), &q_factor(&soft, &frame, &c)?);
        }
    }
    let path = root
        .join("power_sweeps")
        .join(format!("{}-{}.csv", model.graph.arch, hash_of(cfg)));
    write_atomic(&path, (rows.join("\n") + "\n").as_bytes())?;
    println!("power sweep written to {}", path.display());
    Ok(path)
}

/// `pertcoef`: analytic coefficient grids exported as CSV + JSON metadata.
pub fn pertcoef_cmd(
    cfg: &ExperimentConfig,
    root: &Path,
    ells: &[i32],
    half_window: usize,
    map: DispersionMap,
) -> Result<PathBuf> {
    let mut link = cfg.link.to_link();
    link.precomp_ratio = map.precomp_ratio();
    let pert = PertModelConfig::new(
        link.clone(),
        cfg.signal.baud_per_subcarrier,
        cfg.signal.spacing(),
        map,
    );
    let dir = root.join("pertcoef");
    std::fs::create_dir_all(&dir)?;
    let map_tag = match map {
        DispersionMap::Symmetric => "sym",
        DispersionMap::Post => "post",
    };
    let mut last = PathBuf::new();
    for &ell in ells {
        let grid = compute_coeff_grid(&pert, ell, half_window)?;
        let side = grid.side() as i64;
        let hw = grid.half_window as i64;
        let mut csv = String::new();
        for m in 0..side {
            let row: Vec<String> = (0..side)
                .map(|n| format!("{:.6e}", grid.at(m - hw, n - hw).norm()))
                .collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        let base = dir.join(format!("c_{map_tag}_ell{ell}"));
        write_atomic(&base.with_extension("csv"), csv.as_bytes())?;
        let meta = serde_json::json!({
            "ell": ell,
            "map": map_tag,
            "half_window": half_window,
            "link_hash": hash_of(&link),
            "peak_abs": grid.max_abs(),
            "values": "magnitudes, row-major over m then n",
        });
        write_atomic(
            &base.with_extension("json"),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )?;
        last = base.with_extension("csv");
    }
    println!("coefficient grids in {}", dir.display());
    Ok(last)
}

/// `complexity`: closed-form RMpS for the configured architecture.
pub fn complexity_cmd(
    cfg: &ExperimentConfig,
    root: &Path,
    arch: Option<ArchKind>,
    block_sizes: &[usize],
) -> Result<PathBuf> {
    let kind = arch.unwrap_or(cfg.arch.kind);
    let mut graph = build_graph(kind, cfg.signal.n_subcarriers, cfg.arch.ell_max, &cfg.arch.to_specs())?;
    attach_delay_plan(
        &mut graph,
        &cfg.link.to_link(),
        cfg.signal.spacing(),
        cfg.signal.baud_per_subcarrier,
    )?;
    let spec_hash = hash_of(&cfg.arch);
    let mut rows = vec![complexity_csv_header().to_string()];
    for &n in block_sizes {
        let report = complexity(&graph, BlockSpec::new(n)?)?;
        rows.push(complexity_csv_row(&kind.to_string(), &spec_hash, &report));
        println!(
            "{kind} N={n}: RMpS {:.1} (cnn {:.1}, lstm {:.1}, proj {:.1}, mlp {:.1})",
            report.rmps, report.cnn_rm, report.lstm_rm, report.proj_rm, report.mlp_rm
        );
    }
    let path = root.join("complexity").join(format!("{kind}-{spec_hash}.csv"));
    write_atomic(&path, (rows.join("\n") + "\n").as_bytes())?;
    Ok(path)
}

pub fn parse_map(s: &str) -> Result<DispersionMap> {
    match s.to_ascii_lowercase().as_str() {
        "sym" | "symmetric" => Ok(DispersionMap::Symmetric),
        "post" => Ok(DispersionMap::Post),
        other => Err(Error::Config(format!("unknown dispersion map '{other}'"))),
    }
}
