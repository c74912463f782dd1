//! End-to-end harness coverage on a miniature experiment: every subcommand
//! runs against one shared temp output root.

use std::fs;
use std::path::PathBuf;

use dscm_cli::commands;
use dscm_cli::config::ExperimentConfig;
use dscm_cli::pipeline::{self, Role};
use dscm_core::neural::AnnCoreSpec;
use dscm_core::nlc::ArchKind;
use dscm_core::perturbation::DispersionMap;

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.link.n_spans = 2;
    cfg.dataset.symbols_per_subcarrier = 1 << 10;
    cfg.dataset.launch_dbm = 2.0;
    let small = AnnCoreSpec {
        in_channels: 0,
        cnn_filters: 4,
        cnn_kernel: 3,
        lstm_hidden: 6,
        lstm_out_features: 6,
        mlp_hidden_layers: 1,
        mlp_layer_size: 8,
        filter_tap: 4,
        leaky_slope: 0.01,
        out_dim: 0,
    };
    cfg.arch.single = small.clone();
    cfg.arch.pair = small;
    cfg.arch.mlp_layer_size = 8;
    cfg.train.max_epochs = 4;
    cfg.train.batch = 128;
    cfg.sweep.n_models = 2;
    cfg.sweep.block_sizes = vec![1, 16];
    cfg.sweep.filter_tap = dscm_cli::config::Range { lo: 3, hi: 6 };
    cfg.sweep.cnn_filters = dscm_cli::config::Range { lo: 3, hi: 6 };
    cfg.sweep.cnn_kernel = dscm_cli::config::Range { lo: 3, hi: 5 };
    cfg.sweep.lstm_hidden = dscm_cli::config::Range { lo: 4, hi: 8 };
    cfg.sweep.lstm_out_features = dscm_cli::config::Range { lo: 4, hi: 8 };
    cfg.sweep.mlp_layer_size = dscm_cli::config::Range { lo: 4, hi: 8 };
    cfg.power_sweep.grid_dbm = vec![-2.0, 2.0];
    cfg.power_sweep.eval_symbols = 1 << 9;
    cfg
}

fn temp_root(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dscm_cli_smoke_{tag}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn full_command_surface() {
    let cfg = tiny_config();
    cfg.validate().unwrap();
    let root = temp_root("surface");

    // simulate
    let csv = commands::simulate(&cfg, &root, 2.0, false).unwrap();
    let body = fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("run_id,power_dbm,arch,block_n,rmps,q_db,ber,evm_db"));
    assert_eq!(body.lines().count(), 2);

    // gen-dataset both roles
    let train_dir = commands::gen_dataset_cmd(&cfg, &root, Role::Train).unwrap();
    assert!(train_dir.join("tx.bin").exists());
    assert!(train_dir.join("soft.bin").exists());
    assert!(train_dir.join("manifest.json").exists());
    commands::gen_dataset_cmd(&cfg, &root, Role::Eval).unwrap();

    // train + equalize
    let model_path = commands::train_cmd(&cfg, &root, Some(ArchKind::M2)).unwrap();
    assert!(model_path.exists());
    assert!(model_path.with_extension("json").exists());
    let eq_csv = commands::equalize_cmd(&cfg, &root, &model_path, 16, None).unwrap();
    assert!(fs::read_to_string(&eq_csv).unwrap().lines().count() == 2);

    // complexity
    let cx = commands::complexity_cmd(&cfg, &root, Some(ArchKind::M1), &[1, 16]).unwrap();
    let cx_body = fs::read_to_string(&cx).unwrap();
    assert!(cx_body.starts_with("arch,spec_hash,block_n"));
    assert_eq!(cx_body.lines().count(), 3);

    // pertcoef
    let grid_csv =
        commands::pertcoef_cmd(&cfg, &root, &[0, 1], 4, DispersionMap::Symmetric).unwrap();
    assert!(grid_csv.exists());
    assert_eq!(fs::read_to_string(&grid_csv).unwrap().lines().count(), 9);

    // power sweep with the trained model
    let ps = commands::power_sweep_cmd(&cfg, &root, &model_path, 16).unwrap();
    let ps_body = fs::read_to_string(&ps).unwrap();
    // header + 2 powers x (linear + nlc + dbp1 + dbp2)
    assert_eq!(ps_body.lines().count(), 1 + 2 * 4);

    fs::remove_dir_all(&root).ok();
}

#[test]
fn sweep_produces_envelope_and_quarantine() {
    let cfg = tiny_config();
    let root = temp_root("sweep");
    let env = commands::sweep_cmd(&cfg, &root, ArchKind::M1, Some(2)).unwrap();
    let body = fs::read_to_string(&env).unwrap();
    assert!(body.starts_with("arch,block_n,rmps,q_evm_db"));
    // Envelope is monotone non-decreasing in q within each block size.
    for n in [1, 16] {
        let qs: Vec<f64> = body
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(1) == Some(&n.to_string()))
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        assert!(qs.windows(2).all(|w| w[1] > w[0]), "block {n}: {qs:?}");
        assert!(!qs.is_empty());
    }
    let quarantine = env.parent().unwrap().join("quarantine.csv");
    assert!(quarantine.exists());
    fs::remove_dir_all(&root).ok();
}

#[test]
fn dataset_reproducibility_and_seed_independence() {
    let cfg = tiny_config();
    let root = temp_root("repro");
    let a = pipeline::gen_dataset(&cfg, &root, Role::Train).unwrap();
    let dir = pipeline::dataset_dir(&root, &cfg, Role::Train);
    fs::remove_dir_all(&dir).unwrap();
    let b = pipeline::gen_dataset(&cfg, &root, Role::Train).unwrap();
    assert_eq!(a.manifest.data_hash, b.manifest.data_hash);

    // Train vs eval bit streams are uncorrelated.
    let tr = pipeline::generate_frame(&cfg, 1 << 10, cfg.dataset.seeds.train).unwrap();
    let ev = pipeline::generate_frame(&cfg, 1 << 10, cfg.dataset.seeds.eval).unwrap();
    let xcorr: num_complex::Complex64 = tr.subcarrier(0)
        .x
        .iter()
        .zip(&ev.subcarrier(0).x)
        .map(|(a, b)| a * b.conj())
        .sum();
    let norm = (1 << 10) as f64;
    assert!(
        xcorr.norm() / norm < 0.1,
        "cross-correlation {} too high",
        xcorr.norm() / norm
    );
    fs::remove_dir_all(&root).ok();
}
