//! Low-discrepancy sweep sampling: a seeded, scrambled Halton sequence over
//! the hyper-parameter ranges (full grids over Table 1 are far beyond a
//! desk budget).

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use dscm_core::neural::AnnCoreSpec;

use crate::config::SweepSection;

/// Radical inverse of `index` in the given base.
fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn pick(u: f64, lo: usize, hi: usize) -> usize {
    lo + ((u * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

/// The `i`-th sampled core geometry. A random per-sweep offset decorrelates
/// repeated sweeps with different seeds while staying fully reproducible.
pub fn sample_spec(sweep: &SweepSection, i: usize, leaky_slope: f64) -> AnnCoreSpec {
    let mut rng = Pcg64::seed_from_u64(sweep.seed);
    let offset: u64 = rng.gen_range(0..1 << 20);
    let idx = offset + i as u64 + 1;
    let bases = [2u64, 3, 5, 7, 11, 13, 17];
    let u: Vec<f64> = bases.iter().map(|&b| halton(idx, b)).collect();
    let mut kernel = pick(u[2], sweep.cnn_kernel.lo, sweep.cnn_kernel.hi);
    if kernel % 2 == 0 {
        kernel += 1;
    }
    let half = (kernel - 1) / 2;
    let tap = pick(u[0], sweep.filter_tap.lo, sweep.filter_tap.hi).max(half);
    AnnCoreSpec {
        in_channels: 0,
        cnn_filters: pick(u[1], sweep.cnn_filters.lo, sweep.cnn_filters.hi),
        cnn_kernel: kernel,
        lstm_hidden: pick(u[3], sweep.lstm_hidden.lo, sweep.lstm_hidden.hi),
        lstm_out_features: pick(u[4], sweep.lstm_out_features.lo, sweep.lstm_out_features.hi),
        mlp_hidden_layers: pick(u[5], sweep.mlp_hidden_layers.lo, sweep.mlp_hidden_layers.hi),
        mlp_layer_size: pick(u[6], sweep.mlp_layer_size.lo, sweep.mlp_layer_size.hi),
        filter_tap: tap,
        leaky_slope,
        out_dim: 0,
    }
}
