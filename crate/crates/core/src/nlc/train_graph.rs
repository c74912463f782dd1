//! Joint training of an equalizer graph: every instance of a weight group
//! contributes gradients to the same tensors, which is what ties the shared
//! cores together. Symbol-mode processing throughout, RMSE loss over all
//! subcarrier outputs of the X polarization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::neural::{
    core_backward, core_forward_symbol, mlp_backward, mlp_forward, run_training, CoreCache,
    MlpTape, TrainOutcome, TrainRun,
};
use crate::signal::SubcarrierSymbolFrame;

use super::build::init_graph_params;
use super::delay::{delay_align, DelayDirection};
use super::equalize::FeatureBank;
use super::{EqualizerGraph, GraphParams, GraphTopology, Targets, TrainedEqualizer};

/// Reverse-mode tapes of one training sample across the whole graph.
#[derive(Default)]
struct SampleTape {
    core_caches: Vec<CoreCache>,
    features: Vec<Vec<f64>>,
    mlp_tapes: Vec<MlpTape>,
}

fn forward_sample(
    graph: &EqualizerGraph,
    params: &GraphParams,
    bank: &FeatureBank,
    i: usize,
    mut tape: Option<&mut SampleTape>,
) -> Result<Vec<Complex64>> {
    let n_sc = graph.n_subcarriers;
    let slope = graph.leaky_slope();
    let mut est = vec![Complex64::default(); n_sc];
    match &graph.topology {
        GraphTopology::Headed { cores } => {
            for core in cores {
                let spec = &graph.core_groups[&core.inst.group];
                let p = &params.cores[&core.inst.group];
                let t = spec.filter_tap;
                let mut window = vec![0.0; spec.in_channels * (2 * t + 1)];
                bank.gather(&core.inst.input_scs, i as i64 - t as i64, 2 * t + 1, &mut window);
                let out = match tape.as_deref_mut() {
                    Some(tp) => {
                        let mut cache = CoreCache::default();
                        let y = core_forward_symbol(spec, p, &window, Some(&mut cache))?;
                        tp.core_caches.push(cache);
                        y
                    }
                    None => core_forward_symbol(spec, p, &window, None)?,
                };
                match core.targets {
                    Targets::All => {
                        for sc in 0..n_sc {
                            est[sc] += Complex64::new(out[2 * sc], out[2 * sc + 1]);
                        }
                    }
                    Targets::One(sc) => est[sc] += Complex64::new(out[0], out[1]),
                }
            }
        }
        GraphTopology::Detached { producers, mlps } => {
            let mut feats: Vec<Vec<f64>> = Vec::with_capacity(producers.len());
            for prod in producers {
                let spec = &graph.core_groups[&prod.group];
                let p = &params.cores[&prod.group];
                let t = spec.filter_tap;
                let mut window = vec![0.0; spec.in_channels * (2 * t + 1)];
                bank.gather(&prod.input_scs, i as i64 - t as i64, 2 * t + 1, &mut window);
                let f = match tape.as_deref_mut() {
                    Some(tp) => {
                        let mut cache = CoreCache::default();
                        let y = core_forward_symbol(spec, p, &window, Some(&mut cache))?;
                        tp.core_caches.push(cache);
                        y
                    }
                    None => core_forward_symbol(spec, p, &window, None)?,
                };
                feats.push(f);
            }
            for mlp_inst in mlps {
                let shape = &graph.mlp_groups[&mlp_inst.variant];
                let mp = &params.mlps[&mlp_inst.variant];
                let mut input = Vec::with_capacity(shape.in_dim);
                for &pi in &mlp_inst.inputs {
                    input.extend_from_slice(&feats[pi]);
                }
                let y = match tape.as_deref_mut() {
                    Some(tp) => {
                        let mut mt = MlpTape::default();
                        let y = mlp_forward(mp, slope, &input, Some(&mut mt));
                        tp.mlp_tapes.push(mt);
                        y
                    }
                    None => mlp_forward(mp, slope, &input, None),
                };
                est[mlp_inst.target_sc] += Complex64::new(y[0], y[1]);
            }
            if let Some(tp) = tape.as_deref_mut() {
                tp.features = feats;
            }
        }
    }
    Ok(est)
}

/// Backward for one sample given the per-subcarrier upstream sensitivities
/// (dL/d est, unscaled; the caller rescales the accumulated gradient).
fn backward_sample(
    graph: &EqualizerGraph,
    params: &GraphParams,
    tape: &SampleTape,
    d_est: &[Complex64],
    grads: &mut GraphParams,
) -> Result<()> {
    let n_sc = graph.n_subcarriers;
    let slope = graph.leaky_slope();
    match &graph.topology {
        GraphTopology::Headed { cores } => {
            for (ci, core) in cores.iter().enumerate() {
                let spec = &graph.core_groups[&core.inst.group];
                let p = &params.cores[&core.inst.group];
                let g = grads.cores.get_mut(&core.inst.group).unwrap();
                let d_out: Vec<f64> = match core.targets {
                    Targets::All => (0..n_sc)
                        .flat_map(|sc| [d_est[sc].re, d_est[sc].im])
                        .collect(),
                    Targets::One(sc) => vec![d_est[sc].re, d_est[sc].im],
                };
                core_backward(spec, p, &tape.core_caches[ci], &d_out, g)?;
            }
        }
        GraphTopology::Detached { producers, mlps } => {
            let mut d_feats: Vec<Vec<f64>> =
                tape.features.iter().map(|f| vec![0.0; f.len()]).collect();
            for (mi, mlp_inst) in mlps.iter().enumerate() {
                let mp = &params.mlps[&mlp_inst.variant];
                let gm = grads.mlps.get_mut(&mlp_inst.variant).unwrap();
                let d = d_est[mlp_inst.target_sc];
                let d_in =
                    mlp_backward(mp, slope, &tape.mlp_tapes[mi], &[d.re, d.im], gm);
                let mut off = 0;
                for &pi in &mlp_inst.inputs {
                    let dlen = d_feats[pi].len();
                    for (acc, v) in d_feats[pi].iter_mut().zip(&d_in[off..off + dlen]) {
                        *acc += v;
                    }
                    off += dlen;
                }
            }
            for (pi, prod) in producers.iter().enumerate() {
                let spec = &graph.core_groups[&prod.group];
                let p = &params.cores[&prod.group];
                let g = grads.cores.get_mut(&prod.group).unwrap();
                core_backward(spec, p, &tape.core_caches[pi], &d_feats[pi], g)?;
            }
        }
    }
    Ok(())
}

/// Trains the graph on a tx/soft frame pair. Targets are the X-polarization
/// nonlinear errors `soft - tx`; the Y polarization is served at inference
/// through the input swap. Returns the best-validation parameters.
pub fn train_graph(
    graph: &EqualizerGraph,
    run: &TrainRun,
    tx: &SubcarrierSymbolFrame,
    soft: &SubcarrierSymbolFrame,
) -> Result<(TrainedEqualizer, TrainOutcome)> {
    run.validate()?;
    if tx.n_subcarriers() != graph.n_subcarriers || soft.n_subcarriers() != graph.n_subcarriers {
        return Err(Error::Shape("frame/graph subcarrier mismatch".into()));
    }
    if tx.n_symbols() != soft.n_symbols() {
        return Err(Error::Shape("tx/soft length mismatch".into()));
    }
    // Honor the delay plan during training exactly as at inference.
    let (tx_al, soft_al);
    let (tx_ref, soft_ref) = match &graph.delay_plan {
        Some(plan) if plan.iter().any(|&d| d != 0) => {
            tx_al = delay_align(tx, plan, DelayDirection::Apply)?;
            soft_al = delay_align(soft, plan, DelayDirection::Apply)?;
            (&tx_al, &soft_al)
        }
        _ => (tx, soft),
    };
    // Both polarizations are training samples: the Y stream enters through
    // the same input swap used at inference, doubling the data the swap
    // symmetry says is identically distributed.
    let n_sc = graph.n_subcarriers;
    let banks = [
        FeatureBank::from_frame(soft_ref, false),
        FeatureBank::from_frame(soft_ref, true),
    ];
    let targets_of = |swap: bool| -> Vec<Vec<Complex64>> {
        (0..n_sc)
            .map(|sc| {
                let (s_rail, t_rail) = if swap {
                    (&soft_ref.subcarrier(sc).y, &tx_ref.subcarrier(sc).y)
                } else {
                    (&soft_ref.subcarrier(sc).x, &tx_ref.subcarrier(sc).x)
                };
                s_rail.iter().zip(t_rail).map(|(s, t)| s - t).collect()
            })
            .collect()
    };
    let targets = [targets_of(false), targets_of(true)];

    let t_max = graph.max_filter_tap();
    let len = soft_ref.n_symbols();
    if len < 2 * t_max + 2 {
        return Err(Error::Shape("frames shorter than one window".into()));
    }
    // Split on symbol index first so both polarizations of a validation
    // instant stay out of the training set.
    let (train_i, val_i) =
        crate::neural::split_indices(t_max..len - t_max, run.validation_fraction);
    if train_i.is_empty() || val_i.is_empty() {
        return Err(Error::Training("split left an empty partition".into()));
    }
    let widen = |v: &[usize]| -> Vec<usize> {
        v.iter().copied().chain(v.iter().map(|&i| i + len)).collect()
    };
    let train_idx = widen(&train_i);
    let val_idx = widen(&val_i);

    let init = init_graph_params(graph, run.seed);
    let mut work = init.clone();
    let mut val_work = init.clone();
    let out_dims = (2 * n_sc) as f64;

    let outcome = run_training(
        init.flatten(),
        run,
        &train_idx,
        |flat, batch| {
            work.unflatten_from(flat);
            let mut grads = work.zeros_like();
            let mut sq = 0.0;
            for &g in batch {
                let (pol, i) = (g / len, g % len);
                let mut tape = SampleTape::default();
                let est = forward_sample(graph, &work, &banks[pol], i, Some(&mut tape))?;
                let e: Vec<Complex64> = est
                    .iter()
                    .zip(targets[pol].iter().map(|t| t[i]))
                    .map(|(a, b)| a - b)
                    .collect();
                sq += e.iter().map(|v| v.norm_sqr()).sum::<f64>();
                backward_sample(graph, &work, &tape, &e, &mut grads)?;
            }
            let denom = batch.len() as f64 * out_dims;
            let rmse = (sq / denom).sqrt();
            let mut flat_grads = grads.flatten();
            if rmse > 0.0 {
                // Backward ran with unscaled errors; RMSE chain rule applied here.
                let scale = 1.0 / (rmse * denom);
                for g in flat_grads.iter_mut() {
                    *g *= scale;
                }
            }
            Ok((rmse, flat_grads))
        },
        |flat| {
            val_work.unflatten_from(flat);
            let mut sq = 0.0;
            for &g in &val_idx {
                let (pol, i) = (g / len, g % len);
                match forward_sample(graph, &val_work, &banks[pol], i, None) {
                    Ok(est) => {
                        sq += est
                            .iter()
                            .zip(targets[pol].iter().map(|t| t[i]))
                            .map(|(a, b)| (a - b).norm_sqr())
                            .sum::<f64>()
                    }
                    Err(_) => return f64::NAN,
                }
            }
            (sq / (val_idx.len() as f64 * out_dims)).sqrt()
        },
    )?;

    let mut best = init;
    best.unflatten_from(&outcome.best_params);
    Ok((
        TrainedEqualizer { graph: graph.clone(), params: best, p_train_dbm: run.p_train_dbm },
        outcome,
    ))
}
