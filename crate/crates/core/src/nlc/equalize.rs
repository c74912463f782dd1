//! Block-mode inference: run the graph over a soft frame, power-scale the
//! error estimates and subtract them. The Y polarization reuses the
//! X-trained model through the input-swap symmetry.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::neural::{
    core_forward_block, mlp_forward, power_scale_factor, BlockSpec, MulCount,
};
use crate::signal::{PolSymbols, SubcarrierSymbolFrame};

use super::delay::{delay_align, DelayDirection};
use super::{EqualizerGraph, GraphTopology, Targets, TrainedEqualizer};

/// Per-subcarrier I/Q rails of one polarization orientation, ready for
/// window gathering.
pub struct FeatureBank {
    /// `[subcarrier][4][instants]`: XI, XQ, YI, YQ.
    channels: Vec<[Vec<f64>; 4]>,
    len: usize,
}

impl FeatureBank {
    /// `swap = true` presents the Y polarization as the model's X input
    /// (and vice versa), the relabeling that serves the Y outputs.
    pub fn from_frame(frame: &SubcarrierSymbolFrame, swap: bool) -> Self {
        let channels = frame
            .subcarriers()
            .iter()
            .map(|sc| {
                let (a, b) = if swap { (&sc.y, &sc.x) } else { (&sc.x, &sc.y) };
                [
                    a.iter().map(|v| v.re).collect(),
                    a.iter().map(|v| v.im).collect(),
                    b.iter().map(|v| v.re).collect(),
                    b.iter().map(|v| v.im).collect(),
                ]
            })
            .collect();
        Self { channels, len: frame.n_symbols() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Gathers a channel-major window over the given subcarriers (4 channels
    /// each, spectral order), zero-padded outside the record.
    pub fn gather(&self, input_scs: &[usize], start: i64, len: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), 4 * input_scs.len() * len);
        let n = self.len as i64;
        let mut row = 0usize;
        for &sc in input_scs {
            for ch in &self.channels[sc] {
                let dst = &mut out[row * len..(row + 1) * len];
                for (j, d) in dst.iter_mut().enumerate() {
                    let idx = start + j as i64;
                    *d = if idx >= 0 && idx < n { ch[idx as usize] } else { 0.0 };
                }
                row += 1;
            }
        }
    }
}

/// Runs the whole graph in block mode over one polarization orientation.
/// Returns per-subcarrier complex error estimates.
pub(crate) fn run_graph(
    graph: &EqualizerGraph,
    params: &super::GraphParams,
    bank: &FeatureBank,
    block_n: usize,
    mut count: Option<&mut MulCount>,
) -> Result<Vec<Vec<Complex64>>> {
    let n_sc = graph.n_subcarriers;
    let len = bank.len();
    let mut est = vec![vec![Complex64::default(); len]; n_sc];
    let slope = graph.leaky_slope();
    let mut b0 = 0usize;
    while b0 < len {
        let nb = block_n.min(len - b0);
        match &graph.topology {
            GraphTopology::Headed { cores } => {
                for core in cores {
                    let spec = &graph.core_groups[&core.inst.group];
                    let p = &params.cores[&core.inst.group];
                    let t = spec.filter_tap;
                    let mut window = vec![0.0; spec.in_channels * (2 * t + nb)];
                    bank.gather(&core.inst.input_scs, b0 as i64 - t as i64, 2 * t + nb, &mut window);
                    let out =
                        core_forward_block(spec, p, &window, nb, None, count.as_deref_mut())?;
                    match core.targets {
                        Targets::All => {
                            for j in 0..nb {
                                for sc in 0..n_sc {
                                    est[sc][b0 + j] += Complex64::new(
                                        out[j * 2 * n_sc + 2 * sc],
                                        out[j * 2 * n_sc + 2 * sc + 1],
                                    );
                                }
                            }
                        }
                        Targets::One(sc) => {
                            for j in 0..nb {
                                est[sc][b0 + j] +=
                                    Complex64::new(out[2 * j], out[2 * j + 1]);
                            }
                        }
                    }
                }
            }
            GraphTopology::Detached { producers, mlps } => {
                let mut feats: Vec<Vec<f64>> = Vec::with_capacity(producers.len());
                let mut dims: Vec<usize> = Vec::with_capacity(producers.len());
                for prod in producers {
                    let spec = &graph.core_groups[&prod.group];
                    let p = &params.cores[&prod.group];
                    let t = spec.filter_tap;
                    let mut window = vec![0.0; spec.in_channels * (2 * t + nb)];
                    bank.gather(&prod.input_scs, b0 as i64 - t as i64, 2 * t + nb, &mut window);
                    feats.push(core_forward_block(
                        spec,
                        p,
                        &window,
                        nb,
                        None,
                        count.as_deref_mut(),
                    )?);
                    dims.push(spec.feature_dim());
                }
                for mlp_inst in mlps {
                    let shape = &graph.mlp_groups[&mlp_inst.variant];
                    let mp = &params.mlps[&mlp_inst.variant];
                    let mut input = vec![0.0; shape.in_dim];
                    for j in 0..nb {
                        let mut off = 0;
                        for &pi in &mlp_inst.inputs {
                            let d = dims[pi];
                            input[off..off + d].copy_from_slice(&feats[pi][j * d..(j + 1) * d]);
                            off += d;
                        }
                        debug_assert_eq!(off, shape.in_dim);
                        let y = mlp_forward(mp, slope, &input, None);
                        if let Some(cnt) = count.as_deref_mut() {
                            cnt.mlp += mp
                                .layers
                                .iter()
                                .map(|l| (l.in_dim * l.out_dim) as u64)
                                .sum::<u64>();
                        }
                        est[mlp_inst.target_sc][b0 + j] += Complex64::new(y[0], y[1]);
                    }
                }
            }
        }
        b0 += nb;
    }
    Ok(est)
}

/// Equalizes a soft frame: per-subcarrier error estimates from block-mode
/// core passes, scaled by the launch-power factor and subtracted.
///
/// A delay plan must be attached (zeros for the symmetric map); frames from
/// an asymmetric map are aligned before the cores and restored afterwards.
pub fn equalize(
    model: &TrainedEqualizer,
    soft: &SubcarrierSymbolFrame,
    block: BlockSpec,
    p_inf_dbm: f64,
) -> Result<SubcarrierSymbolFrame> {
    let graph = &model.graph;
    if soft.n_subcarriers() != graph.n_subcarriers {
        return Err(Error::Shape(format!(
            "frame has {} subcarriers, graph wants {}",
            soft.n_subcarriers(),
            graph.n_subcarriers
        )));
    }
    let plan = graph.delay_plan.as_ref().ok_or_else(|| {
        Error::Config(
            "no delay plan attached; required before equalizing (post-CDC maps shift the \
             iXPM windows)"
                .into(),
        )
    })?;
    let aligned = if plan.iter().any(|&d| d != 0) {
        delay_align(soft, plan, DelayDirection::Apply)?
    } else {
        soft.clone()
    };
    let alpha = power_scale_factor(model.p_train_dbm, p_inf_dbm);
    let mut corrected: Vec<PolSymbols> = aligned.subcarriers().to_vec();
    for swap in [false, true] {
        let bank = FeatureBank::from_frame(&aligned, swap);
        let est = run_graph(graph, &model.params, &bank, block.n, None)?;
        for (sc, est_sc) in est.iter().enumerate() {
            let rail = if swap { &mut corrected[sc].y } else { &mut corrected[sc].x };
            for (s, e) in rail.iter_mut().zip(est_sc) {
                *s -= alpha * e;
            }
        }
    }
    let frame = SubcarrierSymbolFrame::new(
        corrected,
        soft.baud_per_subcarrier(),
        soft.roll_off(),
    )?;
    if plan.iter().any(|&d| d != 0) {
        delay_align(&frame, plan, DelayDirection::Undo)
    } else {
        Ok(frame)
    }
}

/// Instrumented real-multiplication count of one full X-polarization
/// inference pass over `n_symbols` instants (per-super-symbol figures are
/// `total / n_symbols`).
pub fn count_real_muls(
    model: &TrainedEqualizer,
    soft: &SubcarrierSymbolFrame,
    block: BlockSpec,
) -> Result<MulCount> {
    let bank = FeatureBank::from_frame(soft, false);
    let mut count = MulCount::default();
    run_graph(&model.graph, &model.params, &bank, block.n, Some(&mut count))?;
    Ok(count)
}
