//! Post-CDC delay alignment: a progressive per-subcarrier delay of half the
//! dispersion-induced group delay recenters the iXPM significance regions
//! so the symmetric input windows of the cores stay valid.

use crate::channel::LinkConfig;
use crate::error::{Error, Result};
use crate::signal::{PolSymbols, SubcarrierSymbolFrame};

use super::EqualizerGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayDirection {
    Apply,
    Undo,
}

/// Integer-symbol delays per subcarrier:
/// `d_i = round((1 - 2*precomp_ratio) * B_total * Omega_i / (2 T))`.
/// All zeros for the symmetric map (ratio 0.5).
pub fn delay_plan(link: &LinkConfig, spacing_hz: f64, baud: f64, n_subcarriers: usize) -> Vec<i64> {
    let b_total = link.total_beta2_ps2() * 1e-24; // s^2
    let map_factor = 1.0 - 2.0 * link.precomp_ratio;
    let t_sym = 1.0 / baud;
    (0..n_subcarriers)
        .map(|i| {
            let f_off = (i as f64 - (n_subcarriers as f64 - 1.0) / 2.0) * spacing_hz;
            let omega = 2.0 * std::f64::consts::PI * f_off;
            (map_factor * b_total * omega / (2.0 * t_sym)).round() as i64
        })
        .collect()
}

/// Attaches the delay plan for `link` to the graph and verifies the iXPM
/// windows cover the residual group-delay spread after alignment.
pub fn attach_delay_plan(
    graph: &mut EqualizerGraph,
    link: &LinkConfig,
    spacing_hz: f64,
    baud: f64,
) -> Result<()> {
    let plan = delay_plan(link, spacing_hz, baud, graph.n_subcarriers);
    if graph.ell_max > 0 {
        let adjacent = (link.total_beta2_ps2() * 1e-24 * 2.0 * std::f64::consts::PI
            * spacing_hz
            * baud
            / 2.0)
            .abs();
        let residual = (graph.ell_max as f64 * adjacent).ceil() as usize;
        for (name, spec) in &graph.core_groups {
            if spec.in_channels > 4 && spec.filter_tap < residual {
                return Err(Error::Config(format!(
                    "core '{name}' window tap {} cannot cover the residual group-delay \
                     spread of {residual} symbols",
                    spec.filter_tap
                )));
            }
        }
    }
    graph.delay_plan = Some(plan);
    Ok(())
}

fn rotate(v: &[num_complex::Complex64], by: i64) -> Vec<num_complex::Complex64> {
    let n = v.len() as i64;
    let shift = (-by).rem_euclid(n) as usize;
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[shift..]);
    out.extend_from_slice(&v[..shift]);
    out
}

/// Circularly delays every subcarrier by its plan entry (`Apply`) or undoes
/// it exactly (`Undo`).
pub fn delay_align(
    frame: &SubcarrierSymbolFrame,
    plan: &[i64],
    direction: DelayDirection,
) -> Result<SubcarrierSymbolFrame> {
    if plan.len() != frame.n_subcarriers() {
        return Err(Error::Shape(format!(
            "plan covers {} subcarriers, frame has {}",
            plan.len(),
            frame.n_subcarriers()
        )));
    }
    let sign = match direction {
        DelayDirection::Apply => 1,
        DelayDirection::Undo => -1,
    };
    let subcarriers = frame
        .subcarriers()
        .iter()
        .zip(plan)
        .map(|(sc, &d)| PolSymbols {
            x: rotate(&sc.x, sign * d),
            y: rotate(&sc.y, sign * d),
        })
        .collect();
    SubcarrierSymbolFrame::new(subcarriers, frame.baud_per_subcarrier(), frame.roll_off())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FiberParams;
    use num_complex::Complex64;

    #[test]
    fn symmetric_map_has_zero_delays() {
        let link = LinkConfig::uniform(40, FiberParams::default(), 6.0, 0.5);
        let plan = delay_plan(&link, 8.5e9, 8e9, 4);
        assert_eq!(plan, vec![0, 0, 0, 0]);
    }

    #[test]
    fn post_map_delay_magnitudes() {
        // 40 x 80 km, D = 17 ps/nm/km, 8.5 GHz spacing, 8 GBd: half the
        // adjacent group delay is ~1.85 ns, i.e. ~15 symbols.
        let link = LinkConfig::uniform(40, FiberParams::default(), 6.0, 0.0);
        let plan = delay_plan(&link, 8.5e9, 8e9, 4);
        // Exact half-adjacent delay is 14.82 symbols; each entry rounds its
        // own progressive value, so steps land on 14 or 15.
        let diffs: Vec<i64> = plan.windows(2).map(|w| w[1] - w[0]).collect();
        for d in &diffs {
            assert!((14..=15).contains(&d.abs()), "plan {plan:?}");
        }
        let exact = |i: f64| {
            let f = (i - 1.5) * 8.5e9;
            let b = link.total_beta2_ps2() * 1e-24;
            (b * 2.0 * std::f64::consts::PI * f / (2.0 * 1.25e-10)).round() as i64
        };
        for (i, &p) in plan.iter().enumerate() {
            assert_eq!(p, exact(i as f64), "entry {i}");
        }
        // Progressive and antisymmetric around the band center.
        assert_eq!(plan[0], -plan[3]);
        assert_eq!(plan[1], -plan[2]);
    }

    #[test]
    fn apply_then_undo_is_identity() {
        let sc = |seed: u64| PolSymbols {
            x: (0..64).map(|i| Complex64::new((i as f64 + seed as f64).sin(), 0.1)).collect(),
            y: (0..64).map(|i| Complex64::new(0.2, (i as f64 * seed as f64).cos())).collect(),
        };
        let frame =
            SubcarrierSymbolFrame::new(vec![sc(1), sc(2), sc(3)], 8e9, 0.0625).unwrap();
        let plan = vec![-7, 0, 7];
        let there = delay_align(&frame, &plan, DelayDirection::Apply).unwrap();
        assert_ne!(there, frame);
        let back = delay_align(&there, &plan, DelayDirection::Undo).unwrap();
        assert_eq!(back, frame);
    }
}
