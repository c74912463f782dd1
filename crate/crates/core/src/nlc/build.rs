//! Graph construction for the four architectures, parameter initialization
//! and the named-tensor store mapping.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_pcg::Pcg64;

use crate::error::{Error, Result};
use crate::neural::{AnnCoreSpec, CoreParams, Lin, LstmParams, MlpParams, ParamStore};

use super::{
    ArchKind, CoreInstance, EqualizerGraph, GraphParams, GraphTopology, HeadedCore, MlpInstance,
    MlpShape, Targets,
};

/// Core templates; channel counts and head sizes are filled in per
/// architecture by [`build_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpecs {
    /// Template for single-subcarrier-input cores (iSPM) and the CC/SC core.
    pub single: AnnCoreSpec,
    /// Template for two-subcarrier-input cores (iXPM and super-cores).
    pub pair: AnnCoreSpec,
    /// Detached MLP geometry (M2 only).
    pub mlp_hidden_layers: usize,
    pub mlp_layer_size: usize,
}

fn sized(template: &AnnCoreSpec, n_input_scs: usize, out_dim: usize) -> AnnCoreSpec {
    AnnCoreSpec { in_channels: 4 * n_input_scs, out_dim, ..template.clone() }
}

/// Wires core instances with shared-weight groups.
///
/// * CC: one core sees every subcarrier and emits I/Q for all of them.
/// * SC: one core per subcarrier, every core sees all subcarriers.
/// * M1: a shared iSPM core per subcarrier plus one iXPM core per in-range
///   signed neighbor offset; instances at the same signed offset share
///   weights.
/// * M2: shared headless iSPM cores, one shared super-core per unordered
///   pair at each offset, and detached MLP variants keyed by how many
///   left/right feature sets a position receives.
pub fn build_graph(
    arch: ArchKind,
    n_subcarriers: usize,
    ell_max: usize,
    specs: &GraphSpecs,
) -> Result<EqualizerGraph> {
    if n_subcarriers == 0 {
        return Err(Error::Config("need at least one subcarrier".into()));
    }
    if ell_max + 1 > n_subcarriers {
        return Err(Error::Config(format!(
            "ell_max {ell_max} out of range for {n_subcarriers} subcarriers"
        )));
    }
    let n = n_subcarriers;
    let mut core_groups = BTreeMap::new();
    let mut mlp_groups = BTreeMap::new();
    let topology = match arch {
        ArchKind::Cc => {
            let spec = sized(&specs.single, n, 2 * n);
            spec.validate()?;
            core_groups.insert("cc".to_string(), spec);
            GraphTopology::Headed {
                cores: vec![HeadedCore {
                    inst: CoreInstance {
                        group: "cc".into(),
                        input_scs: (0..n).collect(),
                        label: "cc".into(),
                    },
                    targets: Targets::All,
                }],
            }
        }
        ArchKind::Sc => {
            let cores = (0..n)
                .map(|sc| {
                    let group = format!("sc{sc}");
                    let spec = sized(&specs.single, n, 2);
                    core_groups.insert(group.clone(), spec);
                    HeadedCore {
                        inst: CoreInstance {
                            group,
                            input_scs: (0..n).collect(),
                            label: format!("sc{sc}"),
                        },
                        targets: Targets::One(sc),
                    }
                })
                .collect();
            for s in core_groups.values() {
                s.validate()?;
            }
            GraphTopology::Headed { cores }
        }
        ArchKind::M1 => {
            core_groups.insert("ispm".to_string(), sized(&specs.single, 1, 2));
            for ell in 1..=ell_max as i64 {
                for sign in [1i64, -1] {
                    core_groups
                        .insert(format!("ixpm{:+}", sign * ell), sized(&specs.pair, 2, 2));
                }
            }
            for s in core_groups.values() {
                s.validate()?;
            }
            let mut cores = Vec::new();
            for sc in 0..n {
                cores.push(HeadedCore {
                    inst: CoreInstance {
                        group: "ispm".into(),
                        input_scs: vec![sc],
                        label: format!("ispm@{sc}"),
                    },
                    targets: Targets::One(sc),
                });
                for off in signed_offsets(ell_max) {
                    let neighbor = sc as i64 + off;
                    if neighbor < 0 || neighbor >= n as i64 {
                        continue;
                    }
                    let mut input_scs = vec![sc, neighbor as usize];
                    input_scs.sort_unstable();
                    cores.push(HeadedCore {
                        inst: CoreInstance {
                            group: format!("ixpm{off:+}"),
                            input_scs,
                            label: format!("ixpm{off:+}@{sc}"),
                        },
                        targets: Targets::One(sc),
                    });
                }
            }
            GraphTopology::Headed { cores }
        }
        ArchKind::M2 => {
            let ispm = AnnCoreSpec { out_dim: 0, ..sized(&specs.single, 1, 0) };
            ispm.validate()?;
            let feature_single = ispm.feature_dim();
            core_groups.insert("ispm".to_string(), ispm);
            let mut feature_pair = 0;
            for ell in 1..=ell_max {
                let sup = AnnCoreSpec { out_dim: 0, ..sized(&specs.pair, 2, 0) };
                sup.validate()?;
                feature_pair = sup.feature_dim();
                core_groups.insert(format!("super{ell}"), sup);
            }
            let mut producers = Vec::new();
            let mut producer_idx = BTreeMap::new();
            for sc in 0..n {
                producer_idx.insert((sc as i64, 0i64), producers.len());
                producers.push(CoreInstance {
                    group: "ispm".into(),
                    input_scs: vec![sc],
                    label: format!("ispm@{sc}"),
                });
            }
            for ell in 1..=ell_max {
                for lo in 0..n - ell {
                    producer_idx.insert((lo as i64, ell as i64), producers.len());
                    producers.push(CoreInstance {
                        group: format!("super{ell}"),
                        input_scs: vec![lo, lo + ell],
                        label: format!("super{ell}@{{{lo},{}}}", lo + ell),
                    });
                }
            }
            let mut mlps = Vec::new();
            for sc in 0..n {
                let n_left = sc.min(ell_max);
                let n_right = (n - 1 - sc).min(ell_max);
                let variant = format!("mlp_l{n_left}r{n_right}");
                let in_dim = feature_single + (n_left + n_right) * feature_pair;
                mlp_groups.entry(variant.clone()).or_insert(MlpShape {
                    in_dim,
                    hidden_layers: specs.mlp_hidden_layers,
                    width: specs.mlp_layer_size,
                    out_dim: 2,
                });
                let mut inputs = vec![producer_idx[&(sc as i64, 0)]];
                for off in signed_offsets(ell_max) {
                    let neighbor = sc as i64 + off;
                    if neighbor < 0 || neighbor >= n as i64 {
                        continue;
                    }
                    let lo = (sc as i64).min(neighbor);
                    inputs.push(producer_idx[&(lo, off.abs())]);
                }
                mlps.push(MlpInstance { variant, target_sc: sc, inputs });
            }
            GraphTopology::Detached { producers, mlps }
        }
    };
    Ok(EqualizerGraph {
        arch,
        n_subcarriers,
        ell_max,
        topology,
        core_groups,
        mlp_groups,
        delay_plan: None,
    })
}

/// Signed offsets ascending: -ell_max, .., -1, +1, .., +ell_max.
fn signed_offsets(ell_max: usize) -> impl Iterator<Item = i64> {
    let e = ell_max as i64;
    (-e..0).chain(1..=e)
}

/// Fresh parameters for every weight group, seeded per group name so the
/// whole graph is reproducible from one seed.
pub fn init_graph_params(graph: &EqualizerGraph, seed: u64) -> GraphParams {
    let group_seed = |name: &str| -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.as_bytes() {
            h = (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3);
        }
        seed ^ h
    };
    let cores = graph
        .core_groups
        .iter()
        .map(|(name, spec)| (name.clone(), CoreParams::init(spec, group_seed(name))))
        .collect();
    let mlps = graph
        .mlp_groups
        .iter()
        .map(|(name, shape)| {
            let mut rng = Pcg64::seed_from_u64(group_seed(name));
            (
                name.clone(),
                MlpParams::init(shape.in_dim, shape.hidden_layers, shape.width, shape.out_dim, &mut rng),
            )
        })
        .collect();
    GraphParams { cores, mlps }
}

fn core_to_store(store: &mut ParamStore, prefix: &str, spec: &AnnCoreSpec, p: &CoreParams) -> Result<()> {
    let (nf, cin, nke, nh) =
        (spec.cnn_filters, spec.in_channels, spec.cnn_kernel, spec.lstm_hidden);
    store.insert(format!("{prefix}.conv.w"), vec![nf, cin, nke], p.conv_w.clone())?;
    store.insert(format!("{prefix}.conv.b"), vec![nf], p.conv_b.clone())?;
    for (dir, lp) in [("fw", &p.fw), ("bw", &p.bw)] {
        store.insert(format!("{prefix}.{dir}.w_ih"), vec![4 * nh, nf], lp.w_ih.clone())?;
        store.insert(format!("{prefix}.{dir}.w_hh"), vec![4 * nh, nh], lp.w_hh.clone())?;
        store.insert(format!("{prefix}.{dir}.b"), vec![4 * nh], lp.b.clone())?;
    }
    if let Some((a, b)) = &p.proj {
        for (tag, l) in [("proj_fw", a), ("proj_bw", b)] {
            store.insert(format!("{prefix}.{tag}.w"), vec![l.out_dim, l.in_dim], l.w.clone())?;
            store.insert(format!("{prefix}.{tag}.b"), vec![l.out_dim], l.b.clone())?;
        }
    }
    if let Some(head) = &p.head {
        for (i, l) in head.layers.iter().enumerate() {
            store.insert(format!("{prefix}.head.l{i}.w"), vec![l.out_dim, l.in_dim], l.w.clone())?;
            store.insert(format!("{prefix}.head.l{i}.b"), vec![l.out_dim], l.b.clone())?;
        }
    }
    Ok(())
}

fn core_from_store(store: &ParamStore, prefix: &str, spec: &AnnCoreSpec) -> Result<CoreParams> {
    let (nf, cin, nke, nh) =
        (spec.cnn_filters, spec.in_channels, spec.cnn_kernel, spec.lstm_hidden);
    let no = spec.lstm_out_features;
    let get = |name: String, shape: &[usize]| -> Result<Vec<f64>> {
        Ok(store.get(&name, shape)?.data.clone())
    };
    let lstm = |dir: &str| -> Result<LstmParams> {
        Ok(LstmParams {
            in_dim: nf,
            hidden: nh,
            w_ih: get(format!("{prefix}.{dir}.w_ih"), &[4 * nh, nf])?,
            w_hh: get(format!("{prefix}.{dir}.w_hh"), &[4 * nh, nh])?,
            b: get(format!("{prefix}.{dir}.b"), &[4 * nh])?,
        })
    };
    let proj = if spec.has_projection() {
        let mut pair = Vec::new();
        for tag in ["proj_fw", "proj_bw"] {
            pair.push(Lin {
                in_dim: nh,
                out_dim: no,
                w: get(format!("{prefix}.{tag}.w"), &[no, nh])?,
                b: get(format!("{prefix}.{tag}.b"), &[no])?,
            });
        }
        let b = pair.pop().unwrap();
        let a = pair.pop().unwrap();
        Some((a, b))
    } else {
        None
    };
    let head = if spec.out_dim > 0 {
        let mut layers = Vec::new();
        let mut cur = spec.feature_dim();
        for i in 0..=spec.mlp_hidden_layers {
            let out = if i == spec.mlp_hidden_layers { spec.out_dim } else { spec.mlp_layer_size };
            layers.push(Lin {
                in_dim: cur,
                out_dim: out,
                w: get(format!("{prefix}.head.l{i}.w"), &[out, cur])?,
                b: get(format!("{prefix}.head.l{i}.b"), &[out])?,
            });
            cur = out;
        }
        Some(MlpParams { layers })
    } else {
        None
    };
    Ok(CoreParams {
        conv_w: get(format!("{prefix}.conv.w"), &[nf, cin, nke])?,
        conv_b: get(format!("{prefix}.conv.b"), &[nf])?,
        fw: lstm("fw")?,
        bw: lstm("bw")?,
        proj,
        head,
    })
}

/// Serializes every weight group into named, shape-tagged tensors.
pub fn graph_params_to_store(graph: &EqualizerGraph, params: &GraphParams) -> Result<ParamStore> {
    let mut store = ParamStore::default();
    for (name, spec) in &graph.core_groups {
        let p = params
            .cores
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing core group '{name}'")))?;
        core_to_store(&mut store, &format!("core.{name}"), spec, p)?;
    }
    for (name, shape) in &graph.mlp_groups {
        let p = params
            .mlps
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing mlp group '{name}'")))?;
        if p.layers.len() != shape.hidden_layers + 1 {
            return Err(Error::Shape(format!(
                "mlp '{name}' has {} layers, shape wants {}",
                p.layers.len(),
                shape.hidden_layers + 1
            )));
        }
        for (i, l) in p.layers.iter().enumerate() {
            store.insert(format!("mlp.{name}.l{i}.w"), vec![l.out_dim, l.in_dim], l.w.clone())?;
            store.insert(format!("mlp.{name}.l{i}.b"), vec![l.out_dim], l.b.clone())?;
        }
    }
    Ok(store)
}

/// Rebuilds graph parameters from a store, shape-checked against the graph.
pub fn store_to_graph_params(graph: &EqualizerGraph, store: &ParamStore) -> Result<GraphParams> {
    let mut cores = BTreeMap::new();
    for (name, spec) in &graph.core_groups {
        cores.insert(name.clone(), core_from_store(store, &format!("core.{name}"), spec)?);
    }
    let mut mlps = BTreeMap::new();
    for (name, shape) in &graph.mlp_groups {
        let mut layers = Vec::new();
        let mut cur = shape.in_dim;
        for i in 0..=shape.hidden_layers {
            let out = if i == shape.hidden_layers { shape.out_dim } else { shape.width };
            layers.push(Lin {
                in_dim: cur,
                out_dim: out,
                w: store.get(&format!("mlp.{name}.l{i}.w"), &[out, cur])?.data.clone(),
                b: store.get(&format!("mlp.{name}.l{i}.b"), &[out])?.data.clone(),
            });
            cur = out;
        }
        mlps.insert(name.clone(), MlpParams { layers });
    }
    Ok(GraphParams { cores, mlps })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_specs() -> GraphSpecs {
        let single = AnnCoreSpec {
            in_channels: 4,
            cnn_filters: 3,
            cnn_kernel: 3,
            lstm_hidden: 4,
            lstm_out_features: 4,
            mlp_hidden_layers: 1,
            mlp_layer_size: 5,
            filter_tap: 3,
            leaky_slope: 0.01,
            out_dim: 2,
        };
        GraphSpecs {
            pair: AnnCoreSpec { cnn_filters: 4, ..single.clone() },
            single,
            mlp_hidden_layers: 1,
            mlp_layer_size: 6,
        }
    }

    fn count_instances_for(graph: &EqualizerGraph, sc: usize) -> (usize, usize) {
        match &graph.topology {
            GraphTopology::Headed { cores } => {
                let ispm = cores
                    .iter()
                    .filter(|c| c.targets == Targets::One(sc) && c.inst.group == "ispm")
                    .count();
                let ixpm = cores
                    .iter()
                    .filter(|c| {
                        c.targets == Targets::One(sc) && c.inst.group.starts_with("ixpm")
                    })
                    .count();
                (ispm, ixpm)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn m1_edge_and_inner_core_counts() {
        let g = build_graph(ArchKind::M1, 4, 2, &tiny_specs()).unwrap();
        // Outer subcarriers get two iXPM cores, inner get three.
        assert_eq!(count_instances_for(&g, 0), (1, 2));
        assert_eq!(count_instances_for(&g, 1), (1, 3));
        assert_eq!(count_instances_for(&g, 2), (1, 3));
        assert_eq!(count_instances_for(&g, 3), (1, 2));
        // One iSPM group and four iXPM groups are trained.
        assert_eq!(g.core_groups.len(), 5);
    }

    #[test]
    fn m1_single_subcarrier_degenerates_to_ispm() {
        let g = build_graph(ArchKind::M1, 1, 0, &tiny_specs()).unwrap();
        match &g.topology {
            GraphTopology::Headed { cores } => {
                assert_eq!(cores.len(), 1);
                assert_eq!(cores[0].inst.group, "ispm");
            }
            _ => panic!("headed expected"),
        }
    }

    #[test]
    fn m2_counts_super_cores_and_variants() {
        let g = build_graph(ArchKind::M2, 4, 1, &tiny_specs()).unwrap();
        match &g.topology {
            GraphTopology::Detached { producers, mlps } => {
                let supers: Vec<_> =
                    producers.iter().filter(|p| p.group == "super1").collect();
                assert_eq!(supers.len(), 3); // pairs {0,1},{1,2},{2,3}
                let ispms = producers.iter().filter(|p| p.group == "ispm").count();
                assert_eq!(ispms, 4);
                assert_eq!(mlps.len(), 4);
            }
            _ => panic!("detached expected"),
        }
        // 2*ell_max + 1 MLP variants: (0,1), (1,1), (1,0).
        assert_eq!(g.mlp_groups.len(), 3);
        // One shared iSPM group plus one shared super-core group.
        assert_eq!(g.core_groups.len(), 2);
    }

    #[test]
    fn ell_max_range_checked() {
        assert!(build_graph(ArchKind::M1, 4, 4, &tiny_specs()).is_err());
        assert!(build_graph(ArchKind::M2, 1, 1, &tiny_specs()).is_err());
    }

    #[test]
    fn store_round_trip_all_archs() {
        for arch in [ArchKind::Cc, ArchKind::Sc, ArchKind::M1, ArchKind::M2] {
            let g = build_graph(arch, 4, 1, &tiny_specs()).unwrap();
            let p = init_graph_params(&g, 42);
            let store = graph_params_to_store(&g, &p).unwrap();
            let back = store_to_graph_params(&g, &store).unwrap();
            assert_eq!(back, p, "{arch}");
        }
    }

    #[test]
    fn flatten_round_trip() {
        let g = build_graph(ArchKind::M2, 4, 1, &tiny_specs()).unwrap();
        let p = init_graph_params(&g, 1);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_params());
        let mut q = init_graph_params(&g, 2);
        q.unflatten_from(&flat);
        assert_eq!(q, p);
    }
}
