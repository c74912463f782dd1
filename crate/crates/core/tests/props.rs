//! Property tests over the signal-chain invariants.

use num_complex::Complex64;
use proptest::prelude::*;

use dscm_core::channel::{apply_cd, CdDirection};
use dscm_core::neural::power_scale_factor;
use dscm_core::signal::{
    map_symbols, mux_subcarriers, rrc_matched_decimate, rrc_shape, ComplexSeq, Constellation,
    DualPolWaveform, PolSymbols, PowerNorm, SubcarrierSymbolFrame,
};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

fn random_symbols(n: usize, seed: u64) -> Vec<Complex64> {
    let c = Constellation::square_qam(4).unwrap();
    let mut rng = Pcg64::seed_from_u64(seed);
    let bits: Vec<u8> = (0..2 * n).map(|_| rng.gen_range(0..=1u8)).collect();
    map_symbols(&bits, &c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Shape -> matched filter -> decimate recovers the symbols to 1e-6 for
    /// any roll-off in (0, 1] and sps >= 2.
    #[test]
    fn rrc_pair_identity(
        roll in 0.01f64..=1.0,
        sps in 2usize..=6,
        seed in 0u64..1000,
    ) {
        let symbols = random_symbols(128, seed);
        let shaped = rrc_shape(&symbols, roll, sps, 1e9).unwrap();
        let back = rrc_matched_decimate(&shaped, roll, 1e9).unwrap();
        let worst = symbols
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        prop_assert!(worst < 1e-6, "max error {}", worst);
    }

    /// Dispersion filters are unitary and invert exactly.
    #[test]
    fn cd_round_trip(b2 in -5e4f64..5e4, seed in 0u64..1000) {
        let symbols = random_symbols(256, seed);
        let shaped = rrc_shape(&symbols, 0.2, 4, 8e9).unwrap();
        let w = DualPolWaveform::new(shaped.clone(), shaped, 0.0).unwrap();
        let there = apply_cd(&w, b2, CdDirection::Emulate).unwrap();
        prop_assert!((there.total_power_w() - w.total_power_w()).abs() < 1e-12);
        let back = apply_cd(&there, b2, CdDirection::Compensate).unwrap();
        let worst = w
            .x()
            .samples()
            .iter()
            .zip(back.x().samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        prop_assert!(worst < 1e-9, "max deviation {}", worst);
    }

    /// Mux/demux on the Nyquist-separated grid is an identity per subcarrier.
    #[test]
    fn mux_demux_round_trip(seed in 0u64..200, n_sc in 1usize..=4) {
        let subcarriers = (0..n_sc)
            .map(|i| PolSymbols {
                x: random_symbols(128, seed * 7 + i as u64),
                y: random_symbols(128, seed * 11 + i as u64),
            })
            .collect();
        let frame = SubcarrierSymbolFrame::new(subcarriers, 8e9, 1.0 / 16.0).unwrap();
        let w = mux_subcarriers(&frame, 8.5e9, 16, 0.0, PowerNorm::Global).unwrap();
        for idx in 0..n_sc {
            let (x, _) = dscm_core::signal::demux_subcarrier(&w, idx, n_sc, 8.5e9, 8e9, 1.0 / 16.0)
                .unwrap();
            let reference = &frame.subcarrier(idx).x;
            let num: Complex64 = reference.iter().zip(&x).map(|(t, r)| r * t.conj()).sum();
            let den: f64 = reference.iter().map(|t| t.norm_sqr()).sum();
            let g = num / den;
            let err: f64 = reference.iter().zip(&x).map(|(t, r)| (r / g - t).norm_sqr()).sum();
            let evm_db = 10.0 * (err / den).log10();
            prop_assert!(evm_db < -50.0, "subcarrier {} EVM {}", idx, evm_db);
        }
    }

    /// Polarization swap is an involution on any frame.
    #[test]
    fn swap_involution(seed in 0u64..500) {
        let frame = SubcarrierSymbolFrame::new(
            vec![PolSymbols {
                x: random_symbols(32, seed),
                y: random_symbols(32, seed + 1),
            }],
            8e9,
            0.5,
        )
        .unwrap();
        prop_assert_eq!(frame.swap_polarizations().swap_polarizations(), frame);
    }

    /// The power-scaling rule composes multiplicatively in dB.
    #[test]
    fn power_scale_composes(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let direct = power_scale_factor(a, b);
        let via_zero = power_scale_factor(a, 0.0) * power_scale_factor(0.0, b);
        prop_assert!((direct - via_zero).abs() < 1e-12 * direct.abs().max(1.0));
    }

    /// Waveform power setting hits any requested level exactly.
    #[test]
    fn power_setting_exact(target in -30.0f64..10.0, seed in 0u64..100) {
        let shaped = rrc_shape(&random_symbols(64, seed), 0.3, 4, 1e9).unwrap();
        let w = DualPolWaveform::new(shaped.clone(), shaped, 0.0).unwrap();
        let scaled = w.with_power_dbm(target);
        prop_assert!((scaled.total_power_dbm() - target).abs() < 1e-9);
    }
}

#[test]
fn complex_seq_basic_invariants() {
    assert!(ComplexSeq::new(vec![], 1.0).is_err());
    let s = ComplexSeq::new(vec![Complex64::new(3.0, 4.0)], 2.0).unwrap();
    assert_eq!(s.mean_power(), 25.0);
}
