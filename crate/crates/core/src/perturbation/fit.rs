//! Least-squares triplet regression: fits the observed nonlinear error
//! `tx - soft` onto first-order perturbation features, and applies fitted
//! grids as a PNLC equalizer.
//!
//! The feature for cell (m, n) of offset `ell`, target subcarrier `s` at
//! symbol `i`, polarization X, is
//!
//! ```text
//! phi_{m,n}(i) = a_x[i+n] * (b_x[i+m]*conj(b_x[i+m+n]) + b_y[i+m]*conj(b_y[i+m+n]))
//! ```
//!
//! with `a` the target-subcarrier symbols and `b` those of subcarrier
//! `s + ell` (equal to `a` for iSPM). Indexing is circular, matching the
//! circular simulation chain.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{Constellation, PolSymbols, SubcarrierSymbolFrame};

use super::CoeffGrid;

pub struct FitOutcome {
    pub grid: CoeffGrid,
    /// True when the normal equations needed a ridge fallback.
    pub regularized: bool,
}

const MIN_FIT_SYMBOLS: usize = 1 << 14;

fn at(v: &[Complex64], i: i64) -> Complex64 {
    let n = v.len() as i64;
    v[i.rem_euclid(n) as usize]
}

/// Fills `phi` with the triplet features of symbol `i`.
fn features_into(
    phi: &mut [Complex64],
    target: &PolSymbols,
    interferer: &PolSymbols,
    pol_x: bool,
    i: i64,
    half_window: i64,
) {
    let (a, bx, by) = if pol_x {
        (&target.x, &interferer.x, &interferer.y)
    } else {
        (&target.y, &interferer.y, &interferer.x)
    };
    let side = (2 * half_window + 1) as usize;
    for mi in 0..side {
        let m = mi as i64 - half_window;
        for ni in 0..side {
            let n = ni as i64 - half_window;
            let pair = at(bx, i + m) * at(bx, i + m + n).conj()
                + at(by, i + m) * at(by, i + m + n).conj();
            phi[mi * side + ni] = at(a, i + n) * pair;
        }
    }
}

/// Complex Hermitian Cholesky solve of `G x = rhs`; errors on non-positive
/// pivots.
fn cholesky_solve(g: &[Complex64], rhs: &[Complex64], k: usize) -> Result<Vec<Complex64>> {
    let mut l = vec![Complex64::default(); k * k];
    for j in 0..k {
        let mut d = g[j * k + j].re;
        for p in 0..j {
            d -= l[j * k + p].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Tolerance(format!("non-positive pivot {d:.3e} at {j}")));
        }
        let djj = d.sqrt();
        l[j * k + j] = Complex64::new(djj, 0.0);
        for i in (j + 1)..k {
            let mut v = g[i * k + j];
            for p in 0..j {
                v -= l[i * k + p] * l[j * k + p].conj();
            }
            l[i * k + j] = v / djj;
        }
    }
    // Forward substitution L z = rhs.
    let mut z = vec![Complex64::default(); k];
    for i in 0..k {
        let mut v = rhs[i];
        for p in 0..i {
            v -= l[i * k + p] * z[p];
        }
        z[i] = v / l[i * k + i].re;
    }
    // Back substitution L^H x = z.
    let mut x = vec![Complex64::default(); k];
    for i in (0..k).rev() {
        let mut v = z[i];
        for p in (i + 1)..k {
            v -= l[p * k + i].conj() * x[p];
        }
        x[i] = v / l[i * k + i].re;
    }
    Ok(x)
}

/// Regresses the observed error of `target_sc` (X polarization) onto the
/// triplet features for offset `ell`. Needs at least 2^14 symbols.
pub fn fit_coeffs_ls(
    tx: &SubcarrierSymbolFrame,
    soft: &SubcarrierSymbolFrame,
    target_sc: usize,
    ell: i32,
    half_window: usize,
) -> Result<FitOutcome> {
    if tx.n_subcarriers() != soft.n_subcarriers() || tx.n_symbols() != soft.n_symbols() {
        return Err(Error::Shape("tx/soft frame mismatch".into()));
    }
    let n = tx.n_symbols();
    if n < MIN_FIT_SYMBOLS {
        return Err(Error::Shape(format!(
            "triplet fit needs >= {MIN_FIT_SYMBOLS} symbols, got {n}"
        )));
    }
    let interferer_sc = target_sc as i64 + ell as i64;
    if target_sc >= tx.n_subcarriers()
        || interferer_sc < 0
        || interferer_sc >= tx.n_subcarriers() as i64
    {
        return Err(Error::Config(format!(
            "offset {ell} from subcarrier {target_sc} leaves the band"
        )));
    }
    let hw = half_window as i64;
    let side = 2 * half_window + 1;
    let k = side * side;
    let target = tx.subcarrier(target_sc);
    let interferer = tx.subcarrier(interferer_sc as usize);
    let soft_t = soft.subcarrier(target_sc);

    let mut g = vec![Complex64::default(); k * k];
    let mut rhs = vec![Complex64::default(); k];
    let mut phi = vec![Complex64::default(); k];
    // Both polarizations share the coefficients (Manakov symmetry), so they
    // are pooled as independent observations.
    for pol_x in [true, false] {
        for i in 0..n {
            features_into(&mut phi, target, interferer, pol_x, i as i64, hw);
            let err = if pol_x {
                target.x[i] - soft_t.x[i]
            } else {
                target.y[i] - soft_t.y[i]
            };
            for p in 0..k {
                let cp = phi[p].conj();
                rhs[p] += cp * err;
                let row = &mut g[p * k..(p + 1) * k];
                for (q, phiq) in phi.iter().enumerate().skip(p) {
                    row[q] += cp * phiq;
                }
            }
        }
    }
    // Mirror the upper triangle.
    for p in 0..k {
        for q in (p + 1)..k {
            g[q * k + p] = g[p * k + q].conj();
        }
    }

    let (solution, regularized) = match cholesky_solve(&g, &rhs, k) {
        Ok(x) => (x, false),
        Err(_) => {
            let trace: f64 = (0..k).map(|p| g[p * k + p].re).sum();
            let ridge = 1e-8 * trace / k as f64;
            for p in 0..k {
                g[p * k + p] += ridge;
            }
            (cholesky_solve(&g, &rhs, k)?, true)
        }
    };
    let grid = CoeffGrid { ell, half_window, values: solution };
    grid.validate_finite()?;
    Ok(FitOutcome { grid, regularized })
}

/// Applies fitted grids as a perturbation equalizer: the predicted error is
/// added back onto the soft symbols (both polarizations), using hard
/// decisions as the triplet features.
pub fn pnlc_equalize(
    soft: &SubcarrierSymbolFrame,
    grids: &[CoeffGrid],
    c: &Constellation,
) -> Result<SubcarrierSymbolFrame> {
    let n = soft.n_symbols();
    let n_sc = soft.n_subcarriers();
    // Hard-decide every stream once.
    let decided: Vec<PolSymbols> = soft
        .subcarriers()
        .iter()
        .map(|sc| PolSymbols {
            x: sc.x.iter().map(|s| c.decide_point(*s)).collect(),
            y: sc.y.iter().map(|s| c.decide_point(*s)).collect(),
        })
        .collect();
    let mut out = soft.subcarriers().to_vec();
    for sc in 0..n_sc {
        for grid in grids {
            let interferer = sc as i64 + grid.ell as i64;
            if interferer < 0 || interferer >= n_sc as i64 {
                continue;
            }
            let hw = grid.half_window as i64;
            let side = grid.side();
            let target = &decided[sc];
            let source = &decided[interferer as usize];
            let mut phi = vec![Complex64::default(); side * side];
            for i in 0..n {
                for pol_x in [true, false] {
                    features_into(&mut phi, target, source, pol_x, i as i64, hw);
                    let est: Complex64 =
                        grid.values.iter().zip(&phi).map(|(c, f)| c * f).sum();
                    if pol_x {
                        out[sc].x[i] += est;
                    } else {
                        out[sc].y[i] += est;
                    }
                }
            }
        }
    }
    SubcarrierSymbolFrame::new(out, soft.baud_per_subcarrier(), soft.roll_off())
}

/// Pearson correlation of two grids' magnitudes.
pub fn magnitude_correlation(a: &CoeffGrid, b: &CoeffGrid) -> f64 {
    assert_eq!(a.values.len(), b.values.len());
    let n = a.values.len() as f64;
    let ma: f64 = a.values.iter().map(|v| v.norm()).sum::<f64>() / n;
    let mb: f64 = b.values.iter().map(|v| v.norm()).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        let dx = x.norm() - ma;
        let dy = y.norm() - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    cov / (va * vb).sqrt().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::map_symbols;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn qam_frame(n: usize, seed: u64) -> SubcarrierSymbolFrame {
        let c = Constellation::square_qam(16).unwrap();
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut gen = || {
            let bits: Vec<u8> = (0..4 * n).map(|_| rng.gen_range(0..=1u8)).collect();
            map_symbols(&bits, &c).unwrap()
        };
        let sc = PolSymbols { x: gen(), y: gen() };
        SubcarrierSymbolFrame::new(vec![sc], 8e9, 1.0 / 16.0).unwrap()
    }

    fn awgn(frame: &SubcarrierSymbolFrame, sigma: f64, seed: u64) -> SubcarrierSymbolFrame {
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut noise = |s: &Complex64| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt() * sigma;
            let th = 2.0 * std::f64::consts::PI * u2;
            s + Complex64::new(r * th.cos(), r * th.sin())
        };
        let subcarriers = frame
            .subcarriers()
            .iter()
            .map(|sc| PolSymbols {
                x: sc.x.iter().map(&mut noise).collect(),
                y: sc.y.iter().map(&mut noise).collect(),
            })
            .collect();
        SubcarrierSymbolFrame::new(subcarriers, frame.baud_per_subcarrier(), frame.roll_off())
            .unwrap()
    }

    #[test]
    fn short_dataset_rejected() {
        let tx = qam_frame(1024, 1);
        let soft = awgn(&tx, 0.05, 2);
        assert!(fit_coeffs_ls(&tx, &soft, 0, 0, 3).is_err());
    }

    #[test]
    fn noise_only_fit_is_near_zero() {
        let tx = qam_frame(1 << 14, 3);
        let soft = awgn(&tx, 0.1, 4);
        let fit = fit_coeffs_ls(&tx, &soft, 0, 0, 3).unwrap();
        let peak = fit.grid.max_abs();
        assert!(peak < 5e-3, "noise-only fit peak {peak}");
    }

    #[test]
    fn recovers_planted_triplet_coefficients() {
        // Build a synthetic channel: soft = tx - sum(C phi) with two known
        // cells, and check the fit finds them.
        let tx = qam_frame(1 << 14, 5);
        let mut truth = CoeffGrid::zeros(0, 3);
        truth.set(1, -2, Complex64::new(2e-3, -1e-3));
        truth.set(0, 1, Complex64::new(-1e-3, 5e-4));
        let sc = tx.subcarrier(0);
        let side = truth.side();
        let mut phi = vec![Complex64::default(); side * side];
        let mut soft_sc = sc.clone();
        for i in 0..tx.n_symbols() {
            for pol_x in [true, false] {
                features_into(&mut phi, sc, sc, pol_x, i as i64, 3);
                let est: Complex64 =
                    truth.values.iter().zip(&phi).map(|(c, f)| c * f).sum();
                if pol_x {
                    soft_sc.x[i] -= est;
                } else {
                    soft_sc.y[i] -= est;
                }
            }
        }
        let soft =
            SubcarrierSymbolFrame::new(vec![soft_sc], 8e9, 1.0 / 16.0).unwrap();
        let soft = awgn(&soft, 0.02, 6);
        let fit = fit_coeffs_ls(&tx, &soft, 0, 0, 3).unwrap();
        let got = fit.grid.at(1, -2);
        assert!(
            (got - truth.at(1, -2)).norm() < 0.5e-3,
            "cell (1,-2): {got} vs {}",
            truth.at(1, -2)
        );
        // Applying the fitted grid as PNLC must shrink the error.
        let c = Constellation::square_qam(16).unwrap();
        let fixed = pnlc_equalize(&soft, &[fit.grid], &c).unwrap();
        let before = crate::rxdsp::evm_db(&soft.subcarrier(0).x, &tx.subcarrier(0).x);
        let after = crate::rxdsp::evm_db(&fixed.subcarrier(0).x, &tx.subcarrier(0).x);
        assert!(after < before, "PNLC did not help: {before} -> {after}");
    }
}
