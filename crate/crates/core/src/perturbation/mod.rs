//! First-order perturbation analysis of the Kerr nonlinearity: analytic
//! iSPM/iXPM coefficient grids, their mirror symmetry, and a data-driven
//! least-squares triplet oracle (the PNLC baseline).

mod analytic;
mod fit;

pub use analytic::{check_symmetry, compute_coeff_grid, DispersionMap, PertModelConfig};
pub use fit::{fit_coeffs_ls, magnitude_correlation, pnlc_equalize, FitOutcome};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Triplet coefficient grid C[m][n] for one interfering-subcarrier offset.
///
/// `ell = 0` is the intra-subcarrier (iSPM) grid; `ell != 0` couples the
/// target subcarrier to its `ell`-th spectral neighbor. Indices run over
/// `m, n` in `[-half_window, half_window]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffGrid {
    pub ell: i32,
    pub half_window: usize,
    /// Row-major over m (rows) then n (columns), both of size 2*half_window+1.
    pub values: Vec<Complex64>,
}

impl CoeffGrid {
    pub fn zeros(ell: i32, half_window: usize) -> Self {
        let side = 2 * half_window + 1;
        Self { ell, half_window, values: vec![Complex64::default(); side * side] }
    }

    pub fn side(&self) -> usize {
        2 * self.half_window + 1
    }

    fn idx(&self, m: i64, n: i64) -> usize {
        let hw = self.half_window as i64;
        debug_assert!(m.abs() <= hw && n.abs() <= hw);
        ((m + hw) as usize) * self.side() + (n + hw) as usize
    }

    pub fn at(&self, m: i64, n: i64) -> Complex64 {
        self.values[self.idx(m, n)]
    }

    pub fn set(&mut self, m: i64, n: i64, v: Complex64) {
        let i = self.idx(m, n);
        self.values[i] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Area (in grid cells) of the axis-aligned bounding box holding the
    /// given share of the total |C|^2 energy, greedily from the largest cells.
    pub fn energy_support_area(&self, share: f64) -> usize {
        let mut cells: Vec<(f64, usize)> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.norm_sqr(), i))
            .collect();
        cells.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let total: f64 = self.energy();
        let mut acc = 0.0;
        let side = self.side() as i64;
        let (mut m_lo, mut m_hi, mut n_lo, mut n_hi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for (p, i) in cells {
            acc += p;
            let m = i as i64 / side;
            let n = i as i64 % side;
            m_lo = m_lo.min(m);
            m_hi = m_hi.max(m);
            n_lo = n_lo.min(n);
            n_hi = n_hi.max(n);
            if acc >= share * total {
                break;
            }
        }
        ((m_hi - m_lo + 1) * (n_hi - n_lo + 1)) as usize
    }

    pub fn validate_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Tolerance("non-finite grid entries".into()));
        }
        Ok(())
    }
}
