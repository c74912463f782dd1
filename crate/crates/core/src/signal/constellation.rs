//! Square-QAM constellations with Gray labeling.
//!
//! Labeling convention (fixed so BER is reproducible): a symbol label is the
//! integer formed by its bits MSB-first. The first half of the bits selects
//! the in-phase level, the second half the quadrature level. On each axis the
//! bit group is a binary-reflected Gray code over the amplitude levels
//! `-(L-1), -(L-3), ..., (L-1)` in ascending order, and the whole grid is
//! scaled to unit average energy.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    /// `points[label]` is the complex point carrying that bit pattern.
    points: Vec<Complex64>,
    bits_per_symbol: u32,
}

/// Binary-reflected Gray decode: gray -> binary index.
fn gray_decode(mut g: u32) -> u32 {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

impl Constellation {
    /// Builds a square QAM constellation of the given order (4, 16, 64, ...).
    pub fn square_qam(order: usize) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || !(order as f64).log2().rem_euclid(2.0).eq(&0.0)
        {
            return Err(Error::Config(format!(
                "square QAM order must be a power of 4, got {order}"
            )));
        }
        let bits_per_symbol = (order as f64).log2() as u32;
        let half_bits = bits_per_symbol / 2;
        let levels = 1u32 << half_bits;
        // Average energy of the unnormalized grid: 2*(L^2-1)/3.
        let norm = (2.0 * (levels as f64 * levels as f64 - 1.0) / 3.0).sqrt();
        let amp = |group: u32| {
            let idx = gray_decode(group) as f64;
            (2.0 * idx - (levels as f64 - 1.0)) / norm
        };
        let points = (0..order as u32)
            .map(|label| {
                let i_bits = label >> half_bits;
                let q_bits = label & (levels - 1);
                Complex64::new(amp(i_bits), amp(q_bits))
            })
            .collect();
        Ok(Self { points, bits_per_symbol })
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: u32) -> Complex64 {
        self.points[label as usize]
    }

    /// Nearest-point hard decision, returning the bit label.
    pub fn decide(&self, s: Complex64) -> u32 {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (s - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best as u32
    }

    /// Hard decision straight to the constellation point.
    pub fn decide_point(&self, s: Complex64) -> Complex64 {
        self.points[self.decide(s) as usize]
    }
}

/// Maps a 0/1 bit stream onto constellation symbols, MSB first per symbol.
pub fn map_symbols(bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>> {
    let m = c.bits_per_symbol() as usize;
    if bits.len() % m != 0 {
        return Err(Error::Shape(format!(
            "bit count {} not divisible by bits/symbol {}",
            bits.len(),
            m
        )));
    }
    Ok(bits
        .chunks_exact(m)
        .map(|word| {
            let label = word.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b & 1));
            c.point(label)
        })
        .collect())
}
