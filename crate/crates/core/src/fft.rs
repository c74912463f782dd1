//! FFT helpers shared by shaping, propagation and equalization code.
//!
//! All spectral processing in this crate is circular over the full record,
//! which keeps filter cascades exactly invertible. Plans are cached per
//! length in a thread-local planner.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place forward DFT (no scaling).
pub fn fft_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// In-place inverse DFT with 1/N scaling, so `ifft(fft(x)) == x`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Baseband frequency of DFT bin `k` for an `n`-point record at `rate` Sa/s.
/// Bins above n/2 map to negative frequencies.
pub fn bin_freq(k: usize, n: usize, rate: f64) -> f64 {
    let k = k as f64;
    let n = n as f64;
    if k < n / 2.0 {
        k * rate / n
    } else {
        (k - n) * rate / n
    }
}

/// Angular frequency grid (rad/s) matching the DFT bin layout.
pub fn angular_freqs(n: usize, rate: f64) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 * std::f64::consts::PI * bin_freq(k, n, rate))
        .collect()
}

/// Applies a frequency-domain transfer function `h(omega)` in place.
pub fn apply_transfer<F>(samples: &mut [Complex64], rate: f64, h: F)
where
    F: Fn(f64) -> Complex64,
{
    let n = samples.len();
    fft_in_place(samples);
    for (k, v) in samples.iter_mut().enumerate() {
        *v *= h(2.0 * std::f64::consts::PI * bin_freq(k, n, rate));
    }
    ifft_in_place(samples);
}
