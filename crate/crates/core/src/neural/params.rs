//! Parameter containers with seeded initialization and flat-vector views
//! (the optimizer works on one contiguous f64 slice).

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use super::AnnCoreSpec;

/// Dense affine layer, row-major `w[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lin {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Lin {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, w: vec![0.0; in_dim * out_dim], b: vec![0.0; out_dim] }
    }

    fn init(in_dim: usize, out_dim: usize, rng: &mut Pcg64) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            in_dim,
            out_dim,
            w: (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            b: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(y.len(), self.out_dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.b[r];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *yr = acc;
        }
    }
}

/// One LSTM direction: gates packed `[i, f, g, o]` along the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub in_dim: usize,
    pub hidden: usize,
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            in_dim,
            hidden,
            w_ih: vec![0.0; 4 * hidden * in_dim],
            w_hh: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    fn init(in_dim: usize, hidden: usize, rng: &mut Pcg64) -> Self {
        let bi = 1.0 / (in_dim as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        let mut p = Self {
            in_dim,
            hidden,
            w_ih: (0..4 * hidden * in_dim).map(|_| rng.gen_range(-bi..bi)).collect(),
            w_hh: (0..4 * hidden * hidden).map(|_| rng.gen_range(-bh..bh)).collect(),
            b: vec![0.0; 4 * hidden],
        };
        // Forget-gate bias starts open.
        for v in &mut p.b[hidden..2 * hidden] {
            *v = 1.0;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MlpParams {
    pub layers: Vec<Lin>,
}

impl MlpParams {
    /// Builds `hidden_layers` LeakyReLU-activated layers of width `width`
    /// followed by a linear output layer.
    pub fn init(in_dim: usize, hidden_layers: usize, width: usize, out_dim: usize, rng: &mut Pcg64) -> Self {
        let mut layers = Vec::new();
        let mut cur = in_dim;
        for _ in 0..hidden_layers {
            layers.push(Lin::init(cur, width, rng));
            cur = width;
        }
        layers.push(Lin::init(cur, out_dim, rng));
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Lin::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }
}

/// All learnable tensors of one core.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreParams {
    /// `[filters][channels][kernel]` row-major.
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub fw: LstmParams,
    pub bw: LstmParams,
    /// Per-direction output projection when lstm_out_features != hidden.
    pub proj: Option<(Lin, Lin)>,
    /// MLP head; absent for headless feature cores.
    pub head: Option<MlpParams>,
}

impl CoreParams {
    pub fn init(spec: &AnnCoreSpec, seed: u64) -> Self {
        let mut rng = Pcg64::seed_from_u64(seed);
        let fan_in = spec.in_channels * spec.cnn_kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let conv_w = (0..spec.cnn_filters * fan_in)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let conv_b = vec![0.0; spec.cnn_filters];
        let fw = LstmParams::init(spec.cnn_filters, spec.lstm_hidden, &mut rng);
        let bw = LstmParams::init(spec.cnn_filters, spec.lstm_hidden, &mut rng);
        let proj = spec.has_projection().then(|| {
            (
                Lin::init(spec.lstm_hidden, spec.lstm_out_features, &mut rng),
                Lin::init(spec.lstm_hidden, spec.lstm_out_features, &mut rng),
            )
        });
        let head = (spec.out_dim > 0).then(|| {
            MlpParams::init(
                spec.feature_dim(),
                spec.mlp_hidden_layers,
                spec.mlp_layer_size,
                spec.out_dim,
                &mut rng,
            )
        });
        Self { conv_w, conv_b, fw, bw, proj, head }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            conv_w: vec![0.0; self.conv_w.len()],
            conv_b: vec![0.0; self.conv_b.len()],
            fw: LstmParams::zeros(self.fw.in_dim, self.fw.hidden),
            bw: LstmParams::zeros(self.bw.in_dim, self.bw.hidden),
            proj: self
                .proj
                .as_ref()
                .map(|(a, b)| (Lin::zeros(a.in_dim, a.out_dim), Lin::zeros(b.in_dim, b.out_dim))),
            head: self.head.as_ref().map(|h| h.zeros_like()),
        }
    }

    /// Visits every tensor in canonical order.
    fn visit_slices<'a>(&'a self, f: &mut impl FnMut(&'a [f64])) {
        f(&self.conv_w);
        f(&self.conv_b);
        for lstm in [&self.fw, &self.bw] {
            f(&lstm.w_ih);
            f(&lstm.w_hh);
            f(&lstm.b);
        }
        if let Some((a, b)) = &self.proj {
            for l in [a, b] {
                f(&l.w);
                f(&l.b);
            }
        }
        if let Some(h) = &self.head {
            for l in &h.layers {
                f(&l.w);
                f(&l.b);
            }
        }
    }

    fn visit_slices_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        f(&mut self.conv_w);
        f(&mut self.conv_b);
        for lstm in [&mut self.fw, &mut self.bw] {
            f(&mut lstm.w_ih);
            f(&mut lstm.w_hh);
            f(&mut lstm.b);
        }
        if let Some((a, b)) = &mut self.proj {
            for l in [a, b] {
                f(&mut l.w);
                f(&mut l.b);
            }
        }
        if let Some(h) = &mut self.head {
            for l in &mut h.layers {
                f(&mut l.w);
                f(&mut l.b);
            }
        }
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit_slices(&mut |s| n += s.len());
        n
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.visit_slices(&mut |s| out.extend_from_slice(s));
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.flatten_into(&mut out);
        out
    }

    /// Loads a flat vector produced by [`flatten`](Self::flatten).
    pub fn unflatten_from(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_slices_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    /// Adds `other` tensor-wise (gradient accumulation across instances).
    pub fn add_assign(&mut self, other: &CoreParams) {
        let mut theirs: Vec<&[f64]> = Vec::new();
        other.visit_slices(&mut |s| theirs.push(s));
        let mut idx = 0;
        self.visit_slices_mut(&mut |s| {
            for (a, b) in s.iter_mut().zip(theirs[idx]) {
                *a += b;
            }
            idx += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> AnnCoreSpec {
        AnnCoreSpec {
            in_channels: 4,
            cnn_filters: 3,
            cnn_kernel: 3,
            lstm_hidden: 5,
            lstm_out_features: 4,
            mlp_hidden_layers: 2,
            mlp_layer_size: 6,
            filter_tap: 3,
            leaky_slope: 0.01,
            out_dim: 2,
        }
    }

    #[test]
    fn flatten_round_trip() {
        let p = CoreParams::init(&spec(), 7);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_params());
        let mut q = CoreParams::init(&spec(), 8);
        assert_ne!(p, q);
        q.unflatten_from(&flat);
        assert_eq!(p, q);
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(CoreParams::init(&spec(), 3), CoreParams::init(&spec(), 3));
        assert_ne!(CoreParams::init(&spec(), 3), CoreParams::init(&spec(), 4));
    }

    #[test]
    fn forget_gate_bias_open() {
        let p = CoreParams::init(&spec(), 1);
        let nh = 5;
        assert!(p.fw.b[nh..2 * nh].iter().all(|&v| v == 1.0));
        assert!(p.fw.b[..nh].iter().all(|&v| v == 0.0));
    }
}
