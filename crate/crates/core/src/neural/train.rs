//! Adam, the plateau LR scheduler, early stopping and the epoch driver.
//!
//! The driver is generic over the model: it owns a flat parameter vector and
//! calls back for batch loss/gradient and validation loss, so single cores
//! and multi-core equalizer graphs train through the same loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::{gather_window, SequenceDataset};
use super::params::CoreParams;
use super::{core_backward, core_forward_symbol, AnnCoreSpec, CoreCache};

/// Training configuration (RMSE loss throughout).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// LR scheduler: multiply by `lr_factor` after `lr_patience` epochs
    /// without validation improvement.
    pub lr_factor: f64,
    pub lr_patience: usize,
    /// Floor under which a diverging run is reported as failed.
    pub min_lr: f64,
    pub p_train_dbm: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 512,
            max_epochs: 200,
            early_stop_patience: 30,
            lr_factor: 0.8,
            lr_patience: 10,
            min_lr: 1e-6,
            p_train_dbm: 2.0,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must be in (0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch and max_epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::Config("lr must be > 0 and factor in (0,1)".into()));
        }
        Ok(())
    }
}

/// Adam with canonical moment defaults (recorded in model manifests).
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / b1t;
            let vhat = *v / b2t;
            *p -= lr * mhat / (vhat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub best_params: Vec<f64>,
    pub best_val_rmse: f64,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// Epoch loop: shuffled mini-batches, Adam updates, LR plateau schedule,
/// early stopping, best-epoch checkpointing.
///
/// `batch_step(params, indices)` returns the batch RMSE and the gradient;
/// `val_loss(params)` the full validation RMSE.
pub fn run_training(
    mut params: Vec<f64>,
    run: &TrainRun,
    train_indices: &[usize],
    mut batch_step: impl FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
    mut val_loss: impl FnMut(&[f64]) -> f64,
) -> Result<TrainOutcome> {
    run.validate()?;
    if train_indices.is_empty() {
        return Err(Error::Training("no training samples".into()));
    }
    let mut adam = Adam::new(params.len());
    let mut lr = run.lr;
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;
    let mut epochs_since_lr_drop = 0usize;
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = train_indices.to_vec();
    for epoch in 0..run.max_epochs {
        let mut rng = Pcg64::seed_from_u64(run.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_acc = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(run.batch) {
            let (loss, grad) = batch_step(&params, batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch} (lr {lr:.2e})"
                )));
            }
            adam.step(&mut params, &grad, lr);
            loss_acc += loss;
            batches += 1;
        }
        let val = val_loss(&params);
        if !val.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        history.push(EpochStats {
            epoch,
            train_rmse: loss_acc / batches as f64,
            val_rmse: val,
            lr,
        });
        if val < best_val {
            best_val = val;
            best_params.copy_from_slice(&params);
            epochs_since_best = 0;
            epochs_since_lr_drop = 0;
        } else {
            epochs_since_best += 1;
            epochs_since_lr_drop += 1;
            if epochs_since_lr_drop >= run.lr_patience {
                lr *= run.lr_factor;
                epochs_since_lr_drop = 0;
                if lr < run.min_lr {
                    return Err(Error::Training(format!(
                        "learning rate fell below the {:.1e} floor without improving",
                        run.min_lr
                    )));
                }
            }
            if epochs_since_best >= run.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { best_params, best_val_rmse: best_val, history, stopped_early })
}

/// Splits instants into train/validation (validation is the trailing block,
/// so overlapping windows leak as little as possible).
pub fn split_indices(
    usable: std::ops::Range<usize>,
    validation_fraction: f64,
) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = usable.collect();
    let n_val = ((all.len() as f64) * validation_fraction).round() as usize;
    let cut = all.len() - n_val.min(all.len());
    (all[..cut].to_vec(), all[cut..].to_vec())
}

/// Trains a single core on a sequence dataset (symbol-mode windows).
/// Returns the best-validation parameters and the run history.
pub fn train_core(
    spec: &AnnCoreSpec,
    run: &TrainRun,
    data: &SequenceDataset,
) -> Result<(CoreParams, TrainOutcome)> {
    spec.validate()?;
    run.validate()?;
    if data.features.len() != spec.in_channels {
        return Err(Error::Shape(format!(
            "dataset has {} channels, core wants {}",
            data.features.len(),
            spec.in_channels
        )));
    }
    let out_dim = if spec.out_dim > 0 { spec.out_dim } else { spec.feature_dim() };
    if data.targets.len() != out_dim {
        return Err(Error::Shape(format!(
            "dataset has {} target dims, core emits {}",
            data.targets.len(),
            out_dim
        )));
    }
    let t = spec.filter_tap;
    if data.len < 2 * t + 2 {
        return Err(Error::Shape("dataset shorter than one window".into()));
    }
    let (train_idx, val_idx) = split_indices(t..data.len - t, run.validation_fraction);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Training("split left an empty partition".into()));
    }

    let template = CoreParams::init(spec, run.seed);
    let win = spec.window_len();
    let mut work = template.clone();
    let mut window = vec![0.0; spec.in_channels * win];
    let mut val_work = template.clone();
    let mut val_window = vec![0.0; spec.in_channels * win];

    let outcome = run_training(
        template.flatten(),
        run,
        &train_idx,
        |flat, batch| {
            work.unflatten_from(flat);
            let mut grads = work.zeros_like();
            // Two passes: RMSE needs the batch MSE before gradients scale.
            let mut caches = Vec::with_capacity(batch.len());
            let mut errs = Vec::with_capacity(batch.len());
            for &i in batch {
                gather_window(&data.features, i as i64 - t as i64, win, &mut window);
                let mut cache = CoreCache::default();
                let y = core_forward_symbol(spec, &work, &window, Some(&mut cache))?;
                let e: Vec<f64> =
                    y.iter().zip(data.target_at(i)).map(|(a, b)| a - b).collect();
                caches.push(cache);
                errs.push(e);
            }
            let denom = (batch.len() * out_dim) as f64;
            let mse = errs.iter().flatten().map(|e| e * e).sum::<f64>() / denom;
            let rmse = mse.sqrt();
            if rmse > 0.0 {
                let scale = 1.0 / (rmse * denom);
                for (cache, e) in caches.iter().zip(&errs) {
                    let d: Vec<f64> = e.iter().map(|v| v * scale).collect();
                    core_backward(spec, &work, cache, &d, &mut grads)?;
                }
            }
            Ok((rmse, grads.flatten()))
        },
        |flat| {
            val_work.unflatten_from(flat);
            let mut acc = 0.0;
            for &i in &val_idx {
                gather_window(&data.features, i as i64 - t as i64, win, &mut val_window);
                match core_forward_symbol(spec, &val_work, &val_window, None) {
                    Ok(y) => {
                        acc += y
                            .iter()
                            .zip(data.target_at(i))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    }
                    Err(_) => return f64::NAN,
                }
            }
            (acc / (val_idx.len() * out_dim) as f64).sqrt()
        },
    )?;
    let mut best = template;
    best.unflatten_from(&outcome.best_params);
    Ok((best, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    fn quick_run(seed: u64) -> TrainRun {
        TrainRun {
            lr: 3e-3,
            batch: 64,
            max_epochs: 60,
            early_stop_patience: 20,
            lr_factor: 0.8,
            lr_patience: 8,
            min_lr: 1e-6,
            p_train_dbm: 2.0,
            validation_fraction: 0.2,
            seed,
        }
    }

    fn teacher_dataset(n: usize, sigma: f64, seed: u64) -> SequenceDataset {
        // Linear teacher: targets are a fixed 5-tap filter of the input
        // channels plus AWGN of the given sigma.
        let mut rng = Pcg64::seed_from_u64(seed);
        let channels: Vec<Vec<f64>> =
            (0..4).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let taps: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let mut targets = vec![vec![0.0; n]; 2];
        for i in 2..n - 2 {
            let mut acc = [0.0f64; 2];
            for (c, ch) in channels.iter().enumerate() {
                for j in 0..5 {
                    let v = taps[c][j] * ch[i + j - 2];
                    acc[0] += v;
                    acc[1] -= 0.5 * v;
                }
            }
            targets[0][i] = acc[0] + rng.gen_range(-sigma..sigma);
            targets[1][i] = acc[1] + rng.gen_range(-sigma..sigma);
        }
        SequenceDataset::new(channels, targets).unwrap()
    }

    #[test]
    fn learns_linear_teacher_to_noise_floor() {
        let spec = AnnCoreSpec {
            in_channels: 4,
            cnn_filters: 6,
            cnn_kernel: 5,
            lstm_hidden: 8,
            lstm_out_features: 8,
            mlp_hidden_layers: 1,
            mlp_layer_size: 8,
            filter_tap: 4,
            leaky_slope: 0.01,
            out_dim: 2,
        };
        let sigma = 0.05;
        let data = teacher_dataset(4000, sigma, 5);
        let run = TrainRun {
            lr: 5e-3,
            max_epochs: 250,
            early_stop_patience: 50,
            lr_patience: 15,
            ..quick_run(1)
        };
        let (_, outcome) = train_core(&spec, &run, &data).unwrap();
        // Uniform(-s, s) noise has rms s/sqrt(3); allow 5% over that floor.
        let floor = sigma / 3f64.sqrt();
        assert!(
            outcome.best_val_rmse < floor * 1.05,
            "val RMSE {} vs floor {floor}",
            outcome.best_val_rmse
        );
    }

    #[test]
    fn best_so_far_history_non_increasing() {
        let data = teacher_dataset(1200, 0.05, 9);
        let spec = AnnCoreSpec {
            in_channels: 4,
            cnn_filters: 3,
            cnn_kernel: 3,
            lstm_hidden: 4,
            lstm_out_features: 4,
            mlp_hidden_layers: 0,
            mlp_layer_size: 0,
            filter_tap: 2,
            leaky_slope: 0.01,
            out_dim: 2,
        };
        let run = TrainRun { max_epochs: 12, ..quick_run(2) };
        let (_, outcome) = train_core(&spec, &run, &data).unwrap();
        let mut best = f64::INFINITY;
        for e in &outcome.history {
            let new_best = e.val_rmse.min(best);
            assert!(new_best <= best);
            best = new_best;
        }
        assert!((best - outcome.best_val_rmse).abs() < 1e-15);
    }

    #[test]
    fn deterministic_training_trajectory() {
        let data = teacher_dataset(800, 0.05, 3);
        let spec = AnnCoreSpec {
            in_channels: 4,
            cnn_filters: 2,
            cnn_kernel: 3,
            lstm_hidden: 3,
            lstm_out_features: 3,
            mlp_hidden_layers: 0,
            mlp_layer_size: 0,
            filter_tap: 2,
            leaky_slope: 0.01,
            out_dim: 2,
        };
        let run = TrainRun { max_epochs: 6, ..quick_run(7) };
        let (a, oa) = train_core(&spec, &run, &data).unwrap();
        let (b, ob) = train_core(&spec, &run, &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa.history, ob.history);
    }

    #[test]
    fn adam_reduces_quadratic() {
        let mut adam = Adam::new(2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..500 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            adam.step(&mut p, &g, 0.05);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2, "{p:?}");
    }

    #[test]
    fn zero_error_gives_zero_gradient_and_duplication_scales() {
        // Mean-reduction RMSE convention: a duplicated sample leaves the
        // batch gradient equal to the single-sample gradient.
        let data = teacher_dataset(600, 0.05, 11);
        let spec = AnnCoreSpec {
            in_channels: 4,
            cnn_filters: 2,
            cnn_kernel: 3,
            lstm_hidden: 3,
            lstm_out_features: 3,
            mlp_hidden_layers: 0,
            mlp_layer_size: 0,
            filter_tap: 2,
            leaky_slope: 0.01,
            out_dim: 2,
        };
        let params = CoreParams::init(&spec, 1);
        let t = spec.filter_tap;
        let win = spec.window_len();
        let grad_for = |batch: &[usize]| -> Vec<f64> {
            let mut window = vec![0.0; spec.in_channels * win];
            let mut caches = Vec::new();
            let mut errs = Vec::new();
            for &i in batch {
                gather_window(&data.features, i as i64 - t as i64, win, &mut window);
                let mut cache = CoreCache::default();
                let y = core_forward_symbol(&spec, &params, &window, Some(&mut cache)).unwrap();
                let e: Vec<f64> =
                    y.iter().zip(data.target_at(i)).map(|(a, b)| a - b).collect();
                caches.push(cache);
                errs.push(e);
            }
            let denom = (batch.len() * 2) as f64;
            let rmse =
                (errs.iter().flatten().map(|e| e * e).sum::<f64>() / denom).sqrt();
            let mut grads = params.zeros_like();
            for (cache, e) in caches.iter().zip(&errs) {
                let d: Vec<f64> = e.iter().map(|v| v / (rmse * denom)).collect();
                core_backward(&spec, &params, cache, &d, &mut grads).unwrap();
            }
            grads.flatten()
        };
        let single = grad_for(&[50]);
        let dup = grad_for(&[50, 50]);
        for (a, b) in single.iter().zip(&dup) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
