//! Training loop and random hyperparameter search.
//!
//! Each input record is split 80/20 into contiguous train/validation blocks
//! with an L-sample gap so no window straddles the boundary. Normalization
//! statistics come from the training split only. Loss curves are recorded
//! with dropout off; `total` carries the lambda-weighted composite objective
//! while `data`/`physics` are unweighted mean squared errors in N·m², so they
//! compare directly against a static-model MSE.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::network::PinnModel;
use super::{featurize, PinnConfig, WindowSet};
use crate::csvio;
use crate::error::{Error, Result};
use crate::fitting::{adam_step, AdamSettings, AdamState};
use crate::friction::ScvParams;
use crate::sigproc::Dataset;
use crate::sim::JointParams;

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One point of a loss curve, dropout off. `total` is the weighted composite
/// objective; `data` and `physics` are unweighted MSEs in N·m².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub total: f64,
    pub data: f64,
    pub physics: f64,
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: PinnModel,
    pub train_curve: Vec<LossPoint>,
    pub val_curve: Vec<LossPoint>,
    /// Epoch whose weights were kept (lowest validation total).
    pub best_epoch: usize,
}

struct Split {
    train: WindowSet,
    val: WindowSet,
}

/// Windows from the leading 80% of each record train; windows from the
/// trailing 20% (after an L-sample gap) validate.
fn split_windows(datasets: &[Dataset], params: &JointParams, l: usize) -> Result<Split> {
    let mut train_parts = Vec::new();
    let mut val_parts = Vec::new();
    for ds in datasets {
        let ws = featurize(ds, params, l)?;
        let n = ws.len();
        let cut = (0.8 * n as f64).floor() as usize;
        let val_start = (cut + l).min(n);
        train_parts.push((ws.features.slice(ndarray::s![..cut, ..]).to_owned(),
                          ws.targets.slice(ndarray::s![..cut]).to_owned(),
                          ws.velocities.slice(ndarray::s![..cut]).to_owned()));
        val_parts.push((ws.features.slice(ndarray::s![val_start.., ..]).to_owned(),
                        ws.targets.slice(ndarray::s![val_start..]).to_owned(),
                        ws.velocities.slice(ndarray::s![val_start..]).to_owned()));
    }
    let stack = |parts: Vec<(Array2<f64>, Array1<f64>, Array1<f64>)>| -> Result<WindowSet> {
        let feats: Vec<_> = parts.iter().map(|p| p.0.view()).collect();
        let features = ndarray::concatenate(Axis(0), &feats)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let targs: Vec<_> = parts.iter().map(|p| p.1.view()).collect();
        let targets =
            ndarray::concatenate(Axis(0), &targs).map_err(|e| Error::invalid(e.to_string()))?;
        let vels: Vec<_> = parts.iter().map(|p| p.2.view()).collect();
        let velocities =
            ndarray::concatenate(Axis(0), &vels).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(WindowSet {
            features,
            targets,
            velocities,
        })
    };
    let split = Split {
        train: stack(train_parts)?,
        val: stack(val_parts)?,
    };
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::invalid(
            "records too short for an 80/20 train/validation split",
        ));
    }
    Ok(split)
}

fn column_stats(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).unwrap();
    let mut std = Array1::zeros(x.ncols());
    for j in 0..x.ncols() {
        let col = x.column(j);
        let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
        // Floor keeps constant features harmless.
        std[j] = var.sqrt().max(1e-12);
    }
    (mean, std)
}

/// MSE (N²·m²) of a static friction model over the validation targets of the
/// same split `train` uses; the benchmark a trained network must beat.
pub fn static_val_mse(
    datasets: &[Dataset],
    params: &JointParams,
    l: usize,
    model: &ScvParams,
) -> Result<f64> {
    let split = split_windows(datasets, params, l)?;
    let n = split.val.len();
    let mut acc = 0.0;
    for k in 0..n {
        let e = model.eval(split.val.velocities[k]) - split.val.targets[k];
        acc += e * e;
    }
    Ok(acc / n as f64)
}

/// Trains on one or more preprocessed records.
pub fn train(
    datasets: &[Dataset],
    params: &JointParams,
    config: &PinnConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("no datasets given"));
    }
    let l = config.history_length;
    let split = split_windows(datasets, params, l)?;

    let mut model = PinnModel::init(config, config.seed)?;
    let (mean, std) = column_stats(&split.train.features);
    model.feat_mean = mean;
    model.feat_std = std;
    let t_std = {
        let t = &split.train.targets;
        let m = t.mean().unwrap();
        (t.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t.len() as f64).sqrt()
    };
    model.target_scale = t_std.max(1e-9);

    let scale = model.target_scale;
    let scv = &config.physics_params;
    let train_y: Array1<f64> = split.train.targets.mapv(|v| v / scale);
    let train_phys: Array1<f64> = split.train.velocities.mapv(|v| scv.eval(v) / scale);
    let val_y: Array1<f64> = split.val.targets.mapv(|v| v / scale);
    let val_phys: Array1<f64> = split.val.velocities.mapv(|v| scv.eval(v) / scale);

    let adam_settings = AdamSettings {
        learning_rate: config.learning_rate,
        epochs: config.epochs,
        batch_size: Some(config.batch_size),
        seed: config.seed,
        ..AdamSettings::default()
    };
    let mut states = [
        AdamState::new(model.w1.len()),
        AdamState::new(model.b1.len()),
        AdamState::new(model.w2.len()),
        AdamState::new(model.b2.len()),
        AdamState::new(model.w3.len()),
        AdamState::new(model.b3.len()),
    ];

    let n_train = split.train.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(1));
    let batch = config.batch_size.min(n_train);

    let mut train_curve = Vec::with_capacity(config.epochs);
    let mut val_curve = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, model.clone(), 0usize);

    // Scratch for gathering minibatches.
    let f = model.feature_count();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut xb = Array2::zeros((chunk.len(), f));
            let mut yb = Array1::zeros(chunk.len());
            let mut pb = Array1::zeros(chunk.len());
            for (row, &k) in chunk.iter().enumerate() {
                xb.row_mut(row).assign(&split.train.features.row(k));
                yb[row] = train_y[k];
                pb[row] = train_phys[k];
            }
            let masks = model.sample_masks(chunk.len(), &mut rng);
            let cache = model.forward_cached(&xb, Some(&masks))?;
            let grads = model.backward(&cache, Some(&masks), &yb, &pb, config.lambda);

            let tensors: [(&mut [f64], &[f64]); 6] = [
                (model.w1.as_slice_mut().unwrap(), grads.w1.as_slice().unwrap()),
                (model.b1.as_slice_mut().unwrap(), grads.b1.as_slice().unwrap()),
                (model.w2.as_slice_mut().unwrap(), grads.w2.as_slice().unwrap()),
                (model.b2.as_slice_mut().unwrap(), grads.b2.as_slice().unwrap()),
                (model.w3.as_slice_mut().unwrap(), grads.w3.as_slice().unwrap()),
                (model.b3.as_slice_mut().unwrap(), grads.b3.as_slice().unwrap()),
            ];
            for (t, (p, g)) in tensors.into_iter().enumerate() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        epoch,
                        message: "non-finite gradient; lower the learning rate".into(),
                    });
                }
                adam_step(p, g, &mut states[t], &adam_settings)?;
            }
        }

        let tr = epoch_losses(&model, &split.train.features, &train_y, &train_phys, config.lambda, scale)?;
        let va = epoch_losses(&model, &split.val.features, &val_y, &val_phys, config.lambda, scale)?;
        if !tr.total.is_finite() || !va.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: "non-finite loss; lower the learning rate".into(),
            });
        }
        train_curve.push(tr);
        val_curve.push(va);
        if va.total < best.0 {
            best = (va.total, model.clone(), epoch);
        }
    }

    Ok(TrainOutcome {
        model: best.1,
        train_curve,
        val_curve,
        best_epoch: best.2,
    })
}

fn epoch_losses(
    model: &PinnModel,
    x: &Array2<f64>,
    y_scaled: &Array1<f64>,
    phys_scaled: &Array1<f64>,
    lambda: f64,
    scale: f64,
) -> Result<LossPoint> {
    let (total, data_w, phys_w) = model.loss_scaled(x, y_scaled, phys_scaled, lambda)?;
    let s2 = scale * scale;
    // Report unweighted component MSEs in N·m²; keep the weighted objective
    // in `total` (also in N·m²).
    let data = if lambda < 1.0 { data_w / (1.0 - lambda) } else { 0.0 };
    let physics = if lambda > 0.0 { phys_w / lambda } else { 0.0 };
    Ok(LossPoint {
        total: total * s2,
        data: data * s2,
        physics: physics * s2,
    })
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

/// Uniform (log-uniform for the learning rate) sampling ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_size: (usize, usize),
    pub hidden1: (usize, usize),
    pub hidden2: (usize, usize),
    pub learning_rate: (f64, f64),
    pub history_length: (usize, usize),
    pub lambda: (f64, f64),
    pub dropout_rate: (f64, f64),
    /// Epochs are fixed across trials.
    pub epochs: usize,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ranges_ok = self.batch_size.0 >= 1
            && self.batch_size.0 <= self.batch_size.1
            && self.hidden1.0 >= 1
            && self.hidden1.0 <= self.hidden1.1
            && self.hidden2.0 >= 1
            && self.hidden2.0 <= self.hidden2.1
            && self.history_length.0 >= 1
            && self.history_length.0 <= self.history_length.1
            && self.learning_rate.0 > 0.0
            && self.learning_rate.0 <= self.learning_rate.1
            && self.lambda.0 >= 0.0
            && self.lambda.0 <= self.lambda.1
            && self.lambda.1 <= 1.0
            && self.dropout_rate.0 >= 0.0
            && self.dropout_rate.0 <= self.dropout_rate.1
            && self.dropout_rate.1 < 1.0
            && self.epochs >= 1;
        if !ranges_ok {
            return Err(Error::invalid("search space bounds are inconsistent"));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha12Rng, physics: &crate::friction::ScvParams, seed: u64) -> PinnConfig {
        let int = |rng: &mut ChaCha12Rng, (lo, hi): (usize, usize)| -> usize {
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..=hi)
            }
        };
        let real = |rng: &mut ChaCha12Rng, (lo, hi): (f64, f64)| -> f64 {
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        };
        let lr = {
            let (lo, hi) = self.learning_rate;
            if lo == hi {
                lo
            } else {
                (real(rng, (lo.ln(), hi.ln()))).exp()
            }
        };
        PinnConfig {
            batch_size: int(rng, self.batch_size),
            hidden1: int(rng, self.hidden1),
            hidden2: int(rng, self.hidden2),
            learning_rate: lr,
            history_length: int(rng, self.history_length),
            lambda: real(rng, self.lambda),
            dropout_rate: real(rng, self.dropout_rate),
            epochs: self.epochs,
            seed,
            physics_params: *physics,
        }
    }
}

/// One row of the sweep table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub batch: usize,
    pub h1: usize,
    pub h2: usize,
    pub lr: f64,
    pub l: usize,
    pub lambda: f64,
    pub dropout: f64,
    pub val_loss: f64,
}

pub const TRIAL_HEADER: &str = "trial,seed,batch,h1,h2,lr,L,lambda,dropout,val_loss";

/// Writes the sweep table in column order `trial,seed,batch,h1,h2,lr,L,lambda,dropout,val_loss`.
pub fn write_trial_csv(records: &[TrialRecord], path: &Path, comments: &[String]) -> Result<()> {
    let cols: [Vec<f64>; 10] = [
        records.iter().map(|r| r.trial as f64).collect(),
        records.iter().map(|r| r.seed as f64).collect(),
        records.iter().map(|r| r.batch as f64).collect(),
        records.iter().map(|r| r.h1 as f64).collect(),
        records.iter().map(|r| r.h2 as f64).collect(),
        records.iter().map(|r| r.lr).collect(),
        records.iter().map(|r| r.l as f64).collect(),
        records.iter().map(|r| r.lambda).collect(),
        records.iter().map(|r| r.dropout).collect(),
        records.iter().map(|r| r.val_loss).collect(),
    ];
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    csvio::write_columns(path, comments, TRIAL_HEADER, &refs)
}

/// Samples `n_trials` configurations, trains each (in parallel), and returns
/// the argmin-validation-loss config with the full trial table. Per-trial
/// seeds derive from `seed` and the trial index, so the outcome does not
/// depend on scheduling.
pub fn random_search(
    datasets: &[Dataset],
    params: &JointParams,
    space: &SearchSpace,
    physics: &crate::friction::ScvParams,
    n_trials: usize,
    seed: u64,
) -> Result<(PinnConfig, Vec<TrialRecord>)> {
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::invalid("n_trials must be >= 1"));
    }

    let configs: Vec<PinnConfig> = (0..n_trials)
        .map(|trial| {
            let trial_seed = seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA5A5;
            let mut rng = ChaCha12Rng::seed_from_u64(trial_seed);
            space.sample(&mut rng, physics, trial_seed)
        })
        .collect();

    let results: Vec<Result<(usize, PinnConfig, f64)>> = configs
        .into_par_iter()
        .enumerate()
        .map(|(trial, config)| {
            let outcome = train(datasets, params, &config)?;
            let val = outcome.val_curve[outcome.best_epoch].total;
            Ok((trial, config, val))
        })
        .collect();

    let mut records = Vec::with_capacity(n_trials);
    let mut best: Option<(f64, PinnConfig)> = None;
    for r in results {
        let (trial, config, val) = r?;
        records.push(TrialRecord {
            trial,
            seed: config.seed,
            batch: config.batch_size,
            h1: config.hidden1,
            h2: config.hidden2,
            lr: config.learning_rate,
            l: config.history_length,
            lambda: config.lambda,
            dropout: config.dropout_rate,
            val_loss: val,
        });
        let better = match &best {
            None => true,
            Some((b, _)) => val < *b,
        };
        if better {
            best = Some((val, config));
        }
    }
    records.sort_by_key(|r| r.trial);
    Ok((best.unwrap().1, records))
}
