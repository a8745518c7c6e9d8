//! The network itself: He-initialized two-hidden-layer ReLU MLP with
//! inverted dropout, hand-written backpropagation through the composite
//! loss, and JSON serialization.
//!
//! Internally the network operates on standardized features and a target
//! scaled by its training-split standard deviation; [`PinnModel::predict`]
//! converts back to N·m.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::PinnConfig;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Composite loss
// ---------------------------------------------------------------------------

/// Weighted data + physics loss:
/// L_data = (1−λ)·mean((pred−true)²), L_physics = λ·mean((pred−physics)²).
/// Returns (total, L_data, L_physics).
pub fn composite_loss(
    pred: &[f64],
    truth: &[f64],
    physics: &[f64],
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    if pred.is_empty() || pred.len() != truth.len() || pred.len() != physics.len() {
        return Err(Error::invalid(format!(
            "loss inputs must be nonempty and equal length: {} / {} / {}",
            pred.len(),
            truth.len(),
            physics.len()
        )));
    }
    let n = pred.len() as f64;
    let mut data = 0.0;
    let mut phys = 0.0;
    for k in 0..pred.len() {
        data += (pred[k] - truth[k]).powi(2);
        phys += (pred[k] - physics[k]).powi(2);
    }
    let l_data = (1.0 - lambda) * data / n;
    let l_phys = lambda * phys / n;
    Ok((l_data + l_phys, l_data, l_phys))
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Trained network with its normalization statistics. Weight matrices are
/// row-major (output, input).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PinnModel {
    pub config: PinnConfig,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
    /// Per-feature standardization from the training split.
    pub feat_mean: Array1<f64>,
    pub feat_std: Array1<f64>,
    /// Target standard deviation (N·m); network outputs are multiples of it.
    pub target_scale: f64,
}

/// Sampled inverted-dropout masks (entries are 0 or 1/(1−p)).
#[derive(Clone, Debug)]
pub struct DropoutMasks {
    pub m1: Array2<f64>,
    pub m2: Array2<f64>,
}

/// Forward-pass intermediates kept for backpropagation.
pub(crate) struct ForwardCache {
    pub xn: Array2<f64>,
    pub z1: Array2<f64>,
    pub a1: Array2<f64>,
    pub z2: Array2<f64>,
    pub a2: Array2<f64>,
    /// Scaled prediction, one column.
    pub yhat: Array1<f64>,
}

/// Gradients, same shapes as the corresponding tensors.
pub(crate) struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

impl PinnModel {
    /// He-style uniform fan-in initialization, seeded; normalization starts
    /// at identity until training fills it in.
    pub fn init(config: &PinnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = 2 * config.history_length;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut layer = |rows: usize, cols: usize| -> Array2<f64> {
            let bound = (6.0 / cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
        };
        Ok(PinnModel {
            config: *config,
            w1: layer(config.hidden1, f),
            b1: Array1::zeros(config.hidden1),
            w2: layer(config.hidden2, config.hidden1),
            b2: Array1::zeros(config.hidden2),
            w3: layer(1, config.hidden2),
            b3: Array1::zeros(1),
            feat_mean: Array1::zeros(f),
            feat_std: Array1::ones(f),
            target_scale: 1.0,
        })
    }

    pub fn feature_count(&self) -> usize {
        2 * self.config.history_length
    }

    fn check_features(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.feature_count() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.feature_count(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut xn = x.clone();
        for mut row in xn.axis_iter_mut(Axis(0)) {
            row -= &self.feat_mean;
            row /= &self.feat_std;
        }
        xn
    }

    /// Samples one mask set for a batch of `n` rows.
    pub fn sample_masks(&self, n: usize, rng: &mut ChaCha12Rng) -> DropoutMasks {
        let p = self.config.dropout_rate;
        let mut mask = |cols: usize| -> Array2<f64> {
            if p == 0.0 {
                Array2::ones((n, cols))
            } else {
                let keep = 1.0 - p;
                Array2::from_shape_fn((n, cols), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            }
        };
        DropoutMasks {
            m1: mask(self.config.hidden1),
            m2: mask(self.config.hidden2),
        }
    }

    /// Training-mode forward under explicit dropout masks; returns scaled
    /// predictions plus the cache for [`PinnModel::backward`].
    pub(crate) fn forward_cached(
        &self,
        x: &Array2<f64>,
        masks: Option<&DropoutMasks>,
    ) -> Result<ForwardCache> {
        self.check_features(x)?;
        let xn = self.normalize(x);
        let z1 = xn.dot(&self.w1.t()) + &self.b1;
        let mut a1 = relu(&z1);
        if let Some(m) = masks {
            a1 *= &m.m1;
        }
        let z2 = a1.dot(&self.w2.t()) + &self.b2;
        let mut a2 = relu(&z2);
        if let Some(m) = masks {
            a2 *= &m.m2;
        }
        let yhat = (a2.dot(&self.w3.t()) + &self.b3).column(0).to_owned();
        Ok(ForwardCache {
            xn,
            z1,
            a1,
            z2,
            a2,
            yhat,
        })
    }

    /// Deterministic inference in N·m for a batch of raw feature rows.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let cache = self.forward_cached(x, None)?;
        Ok(cache.yhat.mapv(|v| v * self.target_scale))
    }

    /// Single-window convenience wrapper around [`PinnModel::predict`].
    pub fn predict_window(&self, features: &[f64]) -> Result<f64> {
        let x = Array2::from_shape_vec((1, features.len()), features.to_vec())
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.predict(&x)?[0])
    }

    /// Gradients of the composite loss on scaled targets under the same
    /// masks used in the forward pass.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        masks: Option<&DropoutMasks>,
        y_scaled: &Array1<f64>,
        physics_scaled: &Array1<f64>,
        lambda: f64,
    ) -> Gradients {
        let n = cache.yhat.len() as f64;
        // dL/dyhat per sample, as an (n, 1) column.
        let dy: Array1<f64> = (0..cache.yhat.len())
            .map(|k| {
                2.0 / n
                    * ((1.0 - lambda) * (cache.yhat[k] - y_scaled[k])
                        + lambda * (cache.yhat[k] - physics_scaled[k]))
            })
            .collect();
        let dy = dy.insert_axis(Axis(1));

        let gw3 = dy.t().dot(&cache.a2);
        let gb3 = dy.sum_axis(Axis(0));

        let mut d2 = dy.dot(&self.w3);
        if let Some(m) = masks {
            d2 *= &m.m2;
        }
        ndarray::Zip::from(&mut d2)
            .and(&cache.z2)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        let gw2 = d2.t().dot(&cache.a1);
        let gb2 = d2.sum_axis(Axis(0));

        let mut d1 = d2.dot(&self.w2);
        if let Some(m) = masks {
            d1 *= &m.m1;
        }
        ndarray::Zip::from(&mut d1)
            .and(&cache.z1)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        let gw1 = d1.t().dot(&cache.xn);
        let gb1 = d1.sum_axis(Axis(0));

        Gradients {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
            w3: gw3,
            b3: gb3,
        }
    }

    /// Composite loss on scaled targets for a raw feature batch, dropout off.
    pub(crate) fn loss_scaled(
        &self,
        x: &Array2<f64>,
        y_scaled: &Array1<f64>,
        physics_scaled: &Array1<f64>,
        lambda: f64,
    ) -> Result<(f64, f64, f64)> {
        let cache = self.forward_cached(x, None)?;
        let (total, data, phys) = composite_loss(
            cache.yhat.as_slice().unwrap(),
            y_scaled.as_slice().unwrap(),
            physics_scaled.as_slice().unwrap(),
            lambda,
        )?;
        Ok((total, data, phys))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<PinnModel> {
        let text = std::fs::read_to_string(path)?;
        let model: PinnModel = serde_json::from_str(&text)?;
        model.config.validate()?;
        if model.feat_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("feature std must be > 0"));
        }
        Ok(model)
    }
}
