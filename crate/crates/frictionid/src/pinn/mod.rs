//! Physics-informed friction estimator: history-window featurization, a
//! two-hidden-layer ReLU network with dropout, a composite data + physics
//! loss, the training loop, a random hyperparameter search, and an
//! allocation-free online inference path.
//!
//! The network maps a finite history of transmission windup
//! `delta_theta = r·s − theta` and joint velocity to the friction torque.
//! The windup history is what lets it predict stiction: while the joint
//! sticks, velocity is identically zero and the wound transmission is the
//! only observable carrying the friction reaction.

mod network;
mod online;
mod train;

pub use network::{composite_loss, DropoutMasks, PinnModel};
pub use online::OnlineEstimator;
pub use train::{
    random_search, static_val_mse, train, write_trial_csv, LossPoint, SearchSpace, TrainOutcome, TrialRecord,
    TRIAL_HEADER,
};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::friction::ScvParams;
use crate::sigproc::Dataset;
use crate::sim::JointParams;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Hyperparameters of one training run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnConfig {
    /// History length L (samples); the input layer has 2L features.
    pub history_length: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Dropout probability in [0, 1).
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Physics-loss weight in [0, 1]; 0 is purely data-driven.
    pub lambda: f64,
    pub seed: u64,
    /// Parameters of the physics target model.
    pub physics_params: ScvParams,
}

impl PinnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_length == 0 {
            return Err(Error::config("history_length", "must be >= 1"));
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::config("hidden1", "hidden sizes must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::config("dropout_rate", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda", "must lie in [0, 1]"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        self.physics_params
            .validate()
            .map_err(|e| e.under("physics_params"))
    }
}

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

/// One input window; both histories are ordered oldest to newest.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryWindow {
    pub delta_theta: Vec<f64>,
    pub s_dot: Vec<f64>,
}

impl HistoryWindow {
    /// Fixed feature layout: [delta_theta oldest..newest, s_dot oldest..newest].
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(2 * self.delta_theta.len());
        f.extend_from_slice(&self.delta_theta);
        f.extend_from_slice(&self.s_dot);
        f
    }
}

/// Sliding windows extracted from a dataset: feature rows, targets, and the
/// joint velocity at each target sample (used for physics targets).
#[derive(Clone, Debug)]
pub struct WindowSet {
    /// (n_windows, 2L), layout per [`HistoryWindow::features`].
    pub features: Array2<f64>,
    /// Reconstructed friction torque at the newest window sample (N·m).
    pub targets: Array1<f64>,
    /// Joint velocity at the newest window sample (rad/s).
    pub velocities: Array1<f64>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Extracts all stride-1 windows: window `i` covers samples [i−L+1 .. i] and
/// is labelled with `tau_f_true[i]`.
pub fn featurize(dataset: &Dataset, params: &JointParams, l: usize) -> Result<WindowSet> {
    let n = dataset.len();
    if l == 0 {
        return Err(Error::invalid("history length must be >= 1"));
    }
    if n <= l {
        return Err(Error::invalid(format!(
            "dataset of {n} samples is too short for history length {l}"
        )));
    }
    let r = params.reduction_ratio;
    let delta: Vec<f64> = dataset
        .s
        .iter()
        .zip(&dataset.theta)
        .map(|(s, th)| r * s - th)
        .collect();

    let count = n - l + 1;
    let mut features = Array2::zeros((count, 2 * l));
    let mut targets = Array1::zeros(count);
    let mut velocities = Array1::zeros(count);
    for w in 0..count {
        let start = w;
        let end = w + l;
        for (j, k) in (start..end).enumerate() {
            features[(w, j)] = delta[k];
            features[(w, l + j)] = dataset.s_dot[k];
        }
        targets[w] = dataset.tau_f_true[end - 1];
        velocities[w] = dataset.s_dot[end - 1];
    }
    Ok(WindowSet {
        features,
        targets,
        velocities,
    })
}

#[cfg(test)]
pub(crate) fn test_config(l: usize, h1: usize, h2: usize) -> PinnConfig {
    PinnConfig {
        history_length: l,
        hidden1: h1,
        hidden2: h2,
        dropout_rate: 0.1,
        learning_rate: 1e-3,
        batch_size: 32,
        epochs: 10,
        lambda: 0.2,
        seed: 7,
        physics_params: ScvParams::new(2.78, 1.0005, 0.29, 6.0, 0.13, 0.6),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize) -> Dataset {
        Dataset {
            rate: 1000.0,
            t: (0..n).map(|k| k as f64 / 1000.0).collect(),
            s: (0..n).map(|k| 0.01 * k as f64).collect(),
            s_dot: (0..n).map(|k| 0.1 * k as f64).collect(),
            s_ddot: vec![0.0; n],
            theta: (0..n).map(|k| 0.5 * k as f64).collect(),
            theta_dot: vec![0.0; n],
            i_m: vec![0.0; n],
            tau: vec![0.0; n],
            tau_f_true: (0..n).map(|k| k as f64).collect(),
        }
    }

    fn params() -> JointParams {
        JointParams {
            reduction_ratio: 100.0,
            torque_constant: 0.111,
            motor_inertia: 1e-4,
            load_inertia: 0.05,
            gravity_amplitude: 0.0,
            stiffness: 1e4,
            damping: 5.0,
            pos_min: -1e6,
            pos_max: 1e6,
            i_max: 2.0,
            current_tau: 0.0,
        }
    }

    #[test]
    fn window_count_and_layout() {
        let ds = toy_dataset(12);
        let l = 4;
        let ws = featurize(&ds, &params(), l).unwrap();
        assert_eq!(ws.len(), 12 - l + 1);
        assert_eq!(ws.features.ncols(), 2 * l);
        // Window w=2 covers samples 2..=5: delta_theta then s_dot, oldest first.
        for j in 0..l {
            let k = 2 + j;
            let expect_delta = 100.0 * ds.s[k] - ds.theta[k];
            assert_eq!(ws.features[(2, j)], expect_delta);
            assert_eq!(ws.features[(2, l + j)], ds.s_dot[k]);
        }
        assert_eq!(ws.targets[2], ds.tau_f_true[5]);
        assert_eq!(ws.velocities[2], ds.s_dot[5]);
    }

    #[test]
    fn history_of_one_uses_single_sample() {
        let ds = toy_dataset(6);
        let ws = featurize(&ds, &params(), 1).unwrap();
        assert_eq!(ws.len(), 6);
        assert_eq!(ws.features.ncols(), 2);
        assert_eq!(ws.features[(3, 0)], 100.0 * ds.s[3] - ds.theta[3]);
        assert_eq!(ws.features[(3, 1)], ds.s_dot[3]);
    }

    #[test]
    fn short_dataset_is_rejected() {
        let ds = toy_dataset(5);
        assert!(featurize(&ds, &params(), 5).is_err());
        assert!(featurize(&ds, &params(), 0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = test_config(4, 8, 8);
        cfg.validate().unwrap();
        cfg.lambda = 1.5;
        assert!(cfg.validate().is_err());
        cfg.lambda = 0.5;
        cfg.dropout_rate = 1.0;
        assert!(cfg.validate().is_err());
    }
}
