//! Allocation-free streaming inference for the control loop.
//!
//! The estimator keeps ring buffers of the last L windup and velocity
//! samples and evaluates the network with hand-rolled loops over flattened
//! weights. After construction no call allocates, so `estimate` is safe in a
//! 1 kHz tick. Before L samples have arrived the missing history is zero,
//! matching a window taken at standstill.

use super::network::PinnModel;

// ---------------------------------------------------------------------------
// OnlineEstimator
// ---------------------------------------------------------------------------

/// Streaming friction estimator around a trained [`PinnModel`].
#[derive(Clone, Debug)]
pub struct OnlineEstimator {
    l: usize,
    h1: usize,
    h2: usize,
    /// Row-major (h1 x 2L).
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row-major (h2 x h1).
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// (1 x h2) flattened.
    w3: Vec<f64>,
    b3: f64,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
    target_scale: f64,
    // Ring buffers; `head` is the slot the next push overwrites, which is
    // also where the oldest sample lives.
    delta_ring: Vec<f64>,
    vel_ring: Vec<f64>,
    head: usize,
    // Scratch, preallocated.
    xn: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

impl OnlineEstimator {
    pub fn new(model: &PinnModel) -> Self {
        let l = model.config.history_length;
        let h1 = model.config.hidden1;
        let h2 = model.config.hidden2;
        OnlineEstimator {
            l,
            h1,
            h2,
            w1: model.w1.iter().copied().collect(),
            b1: model.b1.to_vec(),
            w2: model.w2.iter().copied().collect(),
            b2: model.b2.to_vec(),
            w3: model.w3.iter().copied().collect(),
            b3: model.b3[0],
            feat_mean: model.feat_mean.to_vec(),
            feat_std: model.feat_std.to_vec(),
            target_scale: model.target_scale,
            delta_ring: vec![0.0; l],
            vel_ring: vec![0.0; l],
            head: 0,
            xn: vec![0.0; 2 * l],
            a1: vec![0.0; h1],
            a2: vec![0.0; h2],
        }
    }

    /// Records one sample of transmission windup (rad) and load velocity
    /// (rad/s).
    #[inline]
    pub fn push(&mut self, delta_theta: f64, s_dot: f64) {
        self.delta_ring[self.head] = delta_theta;
        self.vel_ring[self.head] = s_dot;
        self.head += 1;
        if self.head == self.l {
            self.head = 0;
        }
    }

    /// Friction torque estimate (N·m) from the current window. Allocation
    /// free; call after each [`OnlineEstimator::push`].
    pub fn estimate(&mut self) -> f64 {
        let l = self.l;
        // Unroll the rings into normalized feature order: deltas oldest to
        // newest, then velocities oldest to newest.
        for k in 0..l {
            let idx = if self.head + k < l {
                self.head + k
            } else {
                self.head + k - l
            };
            self.xn[k] = (self.delta_ring[idx] - self.feat_mean[k]) / self.feat_std[k];
            self.xn[l + k] = (self.vel_ring[idx] - self.feat_mean[l + k]) / self.feat_std[l + k];
        }
        let f = 2 * l;
        for i in 0..self.h1 {
            let row = &self.w1[i * f..(i + 1) * f];
            let mut acc = self.b1[i];
            for j in 0..f {
                acc += row[j] * self.xn[j];
            }
            self.a1[i] = if acc > 0.0 { acc } else { 0.0 };
        }
        for i in 0..self.h2 {
            let row = &self.w2[i * self.h1..(i + 1) * self.h1];
            let mut acc = self.b2[i];
            for j in 0..self.h1 {
                acc += row[j] * self.a1[j];
            }
            self.a2[i] = if acc > 0.0 { acc } else { 0.0 };
        }
        let mut y = self.b3;
        for k in 0..self.h2 {
            y += self.w3[k] * self.a2[k];
        }
        y * self.target_scale
    }

    /// Clears the history, as at the start of a new experiment.
    pub fn reset(&mut self) {
        self.delta_ring.fill(0.0);
        self.vel_ring.fill(0.0);
        self.head = 0;
    }
}
