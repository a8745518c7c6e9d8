//! Constant-jerk Kalman filter for differentiating encoder positions.
//!
//! State is [position, velocity, acceleration] with a white-jerk process
//! model, so the filter returns smoothed estimates of all three from a
//! position measurement alone. The covariance update uses the Joseph form for
//! numerical symmetry. A streaming variant serves the online control path;
//! the batch functions drive it over a whole record. Offline use should
//! prefer [`kalman_smooth`]: the causal filter lags by a few samples, which
//! biases acceleration-dependent quantities during fast motion, while the
//! backward pass is zero-lag.

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Process / measurement noise settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanSettings {
    /// Jerk power spectral density q (rad²/s⁵).
    pub q: f64,
    /// Measurement variance r_n (rad²).
    pub r_n: f64,
}

impl Default for KalmanSettings {
    fn default() -> Self {
        // r_n matches the default encoder noise sigma of 5e-5 rad.
        KalmanSettings {
            q: 1e2,
            r_n: 2.5e-9,
        }
    }
}

impl KalmanSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::config("q", format!("must be > 0, got {}", self.q)));
        }
        if !(self.r_n.is_finite() && self.r_n > 0.0) {
            return Err(Error::config("r_n", format!("must be > 0, got {}", self.r_n)));
        }
        Ok(())
    }
}

/// Transition and process-noise matrices of the constant-jerk model.
fn model_matrices(dt: f64, settings: &KalmanSettings) -> (Matrix3<f64>, Matrix3<f64>) {
    let f = Matrix3::new(
        1.0, dt, 0.5 * dt * dt,
        0.0, 1.0, dt,
        0.0, 0.0, 1.0,
    );
    let (d2, d3, d4, d5) = (dt * dt, dt * dt * dt, dt * dt * dt * dt, dt * dt * dt * dt * dt);
    let q = settings.q
        * Matrix3::new(
            d5 / 20.0, d4 / 8.0, d3 / 6.0,
            d4 / 8.0, d3 / 3.0, d2 / 2.0,
            d3 / 6.0, d2 / 2.0, dt,
        );
    (f, q)
}

/// Streaming constant-jerk filter; one `update` per measurement.
#[derive(Clone, Debug)]
pub struct KalmanStream {
    f: Matrix3<f64>,
    q: Matrix3<f64>,
    r_n: f64,
    x: Vector3<f64>,
    p: Matrix3<f64>,
}

impl KalmanStream {
    /// Starts at position `z0` with zero velocity/acceleration and a generous
    /// initial covariance on the derivative states.
    pub fn new(dt: f64, settings: &KalmanSettings, z0: f64) -> Self {
        let (f, q) = model_matrices(dt, settings);
        KalmanStream {
            f,
            q,
            r_n: settings.r_n,
            x: Vector3::new(z0, 0.0, 0.0),
            p: Matrix3::from_diagonal(&Vector3::new(settings.r_n, 1e2, 1e4)),
        }
    }

    /// Predict + measurement update; returns [position, velocity, acceleration].
    pub fn update(&mut self, z: f64) -> [f64; 3] {
        self.x = self.f * self.x;
        self.p = self.f * self.p * self.f.transpose() + self.q;

        let h = RowVector3::new(1.0, 0.0, 0.0);
        let innov = z - self.x[0];
        let s = self.p[(0, 0)] + self.r_n;
        let k = self.p * h.transpose() / s;
        self.x += k * innov;
        // Joseph form keeps P symmetric positive definite.
        let ikh = Matrix3::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * self.r_n * k.transpose();

        [self.x[0], self.x[1], self.x[2]]
    }

    pub fn state(&self) -> [f64; 3] {
        [self.x[0], self.x[1], self.x[2]]
    }
}

/// Filters a whole position record, returning position, velocity and
/// acceleration estimates for every sample.
pub fn kalman_differentiate(
    z: &[f64],
    rate: f64,
    settings: &KalmanSettings,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    settings.validate()?;
    if z.len() < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 samples, got {}",
            z.len()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite measurement {bad}")));
    }
    let mut stream = KalmanStream::new(1.0 / rate, settings, z[0]);
    let mut p = Vec::with_capacity(z.len());
    let mut v = Vec::with_capacity(z.len());
    let mut a = Vec::with_capacity(z.len());
    for &m in z {
        let est = stream.update(m);
        p.push(est[0]);
        v.push(est[1]);
        a.push(est[2]);
    }
    Ok((p, v, a))
}

/// Forward filter plus Rauch-Tung-Striebel backward pass. Zero-lag, so the
/// offline pipeline uses it to avoid the velocity-proportional bias the
/// causal filter's delay leaves in reconstructed torques.
pub fn kalman_smooth(
    z: &[f64],
    rate: f64,
    settings: &KalmanSettings,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    settings.validate()?;
    if z.len() < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 samples, got {}",
            z.len()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite measurement {bad}")));
    }
    let dt = 1.0 / rate;
    let (f, q) = model_matrices(dt, settings);
    let h = RowVector3::new(1.0, 0.0, 0.0);
    let n = z.len();

    // Forward pass, keeping filtered and predicted moments for the smoother.
    let mut x_filt = Vec::with_capacity(n);
    let mut p_filt = Vec::with_capacity(n);
    let mut x_pred = Vec::with_capacity(n);
    let mut p_pred = Vec::with_capacity(n);
    let mut x = Vector3::new(z[0], 0.0, 0.0);
    let mut p = Matrix3::from_diagonal(&Vector3::new(settings.r_n, 1e2, 1e4));
    for &m in z {
        let xp = f * x;
        let pp = f * p * f.transpose() + q;
        x_pred.push(xp);
        p_pred.push(pp);

        let s = pp[(0, 0)] + settings.r_n;
        let k = pp * h.transpose() / s;
        x = xp + k * (m - xp[0]);
        let ikh = Matrix3::identity() - k * h;
        p = ikh * pp * ikh.transpose() + k * settings.r_n * k.transpose();
        x_filt.push(x);
        p_filt.push(p);
    }

    // Backward pass: x_s[k] = x_f[k] + C (x_s[k+1] - x_pred[k+1]).
    let mut x_smooth = x_filt.clone();
    for k in (0..n - 1).rev() {
        let pp_inv = p_pred[k + 1]
            .try_inverse()
            .ok_or_else(|| Error::invalid("singular predicted covariance"))?;
        let c = p_filt[k] * f.transpose() * pp_inv;
        x_smooth[k] = x_filt[k] + c * (x_smooth[k + 1] - x_pred[k + 1]);
    }

    let mut pos = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    let mut acc = Vec::with_capacity(n);
    for xs in &x_smooth {
        pos.push(xs[0]);
        vel.push(xs[1]);
        acc.push(xs[2]);
    }
    Ok((pos, vel, acc))
}
