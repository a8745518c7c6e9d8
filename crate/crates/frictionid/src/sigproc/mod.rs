//! Signal preprocessing: low-pass filtering, Kalman differentiation,
//! resampling, inverse dynamics and friction reconstruction.
//!
//! The offline chain turns a decimated raw log into a [`Dataset`] whose last
//! column is the reconstructed friction torque, the regression target for all
//! identification stages.

pub mod butterworth;
pub mod kalman;
mod pipeline;

pub use butterworth::Butterworth;
pub use kalman::{kalman_differentiate, kalman_smooth, KalmanSettings, KalmanStream};
pub use pipeline::{
    reconstruct_friction, run_pipeline, InverseDynamics, PipelineSettings, SingleJointDynamics,
};

use sha2::{Digest, Sha256};
use std::path::Path;

use crate::csvio;
use crate::error::{Error, Result};

pub const DATASET_HEADER: &str = "t,s,s_dot,s_ddot,theta,theta_dot,i_m,tau,tau_F_true";

/// Preprocessed record: joint and motor states with derivatives, filtered
/// current, net joint torque from inverse dynamics, and reconstructed
/// friction torque. All columns share one uniform time base.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    /// Sample rate (Hz); 500 before resampling, 1000 after.
    pub rate: f64,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub s_dot: Vec<f64>,
    pub s_ddot: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub i_m: Vec<f64>,
    pub tau: Vec<f64>,
    pub tau_f_true: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn columns(&self) -> [&Vec<f64>; 9] {
        [
            &self.t,
            &self.s,
            &self.s_dot,
            &self.s_ddot,
            &self.theta,
            &self.theta_dot,
            &self.i_m,
            &self.tau,
            &self.tau_f_true,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate != 500.0 && self.rate != 1000.0 {
            return Err(Error::invalid(format!("rate must be 500 or 1000 Hz, got {}", self.rate)));
        }
        let n = self.len();
        if self.columns().iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns have differing lengths"));
        }
        let dt = 1.0 / self.rate;
        for k in 1..n {
            if (self.t[k] - self.t[k - 1] - dt).abs() > 1e-9 {
                return Err(Error::invalid(format!("non-uniform timestamps at row {k}")));
            }
        }
        Ok(())
    }

    /// Doubles the rate from 500 to 1000 Hz by linear interpolation at
    /// midpoints; endpoints are preserved and the length becomes 2n−1.
    pub fn resample_to_1000(&self) -> Result<Dataset> {
        if self.rate != 500.0 {
            return Err(Error::invalid(format!(
                "resampling expects a 500 Hz dataset, got {} Hz",
                self.rate
            )));
        }
        if self.len() < 2 {
            return Err(Error::invalid("need at least 2 samples to resample"));
        }
        Ok(Dataset {
            rate: 1000.0,
            t: resample_column(&self.t),
            s: resample_column(&self.s),
            s_dot: resample_column(&self.s_dot),
            s_ddot: resample_column(&self.s_ddot),
            theta: resample_column(&self.theta),
            theta_dot: resample_column(&self.theta_dot),
            i_m: resample_column(&self.i_m),
            tau: resample_column(&self.tau),
            tau_f_true: resample_column(&self.tau_f_true),
        })
    }

    /// SHA-256 over the raw bit patterns of every column, used to tie fit
    /// results to the exact data they were computed from.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.rate.to_le_bytes());
        for col in self.columns() {
            for v in col {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let cols = self.columns();
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        csvio::write_columns(path, comments, DATASET_HEADER, &refs)
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut cols = csvio::read_columns(path, DATASET_HEADER)?;
        let tau_f_true = cols.pop().unwrap();
        let tau = cols.pop().unwrap();
        let i_m = cols.pop().unwrap();
        let theta_dot = cols.pop().unwrap();
        let theta = cols.pop().unwrap();
        let s_ddot = cols.pop().unwrap();
        let s_dot = cols.pop().unwrap();
        let s = cols.pop().unwrap();
        let t = cols.pop().unwrap();
        if t.len() < 2 {
            return Err(Error::invalid("dataset needs at least 2 rows"));
        }
        let rate = ((t[1] - t[0]).recip()).round();
        let ds = Dataset {
            rate,
            t,
            s,
            s_dot,
            s_ddot,
            theta,
            theta_dot,
            i_m,
            tau,
            tau_f_true,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Pools (velocity, friction torque) pairs from several records for static
/// fitting, dropping samples slower than `v_min`: at standstill the
/// reconstructed label is the reaction torque, which a velocity-only model
/// cannot represent.
pub fn pool_sliding_samples(datasets: &[Dataset], v_min: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v_all = Vec::new();
    let mut tau_all = Vec::new();
    for ds in datasets {
        for (&v, &tau) in ds.s_dot.iter().zip(&ds.tau_f_true) {
            if v.abs() >= v_min {
                v_all.push(v);
                tau_all.push(tau);
            }
        }
    }
    (v_all, tau_all)
}

/// Midpoint upsampling of one column: out[2k] = in[k], out[2k+1] = midpoint.
pub fn resample_column(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(2 * n - 1);
    for k in 0..n - 1 {
        out.push(x[k]);
        out.push(0.5 * (x[k] + x[k + 1]));
    }
    out.push(x[n - 1]);
    out
}
