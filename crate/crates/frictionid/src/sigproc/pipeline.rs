//! Preprocessing pipeline: raw log in, friction-labelled dataset out.
//!
//! Fixed stage order: Butterworth on the measured current, Kalman
//! differentiation of both position channels, midpoint resampling from 500 to
//! 1000 Hz, inverse dynamics, friction reconstruction. The motor channel uses
//! a jerk PSD scaled by r² because the motor moves r times faster than the
//! joint.

use serde::{Deserialize, Serialize};

use super::butterworth::Butterworth;
use super::kalman::{kalman_smooth, KalmanSettings};
use super::Dataset;
use crate::error::Result;
use crate::sim::{JointParams, RawLog};

/// Settings for the offline preprocessing chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    /// Current low-pass cutoff (Hz).
    pub butter_cutoff: f64,
    /// Current low-pass order (2 or 4).
    pub butter_order: usize,
    pub kalman: KalmanSettings,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            butter_cutoff: 20.0,
            butter_order: 2,
            kalman: KalmanSettings::default(),
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.butter_cutoff.is_finite() && self.butter_cutoff > 0.0) {
            return Err(crate::error::Error::config("butter_cutoff", "must be > 0"));
        }
        if self.butter_order != 2 && self.butter_order != 4 {
            return Err(crate::error::Error::config("butter_order", "must be 2 or 4"));
        }
        self.kalman.validate().map_err(|e| e.under("kalman"))
    }
}

/// Net joint torque required by the rigid-body model; pluggable so a
/// multibody provider can replace the single-joint stand-in.
pub trait InverseDynamics {
    /// Torque (N·m) the drivetrain must deliver at the joint for the given
    /// state and acceleration.
    fn torque(&self, s: f64, s_dot: f64, s_ddot: f64) -> f64;
}

/// One rigid link under gravity: tau = I_l·s_ddot + g_amp·sin(s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleJointDynamics {
    pub load_inertia: f64,
    pub gravity_amplitude: f64,
}

impl SingleJointDynamics {
    pub fn from_params(params: &JointParams) -> Self {
        SingleJointDynamics {
            load_inertia: params.load_inertia,
            gravity_amplitude: params.gravity_amplitude,
        }
    }
}

impl InverseDynamics for SingleJointDynamics {
    fn torque(&self, s: f64, _s_dot: f64, s_ddot: f64) -> f64 {
        self.load_inertia * s_ddot + self.gravity_amplitude * s.sin()
    }
}

/// Fills `tau_f_true` from the drive-side torque balance:
/// tau_F,true = r·k_t·i_m − tau.
pub fn reconstruct_friction(dataset: &mut Dataset, params: &JointParams) {
    let drive_gain = params.reduction_ratio * params.torque_constant;
    dataset.tau_f_true = dataset
        .i_m
        .iter()
        .zip(&dataset.tau)
        .map(|(i, tau)| drive_gain * i - tau)
        .collect();
}

/// Runs the full chain on one raw log.
pub fn run_pipeline(
    raw: &RawLog,
    params: &JointParams,
    dynamics: &dyn InverseDynamics,
    settings: &PipelineSettings,
) -> Result<Dataset> {
    let filt = Butterworth::lowpass(raw.rate, settings.butter_cutoff, settings.butter_order)?;
    let i_filt = filt.filtfilt(&raw.i_m)?;

    let (s_hat, s_dot, s_ddot) = kalman_smooth(&raw.s, raw.rate, &settings.kalman)?;
    let theta_kalman = KalmanSettings {
        q: settings.kalman.q * params.reduction_ratio * params.reduction_ratio,
        r_n: settings.kalman.r_n,
    };
    let (theta_hat, theta_dot, _) = kalman_smooth(&raw.theta, raw.rate, &theta_kalman)?;

    let half_rate = Dataset {
        rate: raw.rate,
        t: raw.t.clone(),
        s: s_hat,
        s_dot,
        s_ddot,
        theta: theta_hat,
        theta_dot,
        i_m: i_filt,
        tau: vec![0.0; raw.len()],
        tau_f_true: vec![0.0; raw.len()],
    };
    let mut full = half_rate.resample_to_1000()?;

    full.tau = (0..full.len())
        .map(|k| dynamics.torque(full.s[k], full.s_dot[k], full.s_ddot[k]))
        .collect();
    reconstruct_friction(&mut full, params);
    Ok(full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitation::sine_grid;
    use crate::friction::CvParams;
    use crate::sim::{run_trajectory, FrictionGroundTruth, NoiseSettings, SimRates};

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
    fn inverse_dynamics_examples() {
        let dyn0 = SingleJointDynamics {
            load_inertia: 0.05,
            gravity_amplitude: 0.0,
        };
        assert_eq!(dyn0.torque(1.0, 0.0, 0.0), 0.0);
        assert!((dyn0.torque(0.0, 0.0, 2.0) - 0.1).abs() < 1e-15);
        let dyn_g = SingleJointDynamics {
            load_inertia: 0.05,
            gravity_amplitude: 30.0,
        };
        assert!((dyn_g.torque(std::f64::consts::FRAC_PI_2, 0.0, 0.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_arithmetic() {
        let mut ds = Dataset {
            rate: 1000.0,
            t: vec![0.0, 1e-3],
            i_m: vec![0.5, 0.0],
            tau: vec![3.0, 0.0],
            s: vec![0.0; 2],
            s_dot: vec![0.0; 2],
            s_ddot: vec![0.0; 2],
            theta: vec![0.0; 2],
            theta_dot: vec![0.0; 2],
            tau_f_true: vec![0.0; 2],
        };
        let mut p = params();
        p.torque_constant = 0.1;
        reconstruct_friction(&mut ds, &p);
        assert!((ds.tau_f_true[0] - 2.0).abs() < 1e-12);
        assert_eq!(ds.tau_f_true[1], 0.0);
    }

    #[test]
    fn constant_log_gives_zero_derivatives_at_1000_hz() {
        let n = 500;
        let raw = RawLog {
            rate: 500.0,
            t: (0..n).map(|k| k as f64 / 500.0).collect(),
            s: vec![0.4; n],
            theta: vec![40.0; n],
            i_m: vec![0.0; n],
            s_shadow: vec![0.4; n],
            theta_shadow: vec![40.0; n],
            friction_shadow: vec![0.0; n],
            limit_hit: false,
        };
        let p = params();
        let ds = run_pipeline(
            &raw,
            &p,
            &SingleJointDynamics::from_params(&p),
            &PipelineSettings::default(),
        )
        .unwrap();
        assert_eq!(ds.rate, 1000.0);
        assert_eq!(ds.len(), 2 * n - 1);
        ds.validate().unwrap();
        let k0 = 500; // past the Kalman transient
        for k in k0..ds.len() {
            assert!(ds.s_dot[k].abs() < 1e-6);
            assert!(ds.s_ddot[k].abs() < 1e-4);
            assert!(ds.tau[k].abs() < 1e-5);
            assert!(ds.tau_f_true[k].abs() < 1e-5);
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let p = params();
        let gt = FrictionGroundTruth::Cv(CvParams::new(10.53, 1.2, 0.24));
        let spec = sine_grid(&[0.6], &[0.5], 2.0)[0];
        let raw = run_trajectory(
            &p,
            &gt,
            &spec.sample(2000.0),
            0.0,
            SimRates::default(),
            &NoiseSettings::seeded(3),
        )
        .unwrap();
        let dynamics = SingleJointDynamics::from_params(&p);
        let a = run_pipeline(&raw, &p, &dynamics, &PipelineSettings::default()).unwrap();
        let b = run_pipeline(&raw, &p, &dynamics, &PipelineSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stiff_noiseless_run_recovers_injected_friction() {
        // Slow drive on a nearly rigid transmission: the reconstruction error
        // r²·J_m·s_ddot stays well below the friction itself. The shadow
        // friction channel is the oracle.
        let mut p = params();
        p.stiffness = 1e6;
        p.damping = 50.0;
        let gt = FrictionGroundTruth::Cv(CvParams::new(10.0, 1.0, 3.0));
        let spec = sine_grid(&[0.3], &[0.01], 100.0)[0];
        let raw = run_trajectory(
            &p,
            &gt,
            &spec.sample(2000.0),
            0.0,
            SimRates::default(),
            &NoiseSettings::disabled(),
        )
        .unwrap();
        let ds = run_pipeline(
            &raw,
            &p,
            &SingleJointDynamics::from_params(&p),
            &PipelineSettings::default(),
        )
        .unwrap();

        // The shadow channel lives at 500 Hz; compare on the shared samples,
        // skipping the first second of filter transients.
        let skip = 1000;
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        let mut count = 0;
        for k in (skip..ds.len()).step_by(2) {
            let shadow = raw.friction_shadow[k / 2];
            let e = ds.tau_f_true[k] - shadow;
            err2 += e * e;
            ref2 += shadow * shadow;
            count += 1;
        }
        let rmse = (err2 / count as f64).sqrt();
        let rms = (ref2 / count as f64).sqrt();
        assert!(rms > 0.5, "fixture too weak: rms {rms}");
        assert!(rmse < 0.05 * rms, "rmse {rmse} vs 5% of {rms}");
    }

    #[test]
    fn short_logs_are_rejected() {
        let n = 5;
        let raw = RawLog {
            rate: 500.0,
            t: (0..n).map(|k| k as f64 / 500.0).collect(),
            s: vec![0.0; n],
            theta: vec![0.0; n],
            i_m: vec![0.0; n],
            s_shadow: vec![0.0; n],
            theta_shadow: vec![0.0; n],
            friction_shadow: vec![0.0; n],
            limit_hit: false,
        };
        let p = params();
        assert!(run_pipeline(
            &raw,
            &p,
            &SingleJointDynamics::from_params(&p),
            &PipelineSettings::default()
        )
        .is_err());
    }
}
