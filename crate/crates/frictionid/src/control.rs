//! Two-layer torque control closed over the simulated joint.
//!
//! The high-level layer turns a position reference into a desired load
//! torque through PD-plus-feedforward acceleration and the rigid-body model.
//! The low-level layer inverts the actuation chain into a current command,
//! adding the friction estimate of the selected compensator. The loop runs
//! at 1 kHz over 20 kHz simulator substeps; the compensator and the feedback
//! terms see only noisy measurements passed through causal Kalman filters,
//! never the simulator's shadow truth.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::csvio;
use crate::error::{Error, Result};
use crate::friction::{CvParams, FrictionModel, ScvParams};
use crate::pinn::OnlineEstimator;
use crate::sigproc::{KalmanSettings, KalmanStream};
use crate::sim::{self, FrictionGroundTruth, JointParams, NoiseSettings, SimState};

// ---------------------------------------------------------------------------
// Gains and references
// ---------------------------------------------------------------------------

/// PD gains of the high-level joint regularization task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Proportional gain (1/s²).
    pub k_p: f64,
    /// Derivative gain (1/s).
    pub k_d: f64,
}

impl ControllerGains {
    pub fn new(k_p: f64, k_d: f64) -> Self {
        ControllerGains { k_p, k_d }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_p >= 0.0 && self.k_d >= 0.0) {
            return Err(Error::invalid("controller gains must be >= 0"));
        }
        Ok(())
    }
}

/// Desired joint trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Hold a fixed position.
    Hold { position: f64 },
    /// offset + amplitude·sin(2π·frequency·t).
    Sine {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

impl Reference {
    /// (s_des, ṡ_des, s̈_des) at time `t`.
    pub fn sample(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Reference::Hold { position } => (position, 0.0, 0.0),
            Reference::Sine {
                amplitude,
                frequency,
                offset,
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                let (sin, cos) = (w * t).sin_cos();
                (
                    offset + amplitude * sin,
                    amplitude * w * cos,
                    -amplitude * w * w * sin,
                )
            }
        }
    }

    /// Starting position consistent with the reference at t = 0.
    pub fn initial_position(&self) -> f64 {
        self.sample(0.0).0
    }
}

/// Rectangular external torque pulse on the load side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorquePulse {
    /// Pulse amplitude (N·m).
    pub amplitude: f64,
    /// Pulse onset (s).
    pub t_start: f64,
    /// Pulse length (s).
    pub duration: f64,
}

impl TorquePulse {
    pub fn torque_at(&self, t: f64) -> f64 {
        if t >= self.t_start && t < self.t_start + self.duration {
            self.amplitude
        } else {
            0.0
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }
}

// ---------------------------------------------------------------------------
// Control laws
// ---------------------------------------------------------------------------

/// PD-plus-feedforward acceleration:
/// s̈* = s̈_des + K_d·(ṡ_des − ṡ) + K_p·(s_des − s).
pub fn high_level_accel(
    s_des: f64,
    s_dot_des: f64,
    s_ddot_des: f64,
    s: f64,
    s_dot: f64,
    gains: &ControllerGains,
) -> f64 {
    s_ddot_des + gains.k_d * (s_dot_des - s_dot) + gains.k_p * (s_des - s)
}

/// Desired load torque from the rigid-body model:
/// τ_des = I_l·s̈* + g_amp·sin(s).
pub fn high_level_torque(s_ddot_star: f64, s: f64, params: &JointParams) -> f64 {
    params.load_inertia * s_ddot_star + params.gravity_amplitude * s.sin()
}

/// Feedforward current command with friction compensation:
/// i_ref = (τ_des + τ̂_F)/(r·k_t), clamped to ±i_max. Returns the command and
/// whether the clamp engaged.
pub fn low_level_current(tau_des: f64, tau_f_hat: f64, params: &JointParams) -> (f64, bool) {
    let raw = (tau_des + tau_f_hat) / (params.reduction_ratio * params.torque_constant);
    if raw.abs() > params.i_max {
        (params.i_max.copysign(raw), true)
    } else {
        (raw, false)
    }
}

// ---------------------------------------------------------------------------
// Compensators
// ---------------------------------------------------------------------------

/// Friction estimator in the low-level controller.
#[derive(Clone, Debug)]
pub enum Compensator {
    None,
    Cv(CvParams),
    Scv(ScvParams),
    Pinn(Box<OnlineEstimator>),
}

impl Compensator {
    pub fn from_model(model: &FrictionModel) -> Self {
        match model {
            FrictionModel::Cv(p) => Compensator::Cv(*p),
            FrictionModel::Scv(p) => Compensator::Scv(*p),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Compensator::None => "none",
            Compensator::Cv(_) => "cv",
            Compensator::Scv(_) => "scv",
            Compensator::Pinn(_) => "pinn",
        }
    }

    /// Friction torque estimate from the latest filtered windup and
    /// velocity. Static models ignore the windup; the network consumes both
    /// through its history window.
    pub fn estimate(&mut self, delta_theta: f64, s_dot: f64) -> f64 {
        match self {
            Compensator::None => 0.0,
            Compensator::Cv(p) => p.eval(s_dot),
            Compensator::Scv(p) => p.eval(s_dot),
            Compensator::Pinn(est) => {
                est.push(delta_theta, s_dot);
                est.estimate()
            }
        }
    }

    /// Clears streaming state, as at the start of an experiment.
    pub fn reset(&mut self) {
        if let Compensator::Pinn(est) = self {
            est.reset();
        }
    }
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

/// Loop timing and measurement filtering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    /// Control rate (Hz).
    pub control_rate: f64,
    /// Simulator rate (Hz); must be an integer multiple of the control rate.
    pub internal_rate: f64,
    /// Kalman tuning for the measurement filters.
    pub kalman: KalmanSettings,
}

impl Default for LoopSettings {
    fn default() -> Self {
        LoopSettings {
            control_rate: 1000.0,
            internal_rate: 20_000.0,
            kalman: KalmanSettings::default(),
        }
    }
}

impl LoopSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_rate > 0.0 && self.internal_rate > 0.0) {
            return Err(Error::invalid("loop rates must be > 0"));
        }
        let ratio = self.internal_rate / self.control_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::invalid(
                "internal_rate must be an integer multiple of control_rate",
            ));
        }
        self.kalman.validate()
    }
}

pub const TRACE_HEADER: &str = "t,s_des,s,s_dot,tau_des,tau_F_hat,i_ref,disturbance,saturated";

/// Per-tick record of one closed-loop experiment. Position and velocity are
/// the simulator truth; the commanded quantities are what the controller
/// computed from its noisy measurements.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentTrace {
    /// Control rate (Hz).
    pub rate: f64,
    pub t: Vec<f64>,
    pub s_des: Vec<f64>,
    pub s: Vec<f64>,
    pub s_dot: Vec<f64>,
    pub tau_des: Vec<f64>,
    pub tau_f_hat: Vec<f64>,
    pub i_ref: Vec<f64>,
    pub disturbance: Vec<f64>,
    pub saturated: Vec<bool>,
}

impl ExperimentTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let sat: Vec<f64> = self
            .saturated
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        csvio::write_columns(
            path,
            comments,
            TRACE_HEADER,
            &[
                &self.t,
                &self.s_des,
                &self.s,
                &self.s_dot,
                &self.tau_des,
                &self.tau_f_hat,
                &self.i_ref,
                &self.disturbance,
                &sat,
            ],
        )
    }

    pub fn read_csv(path: &Path) -> Result<ExperimentTrace> {
        let mut cols = csvio::read_columns(path, TRACE_HEADER)?;
        if cols[0].len() < 2 {
            return Err(Error::invalid("trace too short"));
        }
        let rate = 1.0 / (cols[0][1] - cols[0][0]);
        let saturated = cols[8].iter().map(|&v| v != 0.0).collect();
        Ok(ExperimentTrace {
            rate,
            saturated,
            disturbance: std::mem::take(&mut cols[7]),
            i_ref: std::mem::take(&mut cols[6]),
            tau_f_hat: std::mem::take(&mut cols[5]),
            tau_des: std::mem::take(&mut cols[4]),
            s_dot: std::mem::take(&mut cols[3]),
            s: std::mem::take(&mut cols[2]),
            s_des: std::mem::take(&mut cols[1]),
            t: std::mem::take(&mut cols[0]),
        })
    }
}

/// Runs the two-layer loop for `duration` seconds, starting at rest on the
/// reference. Measurements carry sensor noise when `noise` is enabled; two
/// causal Kalman filters supply the position, velocity, and windup the
/// controller acts on. An optional torque pulse enters on the load side.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    reference: &Reference,
    gains: &ControllerGains,
    compensator: &mut Compensator,
    params: &JointParams,
    gt: &FrictionGroundTruth,
    duration: f64,
    disturbance: Option<TorquePulse>,
    noise: &NoiseSettings,
    settings: &LoopSettings,
) -> Result<ExperimentTrace> {
    gains.validate()?;
    params.validate()?;
    gt.validate()?;
    settings.validate()?;
    if !(duration > 0.0) {
        return Err(Error::invalid("duration must be > 0"));
    }

    let tick_dt = 1.0 / settings.control_rate;
    let sim_dt = 1.0 / settings.internal_rate;
    let substeps = (settings.internal_rate / settings.control_rate).round() as usize;
    let n_ticks = (duration * settings.control_rate).round() as usize;
    let r = params.reduction_ratio;

    compensator.reset();
    let s0 = reference.initial_position();
    let mut state = SimState::at_rest(s0, params);

    let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);
    let pos_noise = Normal::new(0.0, noise.sigma_pos).map_err(|e| Error::invalid(e.to_string()))?;

    // Kalman weights scale with signal variance; the motor angle is r times
    // larger than the load angle, so its process noise scales by r².
    let mut ks = KalmanStream::new(tick_dt, &settings.kalman, s0);
    let ktheta_settings = KalmanSettings {
        q: settings.kalman.q * r * r,
        ..settings.kalman
    };
    let mut ktheta = KalmanStream::new(tick_dt, &ktheta_settings, r * s0);

    let mut trace = ExperimentTrace {
        rate: settings.control_rate,
        ..ExperimentTrace::default()
    };

    for tick in 0..n_ticks {
        let t = tick as f64 * tick_dt;

        // Measure.
        let (s_meas, theta_meas) = if noise.enabled {
            (
                state.s + pos_noise.sample(&mut rng),
                state.theta + pos_noise.sample(&mut rng),
            )
        } else {
            (state.s, state.theta)
        };
        let [s_hat, s_dot_hat, _] = ks.update(s_meas);
        let [theta_hat, _, _] = ktheta.update(theta_meas);
        let delta_theta = r * s_hat - theta_hat;

        // Decide.
        let tau_f_hat = compensator.estimate(delta_theta, s_dot_hat);
        let (s_des, s_dot_des, s_ddot_des) = reference.sample(t);
        let s_ddot_star =
            high_level_accel(s_des, s_dot_des, s_ddot_des, s_hat, s_dot_hat, gains);
        // Gravity is fed forward along the reference, so a zero-gain hold
        // commands a constant current regardless of measurement noise.
        let tau_des = high_level_torque(s_ddot_star, s_des, params);
        let (i_ref, saturated) = low_level_current(tau_des, tau_f_hat, params);

        // Record the state the command was computed against.
        let tau_ext = disturbance.map_or(0.0, |p| p.torque_at(t));
        trace.t.push(t);
        trace.s_des.push(s_des);
        trace.s.push(state.s);
        trace.s_dot.push(state.s_dot);
        trace.tau_des.push(tau_des);
        trace.tau_f_hat.push(tau_f_hat);
        trace.i_ref.push(i_ref);
        trace.disturbance.push(tau_ext);
        trace.saturated.push(saturated);

        // Act: hold the command across the tick.
        for _ in 0..substeps {
            sim::step(&mut state, i_ref, tau_ext, params, gt, sim_dt)?;
        }
    }

    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimRates;

    fn params() -> JointParams {
        JointParams {
            reduction_ratio: 100.0,
            torque_constant: 0.111,
            motor_inertia: 1e-4,
            load_inertia: 0.05,
            gravity_amplitude: 0.0,
            stiffness: 1e4,
            damping: 5.0,
            pos_min: -10.0,
            pos_max: 10.0,
            i_max: 2.0,
            current_tau: 0.0,
        }
    }

    fn ankle_cv() -> FrictionGroundTruth {
        FrictionGroundTruth::Cv(CvParams::new(10.53, 1.2, 0.24))
    }

    #[test]
    fn accel_law_matches_hand_arithmetic() {
        let g = ControllerGains::new(550.0, 4.0);
        assert_eq!(high_level_accel(0.0, 0.0, 1.5, 0.0, 0.0, &g), 1.5);
        let s_star = high_level_accel(0.01, 0.0, 0.0, 0.0, 0.0, &g);
        assert!((s_star - 5.5).abs() < 1e-12);
        let g2 = ControllerGains::new(30.0, 4.0);
        let s_star2 = high_level_accel(0.0, 0.5, 0.0, 0.0, 0.0, &g2);
        assert!((s_star2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn torque_law_matches_hand_arithmetic() {
        let mut p = params();
        assert_eq!(high_level_torque(0.0, 0.3, &p), 0.0);
        p.load_inertia = 0.5;
        assert!((high_level_torque(2.0, 0.0, &p) - 1.0).abs() < 1e-15);
        p.gravity_amplitude = 30.0;
        let tau = high_level_torque(0.0, std::f64::consts::FRAC_PI_6, &p);
        assert!((tau - 15.0).abs() < 1e-12);
    }

    #[test]
    fn current_law_is_linear_below_saturation_and_clamps_above() {
        let mut p = params();
        p.torque_constant = 0.1;
        let (i, sat) = low_level_current(2.0, 1.0, &p);
        assert!((i - 0.3).abs() < 1e-15);
        assert!(!sat);
        let (i2, _) = low_level_current(2.0, 0.0, &p);
        assert!((i2 - 0.2).abs() < 1e-15);
        // Linearity below the clamp.
        let (a, _) = low_level_current(1.0, 0.5, &p);
        let (b, _) = low_level_current(2.0, 1.0, &p);
        assert!((b - 2.0 * a).abs() < 1e-15);
        let (i3, sat3) = low_level_current(1e6, 0.0, &p);
        assert_eq!(i3, p.i_max);
        assert!(sat3);
        let (i4, sat4) = low_level_current(-1e6, 0.0, &p);
        assert_eq!(i4, -p.i_max);
        assert!(sat4);
    }

    #[test]
    fn zero_reference_from_equilibrium_stays_put() {
        let reference = Reference::Hold { position: 0.0 };
        let gains = ControllerGains::new(550.0, 4.0);
        let mut comp = Compensator::None;
        let trace = run_closed_loop(
            &reference,
            &gains,
            &mut comp,
            &params(),
            &ankle_cv(),
            1.0,
            None,
            &NoiseSettings::disabled(),
            &LoopSettings::default(),
        )
        .unwrap();
        assert_eq!(trace.len(), 1000);
        let max_dev = trace.s.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        assert!(max_dev < 1e-6, "drifted {max_dev}");
    }

    #[test]
    fn zero_gains_command_the_gravity_feedforward() {
        let mut p = params();
        p.gravity_amplitude = 30.0;
        let s0 = 0.4_f64;
        let reference = Reference::Hold { position: s0 };
        let gains = ControllerGains::new(0.0, 0.0);
        let mut comp = Compensator::None;
        let trace = run_closed_loop(
            &reference,
            &gains,
            &mut comp,
            &p,
            &FrictionGroundTruth::Cv(CvParams::new(10.53, 4.0, 0.24)),
            0.5,
            None,
            &NoiseSettings::disabled(),
            &LoopSettings::default(),
        )
        .unwrap();
        let want = 30.0 * s0.sin() / (p.reduction_ratio * p.torque_constant);
        for (k, &i) in trace.i_ref.iter().enumerate() {
            assert!((i - want).abs() < 1e-9, "tick {k}: {i} vs {want}");
        }
    }

    #[test]
    fn sine_tracking_improves_with_compensation() {
        let reference = Reference::Sine {
            amplitude: 0.2,
            frequency: 0.5,
            offset: 0.0,
        };
        let gains = ControllerGains::new(200.0, 4.0);
        // Rotor inertia small enough that the apparent joint inertia matches
        // the high-level model; see the ankle fixture.
        let mut p = params();
        p.motor_inertia = 1e-6;
        let gt = ankle_cv();
        let noise = NoiseSettings::seeded(5);
        let run = |comp: &mut Compensator| {
            let trace = run_closed_loop(
                &reference,
                &gains,
                comp,
                &p,
                &gt,
                6.0,
                None,
                &noise,
                &LoopSettings::default(),
            )
            .unwrap();
            let n = trace.len() as f64;
            (trace
                .s
                .iter()
                .zip(&trace.s_des)
                .map(|(s, d)| (d - s).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
        };
        let rmse_none = run(&mut Compensator::None);
        let rmse_cv = run(&mut Compensator::Cv(CvParams::new(10.53, 1.2, 0.24)));
        assert!(
            rmse_cv < 0.6 * rmse_none,
            "cv {rmse_cv} vs none {rmse_none}"
        );
    }

    #[test]
    fn disturbance_column_records_the_pulse_window() {
        let reference = Reference::Hold { position: 0.0 };
        let gains = ControllerGains::new(550.0, 4.0);
        let mut comp = Compensator::None;
        let pulse = TorquePulse {
            amplitude: 3.0,
            t_start: 0.2,
            duration: 0.1,
        };
        let trace = run_closed_loop(
            &reference,
            &gains,
            &mut comp,
            &params(),
            &ankle_cv(),
            0.5,
            Some(pulse),
            &NoiseSettings::disabled(),
            &LoopSettings::default(),
        )
        .unwrap();
        // One-tick guard band around the edges absorbs float boundary ties.
        for (k, &d) in trace.disturbance.iter().enumerate() {
            if (201..=299).contains(&k) {
                assert_eq!(d, 3.0, "tick {k}");
            } else if !(199..=301).contains(&k) {
                assert_eq!(d, 0.0, "tick {k}");
            }
        }
        let on = trace.disturbance.iter().filter(|&&d| d != 0.0).count();
        assert!((99..=102).contains(&on), "pulse covered {on} ticks");
    }

    #[test]
    fn traces_are_seed_deterministic() {
        let reference = Reference::Sine {
            amplitude: 0.1,
            frequency: 1.0,
            offset: 0.0,
        };
        let gains = ControllerGains::new(100.0, 4.0);
        let run = || {
            let mut comp = Compensator::Scv(ScvParams::new(2.78, 1.0005, 0.29, 6.0, 0.13, 0.6));
            run_closed_loop(
                &reference,
                &gains,
                &mut comp,
                &params(),
                &ankle_cv(),
                1.0,
                None,
                &NoiseSettings::seeded(42),
                &LoopSettings::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn trace_round_trips_through_csv() {
        let reference = Reference::Hold { position: 0.1 };
        let gains = ControllerGains::new(50.0, 4.0);
        let mut comp = Compensator::None;
        let trace = run_closed_loop(
            &reference,
            &gains,
            &mut comp,
            &params(),
            &ankle_cv(),
            0.1,
            None,
            &NoiseSettings::seeded(1),
            &LoopSettings::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write_csv(&path, &["seed=1".into()]).unwrap();
        let back = ExperimentTrace::read_csv(&path).unwrap();
        assert_eq!(trace, back);
    }

    #[test]
    fn loop_rates_must_divide() {
        let bad = LoopSettings {
            control_rate: 1000.0,
            internal_rate: 20_500.0,
            kalman: KalmanSettings::default(),
        };
        assert!(bad.validate().is_err());
        let _ = SimRates::default();
    }
}
