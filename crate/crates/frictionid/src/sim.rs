//! Two-mass joint simulator: motor and load coupled by a compliant
//! harmonic-drive transmission.
//!
//! State and conventions:
//! - `theta` motor position (rad, motor side), `s` joint position (rad)
//! - transmission torque `tau_t = K_hd·(theta/r − s) + D_hd·(theta_dot/r − s_dot)`
//!   acts on the load; the motor feels `tau_t / r`
//! - motor:  `J_m·theta_ddot = k_t·i_m − tau_t/r`
//! - load:   `I_l·s_ddot    = tau_t − g_amp·sin(s) − tau_F + tau_ext`
//!
//! Friction (including Karnopp stiction) acts on the joint side of the
//! compliance and is evaluated at the joint velocity. This is what makes
//! stiction observable from the outside: when the joint sticks, commanded
//! current winds the transmission up, and the windup `r·s − theta` tracks the
//! torque the friction interface is absorbing. The rigid-limit dynamics
//! `(I_l + r²·J_m)·s_ddot = r·k_t·i_m − tau_F − g_amp·sin(s)` are unchanged by
//! this placement.
//!
//! Integration is semi-implicit Euler at `internal_rate` (default 20 kHz);
//! logs are decimated to `log_rate` (default 500 Hz). Measurement noise is
//! additive Gaussian on the logged channels only; every log also carries
//! noiseless shadow channels plus the injected friction torque so tests can
//! use the simulator as an oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::csvio;
use crate::error::{Error, Result};
use crate::friction::{CvParams, ScvParams};

/// Karnopp stiction band on the joint velocity (rad/s).
pub const STICTION_BAND: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Physical parameters of one actuated joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    /// Gear reduction ratio r (motor rad per joint rad).
    pub reduction_ratio: f64,
    /// Motor torque constant k_t (N·m/A).
    pub torque_constant: f64,
    /// Motor-side rotor inertia J_m (kg·m²).
    pub motor_inertia: f64,
    /// Joint-side load inertia I_l (kg·m²).
    pub load_inertia: f64,
    /// Gravity torque amplitude g_amp (N·m): load torque is g_amp·sin(s).
    pub gravity_amplitude: f64,
    /// Transmission stiffness K_hd (N·m/rad of joint-side deflection).
    pub stiffness: f64,
    /// Transmission damping D_hd (N·m·s/rad).
    pub damping: f64,
    /// Joint position limits (rad), enforced as inelastic stops.
    pub pos_min: f64,
    pub pos_max: f64,
    /// Drive current limit i_max (A); used by the controller stage.
    pub i_max: f64,
    /// First-order current-stage time constant (s); 0 means ideal.
    pub current_tau: f64,
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("reduction_ratio", self.reduction_ratio),
            ("torque_constant", self.torque_constant),
            ("motor_inertia", self.motor_inertia),
            ("load_inertia", self.load_inertia),
            ("stiffness", self.stiffness),
            ("i_max", self.i_max),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("gravity_amplitude", self.gravity_amplitude),
            ("damping", self.damping),
            ("current_tau", self.current_tau),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.pos_min < self.pos_max) {
            return Err(Error::config("pos_min", "must be < pos_max"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground-truth friction
// ---------------------------------------------------------------------------

/// The friction law injected into the plant. `ScvPlusHysteresis` augments the
/// static SCV curve with a first-order lag (time constant `lag_time`) and a
/// smooth acceleration-sign asymmetry, producing velocity-history-dependent
/// loops no static model can represent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrictionGroundTruth {
    Cv(CvParams),
    Scv(ScvParams),
    ScvPlusHysteresis {
        scv: ScvParams,
        /// Lag time constant h_tc (s).
        lag_time: f64,
        /// Asymmetry gain h_g (N·m).
        rate_gain: f64,
        /// Acceleration scale of the tanh sign smoothing (rad/s²).
        rate_scale: f64,
    },
}

/// Evolving state of the friction law (lag filter and previous velocity).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrictionState {
    pub lag: f64,
    pub prev_vel: f64,
}

impl FrictionGroundTruth {
    /// Static friction level holding the joint at zero velocity (N·m).
    pub fn breakaway(&self) -> f64 {
        match self {
            FrictionGroundTruth::Cv(p) => p.breakaway(),
            FrictionGroundTruth::Scv(p) => p.breakaway(),
            FrictionGroundTruth::ScvPlusHysteresis { scv, .. } => scv.breakaway(),
        }
    }

    /// Sliding friction torque (N·m) at joint velocity `v`, advancing the
    /// internal state by `dt`.
    pub fn torque(&self, v: f64, state: &mut FrictionState, dt: f64) -> f64 {
        let tau = match *self {
            FrictionGroundTruth::Cv(p) => p.eval(v),
            FrictionGroundTruth::Scv(p) => p.eval(v),
            FrictionGroundTruth::ScvPlusHysteresis {
                scv,
                lag_time,
                rate_gain,
                rate_scale,
            } => {
                let target = scv.eval(v);
                state.lag += dt * (target - state.lag) / lag_time;
                let rate = (v - state.prev_vel) / dt;
                state.lag + rate_gain * (rate / rate_scale).tanh()
            }
        };
        state.prev_vel = v;
        tau
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FrictionGroundTruth::Cv(p) => p.validate(),
            FrictionGroundTruth::Scv(p) => p.validate(),
            FrictionGroundTruth::ScvPlusHysteresis {
                scv,
                lag_time,
                rate_gain,
                rate_scale,
            } => {
                scv.validate().map_err(|e| e.under("scv"))?;
                for (name, v) in [
                    ("lag_time", *lag_time),
                    ("rate_scale", *rate_scale),
                ] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::config(name, format!("must be > 0, got {v}")));
                    }
                }
                if !rate_gain.is_finite() || *rate_gain < 0.0 {
                    return Err(Error::config("rate_gain", "must be >= 0"));
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// State and stepping
// ---------------------------------------------------------------------------

/// Full simulator state. `friction_torque` is the torque the friction
/// interface actually exerted during the last step: the model value while
/// sliding, the balancing reaction while stuck.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub s: f64,
    pub s_dot: f64,
    pub i_m: f64,
    pub friction: FrictionState,
    pub friction_torque: f64,
    pub limit_contact: bool,
}

impl SimState {
    /// Rest state with the transmission unwound at joint position `s0`.
    pub fn at_rest(s0: f64, params: &JointParams) -> Self {
        SimState {
            t: 0.0,
            theta: params.reduction_ratio * s0,
            theta_dot: 0.0,
            s: s0,
            s_dot: 0.0,
            i_m: 0.0,
            friction: FrictionState::default(),
            friction_torque: 0.0,
            limit_contact: false,
        }
    }
}

/// Advances the state by one semi-implicit Euler step of length `dt`.
///
/// `i_cmd` is the commanded current (A); `tau_ext` is an external joint-side
/// torque (N·m), used for disturbance experiments. Returns an error if any
/// state component becomes non-finite.
pub fn step(
    state: &mut SimState,
    i_cmd: f64,
    tau_ext: f64,
    params: &JointParams,
    gt: &FrictionGroundTruth,
    dt: f64,
) -> Result<()> {
    let r = params.reduction_ratio;

    // Current stage: first-order lag, or ideal when the time constant is 0.
    if params.current_tau > 0.0 {
        state.i_m += dt / params.current_tau * (i_cmd - state.i_m);
    } else {
        state.i_m = i_cmd;
    }

    let deflection = state.theta / r - state.s;
    let deflection_rate = state.theta_dot / r - state.s_dot;
    let tau_t = params.stiffness * deflection + params.damping * deflection_rate;

    let theta_ddot = (params.torque_constant * state.i_m - tau_t / r) / params.motor_inertia;

    let tau_net = tau_t - params.gravity_amplitude * state.s.sin() + tau_ext;

    // Karnopp stiction: inside the velocity band the joint holds (the
    // friction interface supplies the exact reaction) unless the net torque
    // exceeds the zero-velocity breakaway level of the ground-truth law.
    let stuck = state.s_dot.abs() < STICTION_BAND && tau_net.abs() <= gt.breakaway();
    let s_ddot;
    if stuck {
        state.friction_torque = tau_net;
        // The lag state still relaxes while holding.
        gt.torque(0.0, &mut state.friction, dt);
        state.s_dot = 0.0;
        s_ddot = 0.0;
    } else {
        let tau_f = if state.s_dot.abs() < STICTION_BAND {
            // Breaking away: kinetic friction starts at the static level in
            // the direction of impending motion.
            gt.torque(0.0, &mut state.friction, dt);
            gt.breakaway() * tau_net.signum()
        } else {
            gt.torque(state.s_dot, &mut state.friction, dt)
        };
        state.friction_torque = tau_f;
        s_ddot = (tau_net - tau_f) / params.load_inertia;
    }

    state.theta_dot += dt * theta_ddot;
    state.theta += dt * state.theta_dot;
    state.s_dot += dt * s_ddot;
    state.s += dt * state.s_dot;

    // Inelastic position stops.
    state.limit_contact = false;
    if state.s <= params.pos_min {
        state.s = params.pos_min;
        state.s_dot = 0.0;
        state.limit_contact = true;
    } else if state.s >= params.pos_max {
        state.s = params.pos_max;
        state.s_dot = 0.0;
        state.limit_contact = true;
    }

    state.t += dt;

    for (field, v) in [
        ("theta", state.theta),
        ("theta_dot", state.theta_dot),
        ("s", state.s),
        ("s_dot", state.s_dot),
        ("i_m", state.i_m),
        ("friction_torque", state.friction_torque),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite { field });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Open-loop runs and logging
// ---------------------------------------------------------------------------

/// Measurement noise applied to the logged channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub enabled: bool,
    /// Encoder noise on both position channels (rad).
    pub sigma_pos: f64,
    /// Current measurement noise (A).
    pub sigma_current: f64,
    pub seed: u64,
}

impl NoiseSettings {
    pub fn disabled() -> Self {
        NoiseSettings {
            enabled: false,
            sigma_pos: 5e-5,
            sigma_current: 5e-3,
            seed: 0,
        }
    }

    pub fn seeded(seed: u64) -> Self {
        NoiseSettings {
            enabled: true,
            sigma_pos: 5e-5,
            sigma_current: 5e-3,
            seed,
        }
    }
}

/// Simulation rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRates {
    /// Integration rate (Hz).
    pub internal: f64,
    /// Log decimation rate (Hz); must divide `internal`.
    pub log: f64,
}

impl Default for SimRates {
    fn default() -> Self {
        SimRates {
            internal: 20_000.0,
            log: 500.0,
        }
    }
}

impl SimRates {
    pub fn validate(&self) -> Result<()> {
        if !(self.internal.is_finite() && self.internal > 0.0 && self.log > 0.0) {
            return Err(Error::invalid("rates must be > 0"));
        }
        let decim = self.internal / self.log;
        if (decim - decim.round()).abs() > 1e-9 || decim < 1.0 {
            return Err(Error::invalid(format!(
                "log rate {} must divide internal rate {}",
                self.log, self.internal
            )));
        }
        Ok(())
    }
}

pub const RAW_LOG_HEADER: &str = "t,s,theta,i_m,s_shadow,theta_shadow";

/// Decimated log of one open-loop run. `s`, `theta`, `i_m` carry measurement
/// noise when enabled; the shadow channels and `friction_shadow` (injected
/// friction torque, joint side) are noiseless oracle channels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawLog {
    pub rate: f64,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub theta: Vec<f64>,
    pub i_m: Vec<f64>,
    pub s_shadow: Vec<f64>,
    pub theta_shadow: Vec<f64>,
    pub friction_shadow: Vec<f64>,
    /// True when the run ended early on a position stop.
    pub limit_hit: bool,
}

impl RawLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Writes the measured + shadow channels (`friction_shadow` is a test
    /// oracle and stays in memory).
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        csvio::write_columns(
            path,
            comments,
            RAW_LOG_HEADER,
            &[
                &self.t,
                &self.s,
                &self.theta,
                &self.i_m,
                &self.s_shadow,
                &self.theta_shadow,
            ],
        )
    }

    pub fn read_csv(path: &Path, rate: f64) -> Result<Self> {
        let mut cols = csvio::read_columns(path, RAW_LOG_HEADER)?;
        let theta_shadow = cols.pop().unwrap();
        let s_shadow = cols.pop().unwrap();
        let i_m = cols.pop().unwrap();
        let theta = cols.pop().unwrap();
        let s = cols.pop().unwrap();
        let t = cols.pop().unwrap();
        Ok(RawLog {
            rate,
            t,
            s,
            theta,
            i_m,
            s_shadow,
            theta_shadow,
            friction_shadow: Vec::new(),
            limit_hit: false,
        })
    }
}

/// Runs the plant open loop under a commanded current sequence `(t, A)`
/// (linearly interpolated between samples, last value held) starting from
/// rest at `s0`. The log is truncated at the first sample on a position stop.
pub fn run_trajectory(
    params: &JointParams,
    gt: &FrictionGroundTruth,
    currents: &[(f64, f64)],
    s0: f64,
    rates: SimRates,
    noise: &NoiseSettings,
) -> Result<RawLog> {
    params.validate()?;
    gt.validate()?;
    if currents.is_empty() {
        return Err(Error::invalid("empty current sequence"));
    }
    let decim = rates.internal / rates.log;
    if decim.fract() != 0.0 || decim < 1.0 {
        return Err(Error::invalid("log rate must divide internal rate"));
    }
    let decim = decim as usize;
    let dt = 1.0 / rates.internal;
    let duration = currents.last().unwrap().0;
    let n_log = (duration * rates.log).floor() as usize + 1;

    let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);
    let pos_noise = Normal::new(0.0, noise.sigma_pos).map_err(|e| Error::invalid(e.to_string()))?;
    let cur_noise =
        Normal::new(0.0, noise.sigma_current).map_err(|e| Error::invalid(e.to_string()))?;

    let mut state = SimState::at_rest(s0, params);
    let mut log = RawLog {
        rate: rates.log,
        ..RawLog::default()
    };
    let mut cur_idx = 0usize;

    for k in 0..n_log {
        // Log the current state (possibly with measurement noise).
        let (mut s_m, mut th_m, mut i_meas) = (state.s, state.theta, state.i_m);
        if noise.enabled {
            s_m += pos_noise.sample(&mut rng);
            th_m += pos_noise.sample(&mut rng);
            i_meas += cur_noise.sample(&mut rng);
        }
        log.t.push(k as f64 / rates.log);
        log.s.push(s_m);
        log.theta.push(th_m);
        log.i_m.push(i_meas);
        log.s_shadow.push(state.s);
        log.theta_shadow.push(state.theta);
        log.friction_shadow.push(state.friction_torque);

        if state.limit_contact {
            log.limit_hit = true;
            break;
        }
        if k + 1 == n_log {
            break;
        }

        for _ in 0..decim {
            let i_cmd = interp_current(currents, &mut cur_idx, state.t);
            step(&mut state, i_cmd, 0.0, params, gt, dt)?;
        }
    }
    Ok(log)
}

/// Piecewise-linear interpolation with a walking index; holds the last value
/// past the end.
fn interp_current(currents: &[(f64, f64)], idx: &mut usize, t: f64) -> f64 {
    while *idx + 1 < currents.len() && currents[*idx + 1].0 <= t {
        *idx += 1;
    }
    if *idx + 1 >= currents.len() {
        return currents[currents.len() - 1].1;
    }
    let (t0, i0) = currents[*idx];
    let (t1, i1) = currents[*idx + 1];
    if t <= t0 {
        i0
    } else {
        i0 + (i1 - i0) * (t - t0) / (t1 - t0)
    }
}
