//! Experiment configuration: one JSON document drives every stage.
//!
//! A config names the joint fixture, the simulated ground truth, the
//! excitation batch, and the per-stage settings (pipeline, fitting, network,
//! sweep, evaluation). Two built-in fixtures cover a lightly loaded ankle
//! joint and a gravity-loaded knee joint. Every artifact a stage writes
//! embeds the config hash and seed, so reruns are checkable byte for byte.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::control::{LoopSettings, Reference, TorquePulse};
use crate::error::{Error, Result};
use crate::eval::{joint_axis_moment, JointPose, Wrench};
use crate::excitation::{sine_grid, step_family, with_initial_configurations, TrajectorySpec};
use crate::fitting::AdamSettings;
use crate::friction::ScvParams;
use crate::pinn::{PinnConfig, SearchSpace};
use crate::sigproc::PipelineSettings;
use crate::sim::{FrictionGroundTruth, JointParams, NoiseSettings, SimRates};

// ---------------------------------------------------------------------------
// Sections
// ---------------------------------------------------------------------------

/// Excitation batch description; expands to a list of open-loop runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSettings {
    /// Sine grid amplitudes (A), increasing.
    pub amplitudes: Vec<f64>,
    /// Sine grid frequencies (Hz), increasing.
    pub frequencies: Vec<f64>,
    /// Sine dwell per grid cell (s).
    pub dwell: f64,
    /// Step levels (A); empty disables the step family.
    pub step_levels: Vec<f64>,
    /// Step hold time (s).
    pub step_hold: f64,
    /// Initial joint positions the batch is repeated from (rad).
    pub initial_positions: Vec<f64>,
}

impl ExcitationSettings {
    /// Expands the batch, amplitude-major sine grid first, then steps, the
    /// whole list repeated per initial position.
    pub fn expand(&self) -> Result<Vec<TrajectorySpec>> {
        let mut specs = sine_grid(&self.amplitudes, &self.frequencies, self.dwell);
        specs.extend(step_family(&self.step_levels, self.step_hold));
        let specs = with_initial_configurations(&specs, &self.initial_positions);
        for s in &specs {
            s.validate()?;
        }
        if specs.is_empty() {
            return Err(Error::invalid("batch is empty"));
        }
        Ok(specs)
    }
}

/// Static-model fitting stage settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub adam: AdamSettings,
    /// Samples slower than this (rad/s) are excluded from static fits; at
    /// standstill the friction label is the reaction torque.
    pub min_velocity: f64,
}

/// Hyperparameter sweep stage settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub space: SearchSpace,
    pub n_trials: usize,
}

/// External load used in the disturbance experiment, stated as a Cartesian
/// wrench at a sensor pose; the applied joint moment follows from the
/// adjoint transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSettings {
    /// Force measured at the sensor (N).
    pub force: Vector3<f64>,
    /// Moment measured at the sensor (N·m).
    pub moment: Vector3<f64>,
    /// Sensor pose relative to the joint frame.
    pub sensor_rotation: Matrix3<f64>,
    pub sensor_translation: Vector3<f64>,
    /// Pulse onset (s) and length (s).
    pub t_start: f64,
    pub duration: f64,
}

impl DisturbanceSettings {
    pub fn pose(&self) -> JointPose {
        JointPose {
            rotation: self.sensor_rotation,
            translation: self.sensor_translation,
        }
    }

    /// Moment the pulse applies about the joint axis (N·m).
    pub fn joint_moment(&self) -> Result<f64> {
        let w = Wrench::new(self.force, self.moment, "sensor");
        joint_axis_moment(&w, &self.pose())
    }

    /// The equivalent load-side torque pulse.
    pub fn pulse(&self) -> Result<TorquePulse> {
        Ok(TorquePulse {
            amplitude: self.joint_moment()?,
            t_start: self.t_start,
            duration: self.duration,
        })
    }
}

/// Closed-loop evaluation protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Tracking reference for the gain search.
    pub reference: Reference,
    /// Tracking run length (s).
    pub duration: f64,
    /// RMSE window start (s); excludes the initial transient.
    pub rmse_start: f64,
    /// Fixed derivative gain.
    pub k_d: f64,
    /// "Accurate tracking" RMSE threshold (rad).
    pub rmse_threshold: f64,
    /// Gain grid bounds and resolution.
    pub kp_lo: f64,
    pub kp_hi: f64,
    pub kp_per_decade: usize,
    /// Hold experiment length for the disturbance protocol (s).
    pub hold_duration: f64,
    /// Recovery RMSE window after the pulse (s).
    pub recovery_window: f64,
    pub disturbance: DisturbanceSettings,
    /// Loop timing and measurement filter tuning.
    pub loop_settings: LoopSettings,
}

// ---------------------------------------------------------------------------
// The experiment config
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Fixture name the config was derived from.
    pub fixture: String,
    /// Master seed; stages derive their own streams from it.
    pub seed: u64,
    pub joint: JointParams,
    pub ground_truth: FrictionGroundTruth,
    pub rates: SimRates,
    pub noise: NoiseSettings,
    pub excitation: ExcitationSettings,
    pub pipeline: PipelineSettings,
    pub fit: FitSettings,
    pub pinn: PinnConfig,
    pub sweep: SweepSettings,
    pub eval: EvalSettings,
}

fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.under(path))
}

impl ExperimentConfig {
    /// Validates every section, reporting the dotted field path of the first
    /// offender.
    pub fn validate(&self) -> Result<()> {
        if self.fixture.is_empty() {
            return Err(Error::config("fixture", "must be nonempty"));
        }
        at("joint", self.joint.validate())?;
        at("ground_truth", self.ground_truth.validate())?;
        at("rates", self.rates.validate())?;
        at("excitation", self.excitation.expand().map(|_| ()))?;
        for (i, &a) in self.excitation.amplitudes.iter().enumerate() {
            if a.abs() > self.joint.i_max {
                return Err(Error::config(
                    format!("excitation.amplitudes[{i}]"),
                    "exceeds joint.i_max",
                ));
            }
        }
        for (i, &l) in self.excitation.step_levels.iter().enumerate() {
            if l.abs() > self.joint.i_max {
                return Err(Error::config(
                    format!("excitation.step_levels[{i}]"),
                    "exceeds joint.i_max",
                ));
            }
        }
        for (i, &p) in self.excitation.initial_positions.iter().enumerate() {
            if !(p >= self.joint.pos_min && p <= self.joint.pos_max) {
                return Err(Error::config(
                    format!("excitation.initial_positions[{i}]"),
                    "outside the joint position limits",
                ));
            }
        }
        at("pipeline", self.pipeline.validate())?;
        at("fit.adam", self.fit.adam.validate())?;
        if !(self.fit.min_velocity.is_finite() && self.fit.min_velocity >= 0.0) {
            return Err(Error::config("fit.min_velocity", "must be finite and >= 0"));
        }
        at("pinn", self.pinn.validate())?;
        at("sweep.space", self.sweep.space.validate())?;
        if self.sweep.n_trials == 0 {
            return Err(Error::config("sweep.n_trials", "must be >= 1"));
        }
        let ev = &self.eval;
        at(
            "eval.kp_grid",
            crate::eval::kp_grid(ev.kp_lo, ev.kp_hi, ev.kp_per_decade).map(|_| ()),
        )?;
        if !(ev.duration > 0.0 && ev.hold_duration > 0.0 && ev.recovery_window > 0.0) {
            return Err(Error::config("eval", "durations must be > 0"));
        }
        if !(ev.rmse_start >= 0.0 && ev.rmse_start < ev.duration) {
            return Err(Error::config("eval.rmse_start", "must lie inside the run"));
        }
        if !(ev.k_d >= 0.0 && ev.rmse_threshold > 0.0) {
            return Err(Error::config(
                "eval",
                "k_d must be >= 0 and rmse_threshold > 0",
            ));
        }
        at("eval.disturbance", ev.disturbance.pulse().map(|_| ()))?;
        if ev.disturbance.t_start + ev.disturbance.duration + ev.recovery_window
            > ev.hold_duration
        {
            return Err(Error::config(
                "eval.hold_duration",
                "too short for pulse plus recovery window",
            ));
        }
        at("eval.loop_settings", ev.loop_settings.validate())?;
        Ok(())
    }

    /// Rewrites the master seed and every stage seed derived from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.noise.seed = seed;
        self.fit.adam.seed = seed;
        self.pinn.seed = seed;
    }

    /// SHA-256 of the canonical JSON form, hex-encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `# config_hash=… seed=…` comment lines for CSV artifacts.
    pub fn artifact_comments(&self) -> Vec<String> {
        vec![format!("config_hash={} seed={}", self.hash(), self.seed)]
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("config parse: {e}")))?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

/// Ankle-class static parameters, used both as fixture ground truth and as
/// the network's physics prior.
pub fn ankle_scv() -> ScvParams {
    ScvParams::new(2.78, 1.0005, 0.29, 6.0, 0.13, 0.6)
}

/// Knee-class joint static parameters.
pub fn knee_scv() -> ScvParams {
    ScvParams::new(16.95, 5.0, 5.34, 9.7, 5.4, 0.5)
}

fn base_eval(pulse_force: f64, lever: f64) -> EvalSettings {
    EvalSettings {
        reference: Reference::Sine {
            amplitude: 0.2,
            frequency: 0.5,
            offset: 0.0,
        },
        duration: 6.0,
        rmse_start: 1.0,
        k_d: 4.0,
        rmse_threshold: 0.05,
        kp_lo: 1.0,
        kp_hi: 2e4,
        kp_per_decade: 16,
        hold_duration: 6.0,
        recovery_window: 2.0,
        disturbance: DisturbanceSettings {
            // Pure force at a lever along z: joint moment = -force * lever
            // about x.
            force: Vector3::new(0.0, pulse_force, 0.0),
            moment: Vector3::zeros(),
            sensor_rotation: Matrix3::identity(),
            sensor_translation: Vector3::new(0.0, 0.0, lever),
            t_start: 2.0,
            duration: 1.0,
        },
        loop_settings: LoopSettings::default(),
    }
}

/// Ankle-class fixture with rate-dependent friction. The rotor inertia is
/// small so the apparent joint inertia matches the high-level model's
/// load-only term, and the gravity term keeps super-breakaway currents
/// bounded inside the position limits instead of running into the stops.
pub fn ankle(seed: u64) -> ExperimentConfig {
    let scv = ankle_scv();
    ExperimentConfig {
        fixture: "ankle".into(),
        seed,
        joint: JointParams {
            reduction_ratio: 100.0,
            torque_constant: 0.111,
            motor_inertia: 1e-6,
            load_inertia: 0.5,
            gravity_amplitude: 20.0,
            stiffness: 1e4,
            damping: 5.0,
            pos_min: -2.5,
            pos_max: 2.5,
            i_max: 2.0,
            current_tau: 0.0,
        },
        ground_truth: FrictionGroundTruth::ScvPlusHysteresis {
            scv,
            lag_time: 0.01,
            rate_gain: 1.2,
            rate_scale: 1.0,
        },
        rates: SimRates::default(),
        noise: NoiseSettings::seeded(seed),
        excitation: ExcitationSettings {
            amplitudes: vec![0.3, 0.6, 1.0, 1.5],
            frequencies: vec![0.1, 0.3, 0.5, 1.0, 2.0],
            dwell: 10.0,
            step_levels: vec![],
            step_hold: 3.0,
            initial_positions: vec![0.0],
        },
        pipeline: PipelineSettings::default(),
        fit: FitSettings {
            adam: AdamSettings {
                epochs: 2000,
                batch_size: Some(4096),
                seed,
                ..AdamSettings::default()
            },
            min_velocity: 0.05,
        },
        pinn: PinnConfig {
            history_length: 20,
            hidden1: 268,
            hidden2: 215,
            dropout_rate: 0.07,
            learning_rate: 0.00076,
            batch_size: 4316,
            epochs: 350,
            lambda: 0.164,
            seed,
            physics_params: scv,
        },
        sweep: SweepSettings {
            space: SearchSpace {
                batch_size: (1024, 8192),
                hidden1: (64, 512),
                hidden2: (64, 512),
                learning_rate: (1e-4, 5e-3),
                history_length: (5, 30),
                lambda: (0.0, 0.6),
                dropout_rate: (0.0, 0.2),
                epochs: 40,
            },
            n_trials: 8,
        },
        eval: base_eval(-40.0, 0.25),
    }
}

/// Heavier knee-class fixture with static ground-truth friction.
pub fn knee(seed: u64) -> ExperimentConfig {
    let scv = knee_scv();
    let mut config = ankle(seed);
    config.fixture = "knee".into();
    config.joint.gravity_amplitude = 30.0;
    config.joint.i_max = 5.0;
    config.ground_truth = FrictionGroundTruth::Scv(scv);
    config.excitation.amplitudes = vec![0.9, 1.8, 2.4, 3.0];
    config.pinn = PinnConfig {
        history_length: 22,
        hidden1: 194,
        hidden2: 247,
        dropout_rate: 0.01176,
        learning_rate: 0.00076,
        batch_size: 4914,
        epochs: 350,
        lambda: 0.484,
        seed,
        physics_params: scv,
    };
    config.eval.disturbance.force.y = -120.0;
    config
}

/// Looks up a built-in fixture by name.
pub fn fixture(name: &str, seed: u64) -> Result<ExperimentConfig> {
    match name {
        "ankle" => Ok(ankle(seed)),
        "knee" => Ok(knee(seed)),
        other => Err(Error::invalid(format!(
            "unknown fixture `{other}` (expected ankle or knee)"
        ))),
    }
}
