//! Excitation batches: the open-loop current commands used to probe a joint.
//!
//! A [`TrajectorySpec`] is a pure function of time `current_at(t)` plus an
//! initial joint position, so a spec can be sampled at any rate without
//! accumulating state. Batches are built from three families:
//!
//! - sine dwells over an amplitude x frequency grid (amplitude-major order)
//! - current ramps, terminated when the command reaches the drive limit
//! - current steps held for a fixed time
//!
//! and can be replicated over a set of initial joint positions to cover the
//! workspace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Command waveform of a single open-loop run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    /// `i(t) = amplitude * sin(2*pi*frequency*t)` for `dwell` seconds.
    Sine {
        /// Peak current (A).
        amplitude: f64,
        /// Frequency (Hz).
        frequency: f64,
        /// Duration (s).
        dwell: f64,
    },
    /// `i(t) = slope * t`, stopped once the command reaches `i_limit`.
    Ramp {
        /// Current slope (A/s), may be negative.
        slope: f64,
        /// Magnitude at which the ramp ends (A).
        i_limit: f64,
    },
    /// `i(t) = level` held for `hold` seconds.
    Step {
        /// Step level (A).
        level: f64,
        /// Hold duration (s).
        hold: f64,
    },
}

/// One open-loop excitation run: a waveform started from rest at a given
/// joint position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub waveform: Waveform,
    /// Joint position at t = 0 (rad); the motor starts at the matching
    /// unwound position `theta = r * s0`.
    pub initial_position: f64,
}

impl TrajectorySpec {
    /// Commanded current (A) at time `t` (s). Pure in `t`.
    pub fn current_at(&self, t: f64) -> f64 {
        match self.waveform {
            Waveform::Sine {
                amplitude,
                frequency,
                ..
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            Waveform::Ramp { slope, .. } => slope * t,
            Waveform::Step { level, .. } => level,
        }
    }

    /// Planned duration (s). Runs can still end earlier on a position limit.
    pub fn duration(&self) -> f64 {
        match self.waveform {
            Waveform::Sine { dwell, .. } => dwell,
            Waveform::Ramp { slope, i_limit } => {
                if slope == 0.0 {
                    0.0
                } else {
                    (i_limit / slope).abs()
                }
            }
            Waveform::Step { hold, .. } => hold,
        }
    }

    /// Samples the command at `rate` Hz as `(t, i)` pairs covering the full
    /// duration, endpoints included.
    pub fn sample(&self, rate: f64) -> Vec<(f64, f64)> {
        let n = (self.duration() * rate).round() as usize;
        (0..=n)
            .map(|k| {
                let t = k as f64 / rate;
                (t, self.current_at(t))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.waveform {
            Waveform::Sine {
                amplitude,
                frequency,
                dwell,
            } => amplitude.is_finite() && frequency > 0.0 && dwell > 0.0,
            Waveform::Ramp { slope, i_limit } => slope != 0.0 && slope.is_finite() && i_limit > 0.0,
            Waveform::Step { level, hold } => level.is_finite() && hold > 0.0,
        };
        if ok && self.initial_position.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed trajectory spec {self:?}")))
        }
    }
}

// ---------------------------------------------------------------------------
// Batch construction
// ---------------------------------------------------------------------------

/// Sine dwell for every (amplitude, frequency) pair, amplitude-major: all
/// frequencies of the first amplitude, then the next amplitude.
pub fn sine_grid(amplitudes: &[f64], frequencies: &[f64], dwell: f64) -> Vec<TrajectorySpec> {
    let mut specs = Vec::with_capacity(amplitudes.len() * frequencies.len());
    for &a in amplitudes {
        for &f in frequencies {
            specs.push(TrajectorySpec {
                waveform: Waveform::Sine {
                    amplitude: a,
                    frequency: f,
                    dwell,
                },
                initial_position: 0.0,
            });
        }
    }
    specs
}

/// One ramp per slope, each ending when the command reaches `i_limit`.
pub fn ramp_family(slopes: &[f64], i_limit: f64) -> Vec<TrajectorySpec> {
    slopes
        .iter()
        .map(|&slope| TrajectorySpec {
            waveform: Waveform::Ramp { slope, i_limit },
            initial_position: 0.0,
        })
        .collect()
}

/// One step per level, each held for `hold` seconds.
pub fn step_family(levels: &[f64], hold: f64) -> Vec<TrajectorySpec> {
    levels
        .iter()
        .map(|&level| TrajectorySpec {
            waveform: Waveform::Step { level, hold },
            initial_position: 0.0,
        })
        .collect()
}

/// Cartesian product of a batch with a set of initial positions, batch-major:
/// the whole batch at the first position, then the next position.
pub fn with_initial_configurations(
    specs: &[TrajectorySpec],
    positions: &[f64],
) -> Vec<TrajectorySpec> {
    let mut out = Vec::with_capacity(specs.len() * positions.len());
    for &p in positions {
        for spec in specs {
            out.push(TrajectorySpec {
                initial_position: p,
                ..*spec
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_grid_is_amplitude_major() {
        let specs = sine_grid(&[0.3, 0.6], &[0.1, 0.5, 2.0], 10.0);
        assert_eq!(specs.len(), 6);
        let amps: Vec<f64> = specs
            .iter()
            .map(|s| match s.waveform {
                Waveform::Sine { amplitude, .. } => amplitude,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(amps, vec![0.3, 0.3, 0.3, 0.6, 0.6, 0.6]);
        let freqs: Vec<f64> = specs
            .iter()
            .map(|s| match s.waveform {
                Waveform::Sine { frequency, .. } => frequency,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(freqs, vec![0.1, 0.5, 2.0, 0.1, 0.5, 2.0]);
    }

    #[test]
    fn sine_samples_match_analytic_value() {
        // Sampling is a pure function of t: values at 20 kHz must agree with
        // the closed form to floating-point precision.
        let spec = sine_grid(&[1.5], &[2.0], 1.0)[0];
        for (t, i) in spec.sample(20_000.0) {
            let expected = 1.5 * (2.0 * std::f64::consts::PI * 2.0 * t).sin();
            assert!((i - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_duration_ends_at_current_limit() {
        let spec = ramp_family(&[0.2], 2.0)[0];
        assert!((spec.duration() - 10.0).abs() < 1e-12);
        assert!((spec.current_at(spec.duration()) - 2.0).abs() < 1e-12);
        let neg = ramp_family(&[-0.5], 2.0)[0];
        assert!((neg.duration() - 4.0).abs() < 1e-12);
        assert!((neg.current_at(neg.duration()) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn step_holds_level() {
        let spec = step_family(&[0.8], 3.0)[0];
        assert_eq!(spec.current_at(0.0), 0.8);
        assert_eq!(spec.current_at(2.9), 0.8);
        assert!((spec.duration() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn initial_configurations_multiply_the_batch() {
        let base = step_family(&[0.5, 1.0], 2.0);
        let all = with_initial_configurations(&base, &[-0.4, 0.0, 0.4]);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].initial_position, -0.4);
        assert_eq!(all[1].initial_position, -0.4);
        assert_eq!(all[2].initial_position, 0.0);
        assert_eq!(all[5].initial_position, 0.4);
    }

    #[test]
    fn specs_serialize_with_kind_tag() {
        let spec = sine_grid(&[1.0], &[0.5], 10.0)[0];
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"kind\":\"sine\""));
        let back: TrajectorySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn validation_rejects_degenerate_specs() {
        let bad = TrajectorySpec {
            waveform: Waveform::Ramp {
                slope: 0.0,
                i_limit: 2.0,
            },
            initial_position: 0.0,
        };
        assert!(bad.validate().is_err());
    }
}
