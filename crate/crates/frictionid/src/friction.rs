//! Static friction models for harmonic-drive joints.
//!
//! Conventions:
//! - velocities are joint-side (rad/s), torques are joint-side (N·m)
//! - a model returns the torque that resists motion, so it carries the sign
//!   of the velocity and is subtracted from the drive torque in the load
//!   dynamics
//! - both models are odd functions of velocity
//!
//! `CvParams` is the Coulomb + viscous model
//!
//! ```text
//! tau_F(v) = k_c·tanh(k_a·v) + k_v·v
//! ```
//!
//! `ScvParams` adds a Stribeck term that raises friction near zero velocity
//! from the Coulomb level `k_c` to the breakaway level `k_s` and decays with
//! the characteristic velocity `v_s`:
//!
//! ```text
//! tau_F(v) = k_v·v + k_c·tanh(k_a·v) + (k_s − k_c)·exp(−|v/v_s|^alpha)·tanh(k_a·v)
//! ```
//!
//! Analytic parameter gradients are provided for both models; they are the
//! ground truth the fitting stage differentiates through. `d tau/d v_s` and
//! `d tau/d alpha` are defined as exactly 0 at v = 0 (the limit from either
//! side), so gradient-based fitting never sees a NaN from the stationary
//! samples of a dataset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Coulomb + viscous
// ---------------------------------------------------------------------------

/// Parameters of the Coulomb + viscous (CV) friction model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvParams {
    /// Slope of the tanh sign approximation (s/rad).
    pub k_a: f64,
    /// Coulomb friction level (N·m).
    pub k_c: f64,
    /// Viscous friction coefficient (N·m·s/rad).
    pub k_v: f64,
}

impl CvParams {
    pub const fn new(k_a: f64, k_c: f64, k_v: f64) -> Self {
        Self { k_a, k_c, k_v }
    }

    /// Friction torque (N·m) at joint velocity `v` (rad/s).
    pub fn eval(&self, v: f64) -> f64 {
        self.k_c * (self.k_a * v).tanh() + self.k_v * v
    }

    /// Gradient of [`eval`](Self::eval) w.r.t. `[k_a, k_c, k_v]`.
    pub fn grad(&self, v: f64) -> [f64; 3] {
        let t = (self.k_a * v).tanh();
        let sech2 = 1.0 - t * t;
        [self.k_c * v * sech2, t, v]
    }

    /// Static friction level at zero velocity (N·m). The CV model has no
    /// Stribeck term, so breakaway equals the Coulomb level.
    pub fn breakaway(&self) -> f64 {
        self.k_c
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("k_a", self.k_a)?;
        check_non_negative("k_c", self.k_c)?;
        check_non_negative("k_v", self.k_v)
    }
}

// ---------------------------------------------------------------------------
// Stribeck + Coulomb + viscous
// ---------------------------------------------------------------------------

/// Parameters of the Stribeck + Coulomb + viscous (SCV) friction model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScvParams {
    /// Slope of the tanh sign approximation (s/rad).
    pub k_a: f64,
    /// Coulomb friction level (N·m).
    pub k_c: f64,
    /// Viscous friction coefficient (N·m·s/rad).
    pub k_v: f64,
    /// Breakaway (static) friction level (N·m); `k_s >= k_c`.
    pub k_s: f64,
    /// Stribeck velocity (rad/s); sets how fast the excess over Coulomb
    /// decays with speed.
    pub v_s: f64,
    /// Stribeck decay exponent (dimensionless).
    pub alpha: f64,
}

impl ScvParams {
    pub const fn new(k_a: f64, k_c: f64, k_v: f64, k_s: f64, v_s: f64, alpha: f64) -> Self {
        Self {
            k_a,
            k_c,
            k_v,
            k_s,
            v_s,
            alpha,
        }
    }

    /// Friction torque (N·m) at joint velocity `v` (rad/s).
    pub fn eval(&self, v: f64) -> f64 {
        let t = (self.k_a * v).tanh();
        let s = (-(v / self.v_s).abs().powf(self.alpha)).exp();
        self.k_v * v + self.k_c * t + (self.k_s - self.k_c) * s * t
    }

    /// Gradient of [`eval`](Self::eval) w.r.t.
    /// `[k_a, k_c, k_v, k_s, v_s, alpha]`.
    ///
    /// The `v_s` and `alpha` components are exactly 0 at `v = 0`.
    pub fn grad(&self, v: f64) -> [f64; 6] {
        let t = (self.k_a * v).tanh();
        let sech2 = 1.0 - t * t;
        let u = (v / self.v_s).abs().powf(self.alpha);
        let s = (-u).exp();
        let excess = self.k_s - self.k_c;

        let d_ka = (self.k_c + excess * s) * v * sech2;
        let d_kc = t * (1.0 - s);
        let d_kv = v;
        let d_ks = s * t;
        let (d_vs, d_alpha) = if v == 0.0 {
            (0.0, 0.0)
        } else {
            (
                excess * t * s * self.alpha * u / self.v_s,
                -excess * t * s * u * (v.abs() / self.v_s).ln(),
            )
        };
        [d_ka, d_kc, d_kv, d_ks, d_vs, d_alpha]
    }

    /// Static friction level at zero velocity (N·m): the breakaway level.
    pub fn breakaway(&self) -> f64 {
        self.k_s
    }

    /// The CV model obtained by dropping the Stribeck term.
    pub fn cv_part(&self) -> CvParams {
        CvParams::new(self.k_a, self.k_c, self.k_v)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("k_a", self.k_a)?;
        check_non_negative("k_c", self.k_c)?;
        check_non_negative("k_v", self.k_v)?;
        check_positive("v_s", self.v_s)?;
        check_positive("alpha", self.alpha)?;
        if !self.k_s.is_finite() || self.k_s < self.k_c {
            return Err(Error::config(
                "k_s",
                format!(
                    "must be finite and >= k_c, got k_s={} k_c={}",
                    self.k_s, self.k_c
                ),
            ));
        }
        Ok(())
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::config(name, format!("must be finite and > 0, got {x}")))
    }
}

fn check_non_negative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(name, format!("must be finite and >= 0, got {x}")))
    }
}

// ---------------------------------------------------------------------------
// Tagged union for artifacts and dispatch
// ---------------------------------------------------------------------------

/// A fitted static friction model, tagged for serialization so artifact
/// files are self-describing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
pub enum FrictionModel {
    Cv(CvParams),
    Scv(ScvParams),
}

impl FrictionModel {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            FrictionModel::Cv(p) => p.eval(v),
            FrictionModel::Scv(p) => p.eval(v),
        }
    }

    pub fn breakaway(&self) -> f64 {
        match self {
            FrictionModel::Cv(p) => p.breakaway(),
            FrictionModel::Scv(p) => p.breakaway(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FrictionModel::Cv(_) => "cv",
            FrictionModel::Scv(_) => "scv",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FrictionModel::Cv(p) => p.validate(),
            FrictionModel::Scv(p) => p.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent transcriptions of the model equations, kept deliberately
    // term-by-term so a transposed coefficient in the implementation cannot
    // hide. The frozen constants below were computed with these.
    fn oracle_cv(k_a: f64, k_c: f64, k_v: f64, v: f64) -> f64 {
        let coulomb = k_c * f64::tanh(k_a * v);
        let viscous = k_v * v;
        coulomb + viscous
    }

    fn oracle_scv(p: &ScvParams, v: f64) -> f64 {
        let sign_like = f64::tanh(p.k_a * v);
        let stribeck_decay = f64::exp(-f64::powf(f64::abs(v / p.v_s), p.alpha));
        let viscous = p.k_v * v;
        let coulomb = p.k_c * sign_like;
        let stribeck = (p.k_s - p.k_c) * stribeck_decay * sign_like;
        viscous + coulomb + stribeck
    }

    fn ankle_cv() -> CvParams {
        CvParams::new(10.53, 1.2, 0.24)
    }

    fn ankle_scv() -> ScvParams {
        ScvParams::new(2.78, 1.0005, 0.29, 6.0, 0.13, 0.6)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    // Central differences lose all significance when the true derivative is
    // at roundoff scale (saturated tanh), so treat "both negligible" as a
    // match before comparing relatively.
    fn grads_match(analytic: f64, fd: f64) -> bool {
        (analytic.abs() < 1e-8 && fd.abs() < 1e-8) || rel_err(analytic, fd) < 1e-5
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = (1e-6 * x.abs()).max(1e-7);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn cv_matches_oracle_on_random_velocities() {
        let p = ankle_cv();
        let mut v = -3.0;
        while v <= 3.0 {
            assert!(rel_err(p.eval(v), oracle_cv(p.k_a, p.k_c, p.k_v, v)) < 1e-12);
            v += 0.0137;
        }
    }

    #[test]
    fn scv_matches_oracle_on_random_velocities() {
        let p = ankle_scv();
        let mut v = -3.0;
        while v <= 3.0 {
            assert!(rel_err(p.eval(v), oracle_scv(&p, v)) < 1e-12);
            v += 0.0137;
        }
    }

    #[test]
    fn cv_frozen_values() {
        let p = ankle_cv();
        // oracle_cv(10.53, 1.2, 0.24, 1.0) = 1.4399999965...
        assert!((p.eval(1.0) - 1.44).abs() < 1e-6);
        // oracle_cv(10.53, 1.2, 0.24, -0.1) = -0.963563953724...
        assert!((p.eval(-0.1) - (-0.963_563_95)).abs() < 1e-6);
    }

    #[test]
    fn scv_frozen_value() {
        // oracle_scv(ankle, 2.0) = 1.609311036605...; dominated by viscous +
        // Coulomb with a small Stribeck tail.
        assert!((ankle_scv().eval(2.0) - 1.609_311_04).abs() < 1e-6);
    }

    #[test]
    fn scv_low_speed_excess_dwarfs_high_speed_tail() {
        // Grid scan of the Stribeck excess over the CV part. The excess near
        // breakaway must dominate the residual tail at speed; for the ankle
        // parameters the scan gives max 0.6916 N·m in (0, 0.2] vs 0.0288 N·m
        // at 2.0 rad/s.
        let p = ankle_scv();
        let excess = |v: f64| p.eval(v) - p.cv_part().eval(v);
        let mut max_low = 0.0f64;
        for i in 1..=200 {
            let v = 0.2 * i as f64 / 200.0;
            max_low = max_low.max(excess(v));
        }
        assert!(max_low > 10.0 * excess(2.0));
        assert!((max_low - 0.691_564_5).abs() < 1e-4);
    }

    #[test]
    fn cv_gradient_matches_central_differences() {
        let cases = [
            (ankle_cv(), 0.05),
            (ankle_cv(), -1.3),
            (CvParams::new(50.84, 8.1, 5.55), 0.4),
            (CvParams::new(0.7, 0.3, 2.0), -2.2),
        ];
        for (p, v) in cases {
            let g = p.grad(v);
            let fd = [
                central_diff(|x| CvParams { k_a: x, ..p }.eval(v), p.k_a),
                central_diff(|x| CvParams { k_c: x, ..p }.eval(v), p.k_c),
                central_diff(|x| CvParams { k_v: x, ..p }.eval(v), p.k_v),
            ];
            for (a, b) in g.iter().zip(fd.iter()) {
                assert!(grads_match(*a, *b), "analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn scv_gradient_matches_central_differences() {
        let cases = [
            (ankle_scv(), 0.05),
            (ankle_scv(), -0.4),
            (ScvParams::new(16.95, 5.0, 5.34, 9.7, 5.4, 0.5), 1.7),
            (ScvParams::new(3.0, 0.5, 0.1, 1.4, 0.08, 1.3), -0.02),
        ];
        for (p, v) in cases {
            let g = p.grad(v);
            let fd = [
                central_diff(|x| ScvParams { k_a: x, ..p }.eval(v), p.k_a),
                central_diff(|x| ScvParams { k_c: x, ..p }.eval(v), p.k_c),
                central_diff(|x| ScvParams { k_v: x, ..p }.eval(v), p.k_v),
                central_diff(|x| ScvParams { k_s: x, ..p }.eval(v), p.k_s),
                central_diff(|x| ScvParams { v_s: x, ..p }.eval(v), p.v_s),
                central_diff(|x| ScvParams { alpha: x, ..p }.eval(v), p.alpha),
            ];
            for (i, (a, b)) in g.iter().zip(fd.iter()).enumerate() {
                assert!(grads_match(*a, *b), "component {i}: analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn scv_gradient_is_defined_at_zero_velocity() {
        let g = ankle_scv().grad(0.0);
        assert!(g.iter().all(|x| x.is_finite()));
        assert_eq!(g[4], 0.0);
        assert_eq!(g[5], 0.0);
    }

    #[test]
    fn breakaway_levels() {
        assert_eq!(ankle_cv().breakaway(), 1.2);
        assert_eq!(ankle_scv().breakaway(), 6.0);
    }

    #[test]
    fn model_json_is_tagged_and_round_trips() {
        let m = FrictionModel::Scv(ankle_scv());
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"model_kind\":\"scv\""));
        let back: FrictionModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn validate_rejects_bad_params() {
        assert!(CvParams::new(0.0, 1.0, 0.1).validate().is_err());
        assert!(ScvParams::new(2.0, 1.0, 0.1, 0.5, 0.1, 0.6).validate().is_err());
        assert!(ScvParams::new(2.0, 1.0, 0.1, 2.0, -0.1, 0.6).validate().is_err());
        assert!(ankle_scv().validate().is_ok());
    }

    proptest! {
        #[test]
        fn cv_is_odd(k_a in 0.1f64..60.0, k_c in 0.0f64..10.0, k_v in 0.0f64..6.0,
                     v in -5.0f64..5.0) {
            let p = CvParams::new(k_a, k_c, k_v);
            prop_assert_eq!(p.eval(-v), -p.eval(v));
        }

        #[test]
        fn scv_is_odd(k_a in 0.1f64..60.0, k_c in 0.0f64..10.0, k_v in 0.0f64..6.0,
                      excess in 0.0f64..8.0, v_s in 0.02f64..6.0, alpha in 0.3f64..2.0,
                      v in -5.0f64..5.0) {
            let p = ScvParams::new(k_a, k_c, k_v, k_c + excess, v_s, alpha);
            prop_assert_eq!(p.eval(-v), -p.eval(v));
        }

        #[test]
        fn scv_with_ks_equal_kc_reduces_to_cv(
            k_a in 0.1f64..60.0, k_c in 0.0f64..10.0, k_v in 0.0f64..6.0,
            v_s in 0.02f64..6.0, alpha in 0.3f64..2.0, v in -5.0f64..5.0) {
            let scv = ScvParams::new(k_a, k_c, k_v, k_c, v_s, alpha);
            let cv = CvParams::new(k_a, k_c, k_v);
            prop_assert!(rel_err(scv.eval(v), cv.eval(v)) < 1e-15);
        }

        #[test]
        fn cv_is_strictly_increasing(
            k_a in 0.1f64..60.0, k_c in 0.0f64..10.0, k_v in 0.01f64..6.0,
            v in -5.0f64..5.0, dv in 1e-6f64..1.0) {
            let p = CvParams::new(k_a, k_c, k_v);
            prop_assert!(p.eval(v + dv) > p.eval(v));
        }

        #[test]
        fn scv_sign_matches_velocity(
            k_a in 0.1f64..60.0, k_c in 0.01f64..10.0, k_v in 0.0f64..6.0,
            excess in 0.0f64..8.0, v_s in 0.02f64..6.0, alpha in 0.3f64..2.0,
            v in 1e-6f64..5.0) {
            let p = ScvParams::new(k_a, k_c, k_v, k_c + excess, v_s, alpha);
            prop_assert!(p.eval(v) > 0.0);
            prop_assert!(p.eval(-v) < 0.0);
        }
    }
}
