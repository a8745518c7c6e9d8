//! Wrench algebra for expressing an applied Cartesian load as a joint
//! moment.
//!
//! A wrench measured in one frame maps to another through the adjoint of the
//! relative pose: forces rotate, moments rotate and pick up the lever-arm
//! cross term. The disturbance experiments use this to state "how hard was
//! the joint pushed" in N·m about the joint axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Force/moment pair expressed in a named frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    /// Force (N).
    pub force: Vector3<f64>,
    /// Moment (N·m).
    pub moment: Vector3<f64>,
    /// Frame the components are expressed in.
    pub frame: String,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, moment: Vector3<f64>, frame: &str) -> Self {
        Wrench {
            force,
            moment,
            frame: frame.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.force.iter().all(|v| v.is_finite()) && self.moment.iter().all(|v| v.is_finite()))
        {
            return Err(Error::invalid("wrench components must be finite"));
        }
        Ok(())
    }
}

/// Pose of a measurement frame relative to the joint frame: `rotation` maps
/// measurement-frame vectors into the joint frame, `translation` locates the
/// measurement origin in the joint frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl JointPose {
    pub fn identity() -> Self {
        JointPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

fn check_orthonormal(r: &Matrix3<f64>) -> Result<()> {
    let defect = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !(defect <= 1e-9) {
        return Err(Error::invalid(format!(
            "rotation is not orthonormal (defect {defect:.3e})"
        )));
    }
    Ok(())
}

/// Maps a wrench into the frame the pose is expressed against:
/// f' = R·f, μ' = p × (R·f) + R·μ.
pub fn wrench_transform(
    w: &Wrench,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    target_frame: &str,
) -> Result<Wrench> {
    w.validate()?;
    check_orthonormal(rotation)?;
    let f = rotation * w.force;
    let mu = translation.cross(&f) + rotation * w.moment;
    Ok(Wrench::new(f, mu, target_frame))
}

/// Moment about the joint's x-axis once the measured wrench is expressed in
/// the joint frame.
pub fn joint_axis_moment(w: &Wrench, pose: &JointPose) -> Result<f64> {
    let in_joint = wrench_transform(w, &pose.rotation, &pose.translation, "joint")?;
    Ok(in_joint.moment.x)
}
