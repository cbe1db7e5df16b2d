//! Standard Denavit–Hartenberg kinematics of a 6R arm with a payload
//! rigidly mounted on the flange.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Capsule;
use crate::PosegenError;

pub type Joints = [f64; 6];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    /// `Rz(θ) · Tz(d) · Tx(a) · Rx(α)` with `θ = q + theta_offset`.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let th = q + self.theta_offset;
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), th)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(self.a * th.cos(), self.a * th.sin(), self.d), rot)
    }
}

/// Cylinder fixed to the flange; its axis is the mount frame's z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Payload {
    pub radius: f64,
    pub half_length: f64,
    pub mount: Isometry3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    pub dh: [DhRow; 6],
    pub lower: Joints,
    pub upper: Joints,
    pub payload: Payload,
}

/// World-frame geometry of one configuration.
#[derive(Clone, Debug)]
pub struct FkResult {
    /// Frame origins `o_0 .. o_6`; link `i` spans `o_i → o_{i+1}`.
    pub origins: [Point3<f64>; 7],
    pub flange: Isometry3<f64>,
    /// Payload body frame (flange composed with the mount).
    pub body: Isometry3<f64>,
}

impl FkResult {
    pub fn link_segment(&self, i: usize) -> (Point3<f64>, Point3<f64>) {
        (self.origins[i], self.origins[i + 1])
    }

    pub fn end_effector(&self) -> Point3<f64> {
        self.origins[6]
    }
}

impl KinematicChain {
    pub fn validate(&self) -> Result<(), PosegenError> {
        for j in 0..6 {
            if !(self.lower[j] < self.upper[j]) {
                return Err(PosegenError::Config(format!(
                    "joint {} limits [{}, {}] are empty",
                    j + 1,
                    self.lower[j],
                    self.upper[j]
                )));
            }
        }
        if !(self.payload.radius > 0.0) || !(self.payload.half_length >= 0.0) {
            return Err(PosegenError::Config("payload radius must be positive".into()));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &Joints) -> bool {
        (0..6).all(|j| self.lower[j] <= q[j] && q[j] <= self.upper[j])
    }

    pub fn fk(&self, q: &Joints) -> FkResult {
        let mut t = Isometry3::identity();
        let mut origins = [Point3::origin(); 7];
        for (j, row) in self.dh.iter().enumerate() {
            t *= row.transform(q[j]);
            origins[j + 1] = t * Point3::origin();
        }
        FkResult { origins, flange: t, body: t * self.payload.mount }
    }

    /// The payload cylinder approximated by a capsule of equal radius and
    /// half-length.
    pub fn payload_capsule(&self, fk: &FkResult) -> Capsule {
        let h = self.payload.half_length;
        Capsule::new(fk.body * Point3::new(0.0, 0.0, -h), fk.body * Point3::new(0.0, 0.0, h), self.payload.radius)
    }
}

/// Rigid transform from a translation and roll-pitch-yaw angles.
pub fn pose(translation: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(translation[0], translation[1], translation[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}
