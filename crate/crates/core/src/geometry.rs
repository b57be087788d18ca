//! Grasp parameterization, view-sphere sampling and the gripper model.
//!
//! A grasp is expressed as `(point, view, angle, depth, width)`. The rotation
//! of the gripper is recovered from the approach `view` and the in-plane
//! `angle`: the first column of the rotation is the approach axis, the second
//! the finger closing axis, and the third completes a right-handed frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Slack used by every inclusive box/containment test. Keeps classification
/// stable under the rounding introduced by rigid transforms.
pub const GEOM_EPS: f64 = 1e-9;

/// Tolerance accepted on `|v| = 1` for caller-supplied directions.
pub const UNIT_TOL: f64 = 1e-6;

/// `|v.x|` above which the tangent construction switches its reference axis.
const TANGENT_SWITCH: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub point: Vec3,
    /// Unit approach direction.
    pub view: Vec3,
    /// In-plane rotation about `view`, radians in `[0, 2π)`.
    pub angle: f64,
    /// Distance the fingertips travel past `point` along `view`.
    pub depth: f64,
    pub width: f64,
    pub score: f64,
}

impl GraspPose {
    pub fn rotation(&self) -> Result<Mat3> {
        rotation_from_view_angle(&self.view, self.angle)
    }

    /// Builds a pose from an explicit gripper rotation.
    pub fn from_rotation(point: Vec3, rotation: &Mat3, depth: f64, width: f64, score: f64) -> Self {
        let (view, angle) = view_angle_from_rotation(rotation);
        GraspPose {
            point,
            view,
            angle,
            depth,
            width,
            score,
        }
    }
}

/// Nearest point whose coordinates are exactly representable in `f32`.
pub fn round_to_f32(v: &Vec3) -> Vec3 {
    v.map(|x| x as f32 as f64)
}

/// Deterministic tangent `t0` and binormal `b0 = v × t0` for a unit `v`.
pub fn tangent_frame(v: &Vec3) -> (Vec3, Vec3) {
    let e = if v.x.abs() > TANGENT_SWITCH {
        Vec3::y()
    } else {
        Vec3::x()
    };
    let t0 = (e - v * e.dot(v)).normalize();
    let b0 = v.cross(&t0);
    (t0, b0)
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("{what} must be unit length, got norm {n}")));
    }
    Ok(())
}

/// Rotation whose columns are `[approach, closing, approach × closing]`.
pub fn rotation_from_view_angle(view: &Vec3, angle: f64) -> Result<Mat3> {
    check_unit(view, "view")?;
    let (t0, b0) = tangent_frame(view);
    let (s, c) = angle.sin_cos();
    let closing = t0 * c + b0 * s;
    let third = view.cross(&closing);
    Ok(Mat3::from_columns(&[*view, closing, third]))
}

/// Inverse of [`rotation_from_view_angle`]: returns the approach column and
/// the in-plane angle wrapped to `[0, 2π)`.
pub fn view_angle_from_rotation(rotation: &Mat3) -> (Vec3, f64) {
    let view: Vec3 = rotation.column(0).into_owned().normalize();
    let closing: Vec3 = rotation.column(1).into_owned();
    let (t0, b0) = tangent_frame(&view);
    let angle = closing.dot(&b0).atan2(closing.dot(&t0)).rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2π
    let angle = if angle >= 2.0 * PI { 0.0 } else { angle };
    (view, angle)
}

/// Rigid transform `x ↦ R·x + t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidPose {
    pub fn identity() -> Self {
        RigidPose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let pose = RigidPose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Builds a pose from a row-major rotation and a translation.
    pub fn from_row_major(rotation: &[f64], translation: &[f64]) -> Result<Self> {
        if rotation.len() != 9 || translation.len() != 3 {
            return Err(Error::invalid(
                "pose needs 9 rotation and 3 translation values",
            ));
        }
        Self::new(
            Mat3::from_row_slice(rotation),
            Vec3::new(translation[0], translation[1], translation[2]),
        )
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
        let det = r.determinant();
        if !(ortho < 1e-6 && (det - 1.0).abs() < 1e-6) || !self.translation.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid(format!(
                "rotation not proper orthonormal (|RᵀR−I|={ortho:e}, det={det})"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            translation: -(rt * self.translation),
            rotation: rt,
        }
    }

    /// Rotation about `axis` by `angle`, then translation.
    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        RigidPose {
            rotation: *rot.matrix(),
            translation,
        }
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if !ok {
            return Err(Error::invalid(format!("invalid camera intrinsics {self:?}")));
        }
        Ok(())
    }

    /// Camera-frame point for pixel `(u, v)` at metric depth `z`.
    pub fn unproject(&self, u: usize, v: usize, z: f64) -> Vec3 {
        Vec3::new(
            (u as f64 - self.cx) * z / self.fx,
            (v as f64 - self.cy) * z / self.fy,
            z,
        )
    }

    /// Pixel containing a camera-frame point, if it lies in front of the
    /// camera and inside the image.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize)> {
        if p.z <= 0.0 {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).round();
        let v = (self.fy * p.y / p.z + self.cy).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewSphere {
    views: Vec<Vec3>,
}

impl ViewSphere {
    pub fn views(&self) -> &[Vec3] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Fibonacci lattice of `count` approach directions.
///
/// `count = 1` yields the single pole `(0, 0, 1)`.
pub fn sample_view_sphere(count: usize) -> Result<ViewSphere> {
    if count == 0 {
        return Err(Error::invalid("view count must be at least 1"));
    }
    if count == 1 {
        return Ok(ViewSphere {
            views: vec![Vec3::z()],
        });
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let n = count as f64;
    let views = (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z).normalize()
        })
        .collect();
    Ok(ViewSphere { views })
}

/// Parallel-jaw gripper. All lengths in meters.
///
/// In the gripper frame (x = approach, y = closing, z = third axis, origin at
/// the grasp point) the fingertips sit at `x = depth`, each finger spans
/// `x ∈ [depth − finger_length, depth]`, and the palm occupies
/// `x ∈ [depth − finger_length − base_depth, depth − finger_length]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_length: f64,
    /// Finger extent along the closing axis.
    pub finger_thickness: f64,
    /// Finger and palm extent along the third axis.
    pub finger_height: f64,
    pub base_depth: f64,
    pub depth_grid: Vec<f64>,
    pub angle_count: usize,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            max_width: 0.08,
            finger_length: 0.04,
            finger_thickness: 0.01,
            finger_height: 0.02,
            base_depth: 0.02,
            depth_grid: vec![0.01, 0.02, 0.03, 0.04],
            angle_count: 12,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.max_width,
            self.finger_length,
            self.finger_thickness,
            self.finger_height,
            self.base_depth,
        ];
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("gripper dimensions must be positive"));
        }
        if self.angle_count == 0 || self.depth_grid.is_empty() {
            return Err(Error::invalid("gripper needs at least one angle and one depth"));
        }
        if self.depth_grid.iter().any(|d| !(d.is_finite() && *d > 0.0))
            || self.depth_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("depth grid must be positive and strictly increasing"));
        }
        Ok(())
    }

    /// In-plane angles `a·π/A`; a parallel jaw is symmetric under a half turn.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.angle_count)
            .map(|a| a as f64 * PI / self.angle_count as f64)
            .collect()
    }

    pub fn candidates_per_view(&self) -> usize {
        self.angle_count * self.depth_grid.len()
    }

    /// Region swept between the fingers.
    pub fn closing_region(&self, depth: f64, width: f64) -> LocalBox {
        let hh = self.finger_height / 2.0;
        LocalBox::new(
            Vec3::new(depth - self.finger_length, -width / 2.0, -hh),
            Vec3::new(depth, width / 2.0, hh),
        )
    }

    /// Left finger, right finger and palm.
    pub fn collision_boxes(&self, depth: f64, width: f64) -> [LocalBox; 3] {
        let hh = self.finger_height / 2.0;
        let hw = width / 2.0;
        let t = self.finger_thickness;
        let x0 = depth - self.finger_length;
        [
            LocalBox::new(Vec3::new(x0, -hw - t, -hh), Vec3::new(depth, -hw, hh)),
            LocalBox::new(Vec3::new(x0, hw, -hh), Vec3::new(depth, hw + t, hh)),
            LocalBox::new(
                Vec3::new(x0 - self.base_depth, -hw - t, -hh),
                Vec3::new(x0, hw + t, hh),
            ),
        ]
    }

    /// Radius of a sphere around the grasp point that contains every box of
    /// every candidate on the depth grid with width up to `max_width`.
    pub fn reach(&self) -> f64 {
        let dmin = self.depth_grid.first().copied().unwrap_or(0.0);
        let dmax = self.depth_grid.last().copied().unwrap_or(0.0);
        let x = (dmin - self.finger_length - self.base_depth).abs().max(dmax.abs());
        let y = self.max_width / 2.0 + self.finger_thickness;
        let z = self.finger_height / 2.0;
        (x * x + y * y + z * z).sqrt() + 1e-6
    }
}

/// Axis-aligned box in a local (gripper) frame with inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl LocalBox {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        LocalBox { min, max }
    }

    pub fn contains(&self, q: &Vec3) -> bool {
        (0..3).all(|i| q[i] >= self.min[i] - GEOM_EPS && q[i] <= self.max[i] + GEOM_EPS)
    }
}

/// A gripper placement in the world: grasp point plus rotation.
#[derive(Clone, Copy, Debug)]
pub struct GraspFrame {
    pub origin: Vec3,
    pub rotation: Mat3,
}

impl GraspFrame {
    pub fn new(origin: Vec3, rotation: Mat3) -> Self {
        GraspFrame { origin, rotation }
    }

    pub fn from_pose(g: &GraspPose) -> Result<Self> {
        Ok(GraspFrame::new(g.point, g.rotation()?))
    }

    pub fn to_local(&self, q: &Vec3) -> Vec3 {
        let d = q - self.origin;
        let r = &self.rotation;
        Vec3::new(
            r[(0, 0)] * d.x + r[(1, 0)] * d.y + r[(2, 0)] * d.z,
            r[(0, 1)] * d.x + r[(1, 1)] * d.y + r[(2, 1)] * d.z,
            r[(0, 2)] * d.x + r[(1, 2)] * d.y + r[(2, 2)] * d.z,
        )
    }

    pub fn to_local_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.tr_mul(v)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.origin
    }
}
