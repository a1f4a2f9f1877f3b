//! Core 3D types: rigid transforms, poses, pinhole cameras, depth images and
//! point clouds.
//!
//! World frame is z-up and all lengths are meters. Camera frames follow the
//! usual pinhole convention (x right, y down, z forward).

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no valid depth pixels to back-project")]
    EmptyCloud,
    #[error("point is behind the camera (camera-frame z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("depth image is {got_w}x{got_h}, camera expects {want_w}x{want_h}")]
    SizeMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
}

/// Normalizes `v`, returning `None` for zero-length or non-finite input.
pub fn unit(v: Vec3) -> Option<UnitVec3> {
    let n = v.norm();
    if n.is_finite() && n > 1e-12 {
        Some(Unit::new_unchecked(v / n))
    } else {
        None
    }
}

/// Serde adapter for unit vectors: written as `[x, y, z]`, normalized on read.
pub mod serde_unit {
    use super::{unit, UnitVec3, Vec3};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &UnitVec3, s: S) -> Result<S::Ok, S::Error> {
        v.into_inner().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitVec3, D::Error> {
        let v = Vec3::deserialize(d)?;
        unit(v).ok_or_else(|| D::Error::custom("direction must be a nonzero finite vector"))
    }
}

/// A proper rotation in SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Rotation3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Rotation3::identity())
    }

    pub fn from_axis_angle(axis: &UnitVec3, angle: f64) -> Self {
        Rotation(Rotation3::from_axis_angle(axis, angle))
    }

    /// Rotation from an axis-angle vector (direction = axis, norm = angle).
    pub fn from_scaled_axis(v: Vec3) -> Self {
        Rotation(Rotation3::new(v))
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x_axis(), angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y_axis(), angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z_axis(), angle)
    }

    /// Projects an arbitrary 3x3 matrix onto the nearest rotation (polar
    /// decomposition), so the result always satisfies R·Rᵀ = I, det R = +1.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidRotation("non-finite matrix".into()));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(GeometryError::InvalidRotation("SVD failed".into())),
        };
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Ok(Rotation(Rotation3::from_matrix_unchecked(r)))
    }

    /// Rotation whose columns are the given frame axes; re-orthonormalized.
    pub fn from_axes(x: Vec3, y: Vec3, z: Vec3) -> Result<Self, GeometryError> {
        Self::from_matrix(&Matrix3::from_columns(&[x, y, z]))
    }

    /// Builds a rotation from an `[x, y, z, w]` quaternion, normalizing it.
    pub fn from_xyzw(q: [f64; 4]) -> Result<Self, GeometryError> {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        let n = quat.norm();
        if !n.is_finite() || n < 1e-9 {
            return Err(GeometryError::InvalidRotation(format!(
                "quaternion {q:?} has no usable norm"
            )));
        }
        Ok(Rotation(UnitQuaternion::from_quaternion(quat).to_rotation_matrix()))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        *self.0.matrix()
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.0)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Rotation(q.to_rotation_matrix())
    }

    /// Unit quaternion as `[x, y, z, w]` with `w ≥ 0`.
    pub fn to_xyzw(&self) -> [f64; 4] {
        let q = self.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.i, s * q.j, s * q.k, s * q.w]
    }

    pub fn scaled_axis(&self) -> Vec3 {
        self.0.scaled_axis()
    }

    pub fn inner(&self) -> &Rotation3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic angle between two rotations, radians. The atan2 form keeps
    /// full precision near zero, where acos of the trace bottoms out around
    /// 1e-8.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let m = (self.0.inverse() * other.0).into_inner();
        let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        (0.5 * skew.norm()).atan2(0.5 * (m.trace() - 1.0))
    }

    /// Frame axis `i` (0 = x, 1 = y, 2 = z) expressed in the parent frame.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.matrix().column(i).into_owned()
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Wire form shared by poses and transforms.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation_xyzw: [f64; 4],
}

/// An element of SE(3): `p ↦ R·p + t`, `v ↦ R·v`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "PoseRepr", try_from = "PoseRepr")]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation::identity(), translation)
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn apply_to_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn apply_to_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// `self ∘ other`: the result applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation.inverse();
        RigidTransform {
            rotation: r_inv,
            translation: -r_inv.rotate(&self.translation),
        }
    }
}

impl From<RigidTransform> for PoseRepr {
    fn from(t: RigidTransform) -> Self {
        PoseRepr {
            position: t.translation.into(),
            orientation_xyzw: t.rotation.to_xyzw(),
        }
    }
}

impl TryFrom<PoseRepr> for RigidTransform {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let translation = Vec3::from(r.position);
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidRotation("non-finite position".into()));
        }
        Ok(RigidTransform::new(
            Rotation::from_xyzw(r.orientation_xyzw)?,
            translation,
        ))
    }
}

/// End-effector frame expressed in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "PoseRepr", try_from = "PoseRepr")]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Transform from the pose's local frame into the world frame.
    pub fn as_transform(&self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        Pose::new(t.translation, t.rotation)
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        p.as_transform().into()
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        RigidTransform::try_from(r).map(|t| Pose::from_transform(&t))
    }
}

/// Sub-pixel image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Nearest integer pixel, or `None` when outside `width × height`.
    pub fn rounded(&self, width: u32, height: u32) -> Option<(u32, u32)> {
        let (u, v) = (self.u.round(), self.v.round());
        if u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64 {
            Some((u as u32, v as u32))
        } else {
            None
        }
    }
}

/// Pinhole camera. `extrinsics` maps world coordinates into the camera frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub extrinsics: RigidTransform,
}

#[derive(Deserialize)]
struct CameraRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    extrinsics: RigidTransform,
}

impl TryFrom<CameraRepr> for CameraModel {
    type Error = GeometryError;

    fn try_from(r: CameraRepr) -> Result<Self, Self::Error> {
        CameraModel::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.extrinsics)
    }
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        extrinsics: RigidTransform,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            extrinsics,
        })
    }

    /// Camera at `eye` looking at `target`, image "up" roughly along world +z.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let forward = unit(target - eye)
            .ok_or_else(|| GeometryError::InvalidCamera("eye equals target".into()))?;
        let right = unit(forward.cross(&Vec3::z()))
            .ok_or_else(|| GeometryError::InvalidCamera("view direction is vertical".into()))?;
        let down = forward.cross(&right);
        // Rows of the world→camera rotation are the camera axes in world.
        let r_cw = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let rotation = Rotation::from_matrix(&r_cw)?;
        let translation = -rotation.rotate(&eye);
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            RigidTransform::new(rotation, translation),
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.extrinsics.inverse().translation
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.extrinsics.apply_to_point(p)
    }

    pub fn project(&self, p: &Vec3) -> Result<Pixel, GeometryError> {
        let c = self.world_to_camera(p);
        if c.z <= 1e-6 {
            return Err(GeometryError::BehindCamera { z: c.z });
        }
        Ok(Pixel::new(
            self.fx * c.x / c.z + self.cx,
            self.fy * c.y / c.z + self.cy,
        ))
    }

    /// World point seen at pixel `(u, v)` with camera-frame depth `depth`.
    pub fn back_project_pixel(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let c = Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        );
        self.extrinsics.inverse().apply_to_point(&c)
    }

    /// World-frame unit ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> UnitVec3 {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        Unit::new_normalize(self.extrinsics.rotation.inverse().rotate(&d))
    }

    /// Optical axis in world coordinates.
    pub fn optical_axis(&self) -> UnitVec3 {
        Unit::new_normalize(self.extrinsics.rotation.inverse().rotate(&Vec3::z()))
    }
}

/// Row-major single-channel depth in meters. Zero or non-finite is invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, d: f32) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = d;
    }

    /// Valid depth at `(u, v)`, if any.
    pub fn valid(&self, u: u32, v: u32) -> Option<f64> {
        let d = self.get(u, v);
        (d.is_finite() && d > 0.0).then_some(d as f64)
    }

    fn check_camera(&self, cam: &CameraModel) -> Result<(), GeometryError> {
        if self.width != cam.width || self.height != cam.height {
            return Err(GeometryError::SizeMismatch {
                got_w: self.width,
                got_h: self.height,
                want_w: cam.width,
                want_h: cam.height,
            });
        }
        Ok(())
    }
}

/// World-frame points, optionally tagged with the pixel they came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub pixels: Option<Vec<(u32, u32)>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }
}

/// Back-projects every valid depth pixel into the world frame.
pub fn back_project(depth: &DepthImage, cam: &CameraModel) -> Result<PointCloud, GeometryError> {
    back_project_where(depth, cam, |_, _| true)
}

/// Back-projects the valid depth pixels accepted by `keep`.
pub fn back_project_where(
    depth: &DepthImage,
    cam: &CameraModel,
    keep: impl Fn(u32, u32) -> bool,
) -> Result<PointCloud, GeometryError> {
    depth.check_camera(cam)?;
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if !keep(u, v) {
                continue;
            }
            if let Some(d) = depth.valid(u, v) {
                points.push(cam.back_project_pixel(u as f64, v as f64, d));
                pixels.push((u, v));
            }
        }
    }
    if points.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    Ok(PointCloud {
        points,
        pixels: Some(pixels),
    })
}
