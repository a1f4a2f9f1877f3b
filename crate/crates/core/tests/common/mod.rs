//! Test-side math on plain arrays, kept apart from the library's nalgebra
//! types so the oracles share no code with what they check.
#![allow(dead_code)]

use copa_core::geometry::{CameraModel, Rotation, RigidTransform, UnitVec3, Vec3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type V = [f64; 3];
pub type M = [[f64; 3]; 3];

pub fn add(a: V, b: V) -> V {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: V, b: V) -> V {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: V, s: f64) -> V {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: V, b: V) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: V, b: V) -> V {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: V) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: V) -> V {
    scale(a, 1.0 / norm(a))
}

pub fn mat_vec(m: &M, v: V) -> V {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn transpose(m: &M) -> M {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

pub fn mat_mul(a: &M, b: &M) -> M {
    let bt = transpose(b);
    [
        [dot(a[0], bt[0]), dot(a[0], bt[1]), dot(a[0], bt[2])],
        [dot(a[1], bt[0]), dot(a[1], bt[1]), dot(a[1], bt[2])],
        [dot(a[2], bt[0]), dot(a[2], bt[1]), dot(a[2], bt[2])],
    ]
}

/// Rotation matrix of a unit quaternion given as `[x, y, z, w]`.
pub fn quat_matrix(q: [f64; 4]) -> M {
    let [x, y, z, w] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rot_y(angle: f64) -> M {
    let (s, c) = angle.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(angle: f64) -> M {
    let (s, c) = angle.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Angle of `a^T b`, from its trace.
pub fn rotation_angle_between(a: &M, b: &M) -> f64 {
    let r = mat_mul(&transpose(a), b);
    ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn matrix_of(r: &Rotation) -> M {
    quat_matrix(r.to_xyzw())
}

pub fn apply_point(t: &RigidTransform, p: V) -> V {
    add(mat_vec(&matrix_of(&t.rotation), p), arr(&t.translation))
}

pub fn apply_dir(t: &RigidTransform, v: V) -> V {
    mat_vec(&matrix_of(&t.rotation), v)
}

/// Preimage of `p` under `t`.
pub fn unapply_point(t: &RigidTransform, p: V) -> V {
    mat_vec(&transpose(&matrix_of(&t.rotation)), sub(p, arr(&t.translation)))
}

pub fn unapply_dir(t: &RigidTransform, v: V) -> V {
    mat_vec(&transpose(&matrix_of(&t.rotation)), v)
}

pub fn arr(v: &Vec3) -> V {
    [v.x, v.y, v.z]
}

pub fn vec3(a: V) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub fn unit3(a: V) -> UnitVec3 {
    UnitVec3::new_normalize(vec3(a))
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> V {
    loop {
        let v: V = std::array::from_fn(|_| StandardNormal.sample(rng));
        if norm(v) > 1e-6 {
            return normalize(v);
        }
    }
}

/// Unit vector orthogonal to `v`.
pub fn random_perpendicular(rng: &mut ChaCha8Rng, v: V) -> V {
    loop {
        let w = cross(v, random_unit(rng));
        if norm(w) > 1e-3 {
            return normalize(w);
        }
    }
}

/// `v` turned by `angle` toward a random perpendicular direction.
pub fn tilt(rng: &mut ChaCha8Rng, v: V, angle: f64) -> V {
    let p = random_perpendicular(rng, v);
    add(scale(v, angle.cos()), scale(p, angle.sin()))
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        if let Ok(r) = Rotation::from_xyzw(q) {
            return r;
        }
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, half: f64) -> V {
    std::array::from_fn(|_| rng.random_range(-half..half))
}

pub fn random_transform(rng: &mut ChaCha8Rng, half: f64) -> RigidTransform {
    RigidTransform::new(random_rotation(rng), vec3(random_point(rng, half)))
}

/// Pinhole projection from the camera's stored parameters; `None` behind
/// the camera.
pub fn project(cam: &CameraModel, p: V) -> Option<(f64, f64)> {
    let c = apply_point(&cam.extrinsics, p);
    if c[2] <= 1e-6 {
        return None;
    }
    Some((cam.fx * c[0] / c[2] + cam.cx, cam.fy * c[1] / c[2] + cam.cy))
}

/// Camera at `eye` looking straight down, image right along world +x.
pub fn top_down_camera(eye: V, focal: f64, width: u32, height: u32) -> CameraModel {
    let r: M = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let rotation = Rotation::from_axes(vec3(r[0]), vec3(r[1]), vec3(r[2]))
        .expect("rows are orthonormal")
        .inverse();
    let translation = scale(mat_vec(&r, eye), -1.0);
    CameraModel::new(
        focal,
        focal,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
        width,
        height,
        RigidTransform::new(rotation, vec3(translation)),
    )
    .expect("valid intrinsics")
}

/// World ray direction through pixel `(u, v)` of a `top_down_camera`.
pub fn top_down_ray(cam: &CameraModel, u: f64, v: f64) -> V {
    normalize([(u - cam.cx) / cam.fx, -(v - cam.cy) / cam.fy, -1.0])
}
