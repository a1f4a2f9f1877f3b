//! Task-oriented grasp selection: candidates whose grasp point projects into
//! the grounded grasping-part mask compete on score.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unit, CameraModel, Pose, Rotation, UnitVec3, Vec3};
use crate::io::{read_json, IoError};
use crate::mask::PartMask;
use crate::part_model::{ElementShape, GeometricElement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub pose: Pose,
    pub grasp_point: Vec3,
    pub width: f64,
    pub height: f64,
    pub depth: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspSelection {
    pub chosen: GraspCandidate,
    /// Index of `chosen` in the input list.
    pub index: usize,
    pub in_mask_count: usize,
    pub total_count: usize,
}

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("no grasp candidates given")]
    EmptyCandidates,
    #[error("none of {total} candidates projects into the mask of part {part}")]
    NoCandidateInMask { part: u32, total: usize },
    #[error("candidate {index}: {message}")]
    InvalidCandidate { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Whether `c`'s grasp point lands inside `mask` when seen through `cam`.
pub fn projects_into(c: &GraspCandidate, mask: &PartMask, cam: &CameraModel) -> bool {
    let Ok(px) = cam.project(&c.grasp_point) else {
        return false;
    };
    match px.rounded(mask.mask.width, mask.mask.height) {
        Some((u, v)) => mask.mask.get(u, v),
        None => false,
    }
}

pub fn filter_and_select(
    cands: &[GraspCandidate],
    part_mask: &PartMask,
    cam: &CameraModel,
) -> Result<GraspSelection, GraspError> {
    if cands.is_empty() {
        return Err(GraspError::EmptyCandidates);
    }
    let mut best: Option<usize> = None;
    let mut in_mask = 0;
    for (i, c) in cands.iter().enumerate() {
        if !projects_into(c, part_mask, cam) {
            continue;
        }
        in_mask += 1;
        // strict > keeps the lowest index on ties
        if best.is_none_or(|b| c.score > cands[b].score) {
            best = Some(i);
        }
    }
    let index = best.ok_or(GraspError::NoCandidateInMask {
        part: part_mask.id,
        total: cands.len(),
    })?;
    Ok(GraspSelection {
        chosen: cands[index].clone(),
        index,
        in_mask_count: in_mask,
        total_count: cands.len(),
    })
}

fn validate(cands: &[GraspCandidate]) -> Result<(), GraspError> {
    for (index, c) in cands.iter().enumerate() {
        let bad = |message: &str| GraspError::InvalidCandidate {
            index,
            message: message.to_string(),
        };
        if !(c.width > 0.0 && c.height > 0.0 && c.depth > 0.0) {
            return Err(bad("width, height and depth must be positive"));
        }
        if !c.score.is_finite() {
            return Err(bad("score must be finite"));
        }
    }
    Ok(())
}

pub fn load_candidates(path: &Path) -> Result<Vec<GraspCandidate>, GraspError> {
    let cands: Vec<GraspCandidate> = read_json(path)?;
    validate(&cands)?;
    Ok(cands)
}

/// Distance from `p` to the element: the segment for a vector, the center
/// for a surface.
pub fn distance_to_element(p: &Vec3, e: &GeometricElement) -> f64 {
    match &e.shape {
        ElementShape::Vector(v) => {
            let ab = v.endpoint_far - v.endpoint_near;
            let t = ((p - v.endpoint_near).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            (p - (v.endpoint_near + ab * t)).norm()
        }
        ElementShape::Surface(s) => (p - s.center).norm(),
    }
}

/// Gripper orientation with +z along `approach` and the closing (x) axis
/// across `along` when possible.
pub fn gripper_orientation(approach: &UnitVec3, along: Option<&Vec3>) -> Rotation {
    let z = approach.into_inner();
    let x = along
        .and_then(|a| unit(a.cross(&z)))
        .or_else(|| unit(Vec3::y().cross(&z)))
        .or_else(|| unit(Vec3::x().cross(&z)))
        .expect("some axis is not parallel to the approach")
        .into_inner();
    Rotation::from_axes(x, z.cross(&x), z).expect("orthonormal by construction")
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// `n` top-down candidates on the element and `2n` distractors 3 to 25 cm
/// away from it, on the approach side.
pub fn synth_candidates(part: &GeometricElement, n: usize, seed: u64) -> Vec<GraspCandidate> {
    synth_candidates_with(part, n, seed, &UnitVec3::new_unchecked(-Vec3::z()))
}

pub fn synth_candidates_with(
    part: &GeometricElement,
    n: usize,
    seed: u64,
    approach: &UnitVec3,
) -> Vec<GraspCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let along = match &part.shape {
        ElementShape::Vector(v) => Some(v.direction.into_inner()),
        ElementShape::Surface(_) => None,
    };
    let orientation = gripper_orientation(approach, along.as_ref());
    let mut out = Vec::with_capacity(3 * n);
    let make = |p: Vec3, rng: &mut ChaCha8Rng| GraspCandidate {
        pose: Pose::new(p, orientation),
        grasp_point: p,
        width: 0.04,
        height: 0.02,
        depth: 0.02,
        score: rng.random_range(0.0..1.0),
    };
    for _ in 0..n {
        let base = match &part.shape {
            ElementShape::Vector(v) => {
                let t: f64 = rng.random_range(0.1..0.9);
                v.endpoint_near + (v.endpoint_far - v.endpoint_near) * t
            }
            ElementShape::Surface(s) => s.center,
        };
        let offset = random_unit(&mut rng) * rng.random_range(0.0..0.008);
        let c = make(base + offset, &mut rng);
        out.push(c);
    }
    let anchor = part.associated_point();
    while out.len() < 3 * n {
        // distractors stay on the gripper's side of the part, never under it
        let mut dir = random_unit(&mut rng);
        if dir.dot(approach) > 0.0 {
            dir = -dir;
        }
        let p = anchor + dir * rng.random_range(0.03..0.25);
        if distance_to_element(&p, part) < 0.03 {
            continue;
        }
        let c = make(p, &mut rng);
        out.push(c);
    }
    out
}
