//! Solving for the rigid transform of the grasped object that best satisfies
//! a set of resolved constraints.
//!
//! Only the slot-A quantities of each constraint are moved by the transform;
//! the other slots are read at their observed positions. The search runs
//! over an axis-angle rotation about the centroid of the moved points plus a
//! translation, from one identity start and a fixed-seed set of random
//! rotations.

mod bfgs;
pub mod so3;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bfgs::{minimize, BfgsConfig, BfgsOutcome, Vec6};

use crate::constraint_lang::{
    resolve_constraint, Constraint, ElementTable, ResolveError, ResolvedConstraint, ResolvedForm,
};
use crate::geometry::{serde_unit, unit, Pose, RigidTransform, Rotation, UnitVec3, Vec3};
use crate::part_model::GeometricElement;

pub const SUCCESS_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_RESTARTS: usize = 8;
pub const DEFAULT_SEED: u64 = 0xc0fa;

const DOWN: Vec3 = Vec3::new(0.0, 0.0, -1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableFrame {
    pub point: Vec3,
    #[serde(with = "serde_unit")]
    pub normal: UnitVec3,
}

impl Default for TableFrame {
    fn default() -> Self {
        Self {
            point: Vec3::new(0.5, 0.0, 0.07),
            normal: UnitVec3::new_unchecked(Vec3::z()),
        }
    }
}

/// Point of an element used by point slots.
pub fn associated_point(e: &GeometricElement) -> Vec3 {
    e.associated_point()
}

/// Below `KINK` a norm is rounding noise at the kink and contributes no
/// gradient.
const KINK: f64 = 1e-13;

fn norm_grad(w: Vec3) -> (f64, Vec3) {
    let n = w.norm();
    if n > KINK {
        (n, w / n)
    } else {
        (0.0, Vec3::zeros())
    }
}

fn abs_grad(v: f64) -> (f64, f64) {
    (v.abs(), if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
}

/// Loss of one constraint given the moved slot-A direction `u` and point
/// `q`, with its gradient with respect to each.
fn loss_terms(form: &ResolvedForm, u: &Vec3, q: &Vec3, table: &TableFrame) -> (f64, Vec3, Vec3) {
    let n = table.normal.into_inner();
    let mut gu = Vec3::zeros();
    let mut gq = Vec3::zeros();
    let loss = match form {
        ResolvedForm::CollinearOpposite { b, .. } => {
            let vb = b.direction.into_inner();
            let (l1, w1) = norm_grad(u.cross(&vb));
            gu += vb.cross(&w1);
            let (l2, w2) = norm_grad((q - b.point).cross(&vb));
            gq += vb.cross(&w2);
            let (l3, w3) = norm_grad(u + vb);
            gu += w3;
            l1 + l2 + l3
        }
        ResolvedForm::TargetAlong { b, c, distance, .. } => {
            let vb = b.direction.into_inner();
            let d = q - c.point;
            let (l1, s) = abs_grad(d.dot(&vb) - distance);
            gq += vb * s;
            let (l2, w) = norm_grad(d.cross(&vb));
            gq += vb.cross(&w);
            l1 + l2
        }
        ResolvedForm::ParallelToTable { .. } => {
            let (l, s) = abs_grad(u.dot(&n));
            gu += n * s;
            l
        }
        ResolvedForm::HeightAboveTable { height, .. } => {
            let (l, s) = abs_grad((q - table.point).dot(&n) - height);
            gq += n * s;
            l
        }
        ResolvedForm::PerpendicularToTable { .. } => {
            let (l, w) = norm_grad(u.cross(&n));
            gu += n.cross(&w);
            l
        }
        ResolvedForm::PointsDownward { .. } => {
            gu -= DOWN;
            -u.dot(&DOWN)
        }
    };
    (loss, gu, gq)
}

fn slot_a(form: &ResolvedForm) -> (Vec3, Vec3) {
    let v = match form {
        ResolvedForm::CollinearOpposite { a, .. }
        | ResolvedForm::ParallelToTable { a }
        | ResolvedForm::PerpendicularToTable { a }
        | ResolvedForm::PointsDownward { a } => a.direction.into_inner(),
        // point-only slots carry no direction
        ResolvedForm::TargetAlong { .. } | ResolvedForm::HeightAboveTable { .. } => Vec3::zeros(),
    };
    (v, form.subject_point())
}

pub fn constraint_loss(c: &ResolvedConstraint, t: &RigidTransform, table: &TableFrame) -> f64 {
    let (v, p) = slot_a(&c.form);
    loss_terms(&c.form, &t.apply_to_vector(&v), &t.apply_to_point(&p), table).0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no constraints to solve")]
    NoConstraints,
    #[error("constraint {constraint:?} moves part {id}, which is not on the grasped object")]
    NotMovable { constraint: String, id: u32 },
    #[error("movable part {0} is also listed as static")]
    Overlap(u32),
    #[error("no restart met the tolerance; best residual {}", .0.residual)]
    NoConvergence(Box<SolveResult>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveProblem {
    pub constraints: Vec<ResolvedConstraint>,
    /// Ids of parts rigidly attached to the gripper.
    pub movable: BTreeSet<u32>,
    pub table: TableFrame,
    pub seed: u64,
    /// Random starts tried after the identity start.
    pub restarts: usize,
    pub bfgs: BfgsConfig,
}

impl SolveProblem {
    pub fn new(
        constraints: Vec<ResolvedConstraint>,
        movable: impl IntoIterator<Item = u32>,
    ) -> Result<Self, SolveError> {
        let movable: BTreeSet<u32> = movable.into_iter().collect();
        for c in &constraints {
            let id = c.form.subject_id();
            if !movable.contains(&id) {
                return Err(SolveError::NotMovable {
                    constraint: c.source.to_string(),
                    id,
                });
            }
        }
        Ok(Self {
            constraints,
            movable,
            table: TableFrame::default(),
            seed: DEFAULT_SEED,
            restarts: DEFAULT_RESTARTS,
            bfgs: BfgsConfig::default(),
        })
    }

    pub fn with_table(mut self, table: TableFrame) -> Self {
        self.table = table;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks that no id is both movable and in `static_ids`.
    pub fn check_static(&self, static_ids: &[u32]) -> Result<(), SolveError> {
        match static_ids.iter().find(|id| self.movable.contains(id)) {
            Some(&id) => Err(SolveError::Overlap(id)),
            None => Ok(()),
        }
    }

    /// Rotation pivot: centroid of the distinct moved points.
    pub fn pivot(&self) -> Vec3 {
        let mut seen = BTreeSet::new();
        let mut sum = Vec3::zeros();
        for c in &self.constraints {
            if seen.insert(c.form.subject_id()) {
                sum += c.form.subject_point();
            }
        }
        if seen.is_empty() {
            Vec3::zeros()
        } else {
            sum / seen.len() as f64
        }
    }

    /// Lower bound of `total_loss`: each downward term is at least -1.
    pub fn loss_floor(&self) -> f64 {
        -(self
            .constraints
            .iter()
            .filter(|c| c.form.is_points_downward())
            .count() as f64)
    }

    /// Transform for parameters `[ω, t]`: `p ↦ R(ω)(p - c) + c + t`.
    pub fn transform_from_params(&self, x: &Vec6) -> RigidTransform {
        let c = self.pivot();
        let r = Rotation::from_scaled_axis(Vec3::new(x[0], x[1], x[2]));
        let t = Vec3::new(x[3], x[4], x[5]);
        RigidTransform::new(r, c + t - r.rotate(&c))
    }

    /// Total loss and its gradient at parameters `x`.
    pub fn objective(&self, x: &Vec6) -> (f64, Vec6) {
        let c = self.pivot();
        let w = Vec3::new(x[0], x[1], x[2]);
        let t = Vec3::new(x[3], x[4], x[5]);
        let r = Rotation::from_scaled_axis(w);
        let jt = so3::left_jacobian(&w).transpose();
        let mut f = 0.0;
        let mut gw = Vec3::zeros();
        let mut gt = Vec3::zeros();
        for con in &self.constraints {
            let (v, p) = slot_a(&con.form);
            let u = r.rotate(&v);
            let rp = r.rotate(&(p - c));
            let (l, gu, gq) = loss_terms(&con.form, &u, &(rp + c + t), &self.table);
            f += l;
            gw += u.cross(&gu) + rp.cross(&gq);
            gt += gq;
        }
        let gw = jt * gw;
        (f, Vec6::new(gw.x, gw.y, gw.z, gt.x, gt.y, gt.z))
    }

    pub fn losses(&self, t: &RigidTransform) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| constraint_loss(c, t, &self.table))
            .collect()
    }

    /// Downward terms must each reach -1 within tolerance; the rest must sum
    /// below tolerance.
    pub fn meets_tolerance(&self, losses: &[f64]) -> bool {
        let mut rest = 0.0;
        for (c, l) in self.constraints.iter().zip(losses) {
            if c.form.is_points_downward() {
                if *l > -1.0 + SUCCESS_TOLERANCE {
                    return false;
                }
            } else {
                rest += l;
            }
        }
        rest <= SUCCESS_TOLERANCE
    }

    /// Translation that carries the first moved point to a target implied by
    /// the constraints, after rotating by `r` about the pivot.
    fn start_translation(&self, r: &Rotation) -> Vec3 {
        let c = self.pivot();
        let Some(first) = self.constraints.first() else {
            return Vec3::zeros();
        };
        let p = first.form.subject_point();
        let moved = r.rotate(&(p - c)) + c;
        let same_point = |con: &&ResolvedConstraint| (con.form.subject_point() - p).norm() == 0.0;
        // an explicit target beats a line anchor, which only fixes a line
        for con in self.constraints.iter().filter(same_point) {
            if let ResolvedForm::TargetAlong { b, c: pc, distance, .. } = &con.form {
                return pc.point + b.direction.into_inner() * *distance - moved;
            }
        }
        for con in self.constraints.iter().filter(same_point) {
            if let ResolvedForm::CollinearOpposite { b, .. } = &con.form {
                return b.point - moved;
            }
        }
        for con in self.constraints.iter().filter(same_point) {
            if let ResolvedForm::HeightAboveTable { height, .. } = &con.form {
                let n = self.table.normal.into_inner();
                return n * (height - (moved - self.table.point).dot(&n));
            }
        }
        Vec3::zeros()
    }

    fn starts(&self) -> Vec<Vec6> {
        let pack = |w: Vec3, t: Vec3| Vec6::new(w.x, w.y, w.z, t.x, t.y, t.z);
        let mut starts = Vec::with_capacity(self.restarts + 1);
        let identity = Rotation::identity();
        let shifted = pack(Vec3::zeros(), self.start_translation(&identity));
        let still = Vec6::zeros();
        starts.push(if self.objective(&shifted).0 < self.objective(&still).0 {
            shifted
        } else {
            still
        });
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        while starts.len() < self.restarts + 1 {
            let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let Ok(r) = Rotation::from_xyzw(q) else {
                continue;
            };
            starts.push(pack(r.scaled_axis(), self.start_translation(&r)));
        }
        starts
    }
}

pub fn total_loss(p: &SolveProblem, t: &RigidTransform) -> f64 {
    p.losses(t).iter().sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLoss {
    pub constraint: Constraint,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub transform: RigidTransform,
    /// Sum of `losses`; negative when downward constraints are satisfied.
    pub residual: f64,
    pub losses: Vec<ConstraintLoss>,
    /// BFGS iterations of the selected start.
    pub iterations: usize,
    /// Starts run, identity included.
    pub restarts_used: usize,
    pub selected_start: usize,
    pub success: bool,
}

struct Run {
    transform: RigidTransform,
    losses: Vec<f64>,
    residual: f64,
    iterations: usize,
    success: bool,
}

/// Runs starts in order and stops once a start meets the tolerance with a
/// residual no larger than any start value seen so far. Among successful
/// starts the lowest residual wins, ties to the lowest index; without a
/// success the lowest residual is returned inside `NoConvergence`.
pub fn solve(p: &SolveProblem) -> Result<SolveResult, SolveError> {
    if p.constraints.is_empty() {
        return Err(SolveError::NoConstraints);
    }
    let cfg = BfgsConfig {
        floor: p.loss_floor(),
        ..p.bfgs.clone()
    };
    let mut runs: Vec<Run> = Vec::new();
    let mut min_start = f64::INFINITY;
    for x0 in p.starts() {
        min_start = min_start.min(p.objective(&x0).0);
        // The derived translation parks the subject point on a kink of the
        // line terms, where their unit gradients swamp the rotation signal.
        // Rotating about the pivot first leaves that point in place.
        let rot = minimize(
            |x| {
                let (f, mut g) = p.objective(x);
                g.fixed_rows_mut::<3>(3).fill(0.0);
                (f, g)
            },
            x0,
            &cfg,
        );
        let mut out = minimize(|x| p.objective(x), rot.x, &cfg);
        out.iterations += rot.iterations;
        let transform = p.transform_from_params(&out.x);
        let losses = p.losses(&transform);
        let residual = losses.iter().sum();
        let success = p.meets_tolerance(&losses);
        runs.push(Run {
            transform,
            losses,
            residual,
            iterations: out.iterations,
            success,
        });
        let best_ok = runs
            .iter()
            .filter(|r| r.success)
            .map(|r| r.residual)
            .fold(f64::INFINITY, f64::min);
        if best_ok <= min_start {
            break;
        }
    }
    let any_success = runs.iter().any(|r| r.success);
    let (idx, best) = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.success || !any_success)
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
        .expect("at least one start");
    let result = SolveResult {
        transform: best.transform,
        residual: best.residual,
        losses: p
            .constraints
            .iter()
            .zip(&best.losses)
            .map(|(c, &loss)| ConstraintLoss {
                constraint: c.source.clone(),
                loss,
            })
            .collect(),
        iterations: best.iterations,
        restarts_used: runs.len(),
        selected_start: idx,
        success: best.success,
    };
    if result.success {
        Ok(result)
    } else {
        Err(SolveError::NoConvergence(Box::new(result)))
    }
}

/// End-effector pose after moving the grasped object by `t`.
pub fn pose_from_transform(grasp_pose: &Pose, t: &RigidTransform) -> Pose {
    Pose::new(
        t.apply_to_point(&grasp_pose.position),
        t.rotation.compose(&grasp_pose.orientation),
    )
}

/// Self-contained solve request: modeled elements plus constraint sentences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub elements: Vec<GeometricElement>,
    pub constraints: Vec<Constraint>,
    pub movable: Vec<u32>,
    #[serde(default)]
    pub table: TableFrame,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Error)]
pub enum RequestError {
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl SolveRequest {
    pub fn into_problem(self) -> Result<SolveProblem, RequestError> {
        let table = ElementTable::new(self.elements);
        let constraints = self
            .constraints
            .iter()
            .map(|c| resolve_constraint(c, &table))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SolveProblem::new(constraints, self.movable)?
            .with_table(self.table)
            .with_seed(self.seed))
    }
}

/// Unit direction helper for building problems by hand.
pub fn dir(x: f64, y: f64, z: f64) -> UnitVec3 {
    unit(Vec3::new(x, y, z)).expect("nonzero direction")
}
