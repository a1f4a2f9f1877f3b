//! Binding part labels in a plan to modeled geometric elements.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Constraint, LabelKind, MotionPlan, PartRef, SubsequentAction};
use crate::geometry::{UnitVec3, Vec3};
use crate::part_model::{ElementShape, GeometricElement, PartKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolveError {
    #[error("{label} does not name any annotated part")]
    UnknownLabel { label: PartRef },
    #[error("{label} names a {actual:?} part")]
    KindMismatch { label: PartRef, actual: PartKind },
}

/// Elements keyed by their annotation id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElementTable {
    elements: BTreeMap<u32, GeometricElement>,
}

impl ElementTable {
    /// Later elements with a repeated id replace earlier ones.
    pub fn new(elements: impl IntoIterator<Item = GeometricElement>) -> Self {
        Self {
            elements: elements.into_iter().map(|e| (e.id, e)).collect(),
        }
    }

    pub fn get(&self, id: u32) -> Option<&GeometricElement> {
        self.elements.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GeometricElement> {
        self.elements.values()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// A direction with the point it is attached to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorSlot {
    pub element_id: u32,
    pub direction: UnitVec3,
    pub point: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSlot {
    pub element_id: u32,
    pub point: Vec3,
}

/// Constraint with geometry bound in. Distances are in meters.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedForm {
    CollinearOpposite { a: VectorSlot, b: VectorSlot },
    TargetAlong { a: PointSlot, b: VectorSlot, c: PointSlot, distance: f64 },
    ParallelToTable { a: VectorSlot },
    HeightAboveTable { a: PointSlot, height: f64 },
    PerpendicularToTable { a: VectorSlot },
    PointsDownward { a: VectorSlot },
}

impl ResolvedForm {
    /// Element id in slot A, the one moved by the solved transform.
    pub fn subject_id(&self) -> u32 {
        match self {
            ResolvedForm::CollinearOpposite { a, .. }
            | ResolvedForm::ParallelToTable { a }
            | ResolvedForm::PerpendicularToTable { a }
            | ResolvedForm::PointsDownward { a } => a.element_id,
            ResolvedForm::TargetAlong { a, .. } | ResolvedForm::HeightAboveTable { a, .. } => {
                a.element_id
            }
        }
    }

    /// Point in slot A.
    pub fn subject_point(&self) -> Vec3 {
        match self {
            ResolvedForm::CollinearOpposite { a, .. }
            | ResolvedForm::ParallelToTable { a }
            | ResolvedForm::PerpendicularToTable { a }
            | ResolvedForm::PointsDownward { a } => a.point,
            ResolvedForm::TargetAlong { a, .. } | ResolvedForm::HeightAboveTable { a, .. } => a.point,
        }
    }

    pub fn is_points_downward(&self) -> bool {
        matches!(self, ResolvedForm::PointsDownward { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConstraint {
    pub source: Constraint,
    pub form: ResolvedForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedPlan {
    pub constraints: Vec<ResolvedConstraint>,
    pub actions: Vec<SubsequentAction>,
}

fn lookup(table: &ElementTable, r: PartRef) -> Result<&GeometricElement, ResolveError> {
    let e = table
        .get(r.id)
        .ok_or(ResolveError::UnknownLabel { label: r })?;
    if r.label == LabelKind::Surface && !matches!(e.shape, ElementShape::Surface(_)) {
        return Err(ResolveError::KindMismatch {
            label: r,
            actual: e.kind(),
        });
    }
    Ok(e)
}

fn vector_slot(table: &ElementTable, r: PartRef) -> Result<VectorSlot, ResolveError> {
    let e = lookup(table, r)?;
    Ok(VectorSlot {
        element_id: e.id,
        direction: e.direction(),
        point: e.associated_point(),
    })
}

fn point_slot(table: &ElementTable, r: PartRef) -> Result<PointSlot, ResolveError> {
    let e = lookup(table, r)?;
    Ok(PointSlot {
        element_id: e.id,
        point: e.associated_point(),
    })
}

pub fn resolve_constraint(
    c: &Constraint,
    table: &ElementTable,
) -> Result<ResolvedConstraint, ResolveError> {
    let form = match *c {
        Constraint::CollinearOpposite { a, b } => ResolvedForm::CollinearOpposite {
            a: vector_slot(table, a)?,
            b: vector_slot(table, b)?,
        },
        Constraint::TargetAlong { a, b, c, distance } => ResolvedForm::TargetAlong {
            a: point_slot(table, a)?,
            b: vector_slot(table, b)?,
            c: point_slot(table, c)?,
            distance: distance.meters(),
        },
        Constraint::ParallelToTable { a } => ResolvedForm::ParallelToTable {
            a: vector_slot(table, a)?,
        },
        Constraint::HeightAboveTable { a, height } => ResolvedForm::HeightAboveTable {
            a: point_slot(table, a)?,
            height: height.meters(),
        },
        Constraint::PerpendicularToTable { a } => ResolvedForm::PerpendicularToTable {
            a: vector_slot(table, a)?,
        },
        Constraint::PointsDownward { a } => ResolvedForm::PointsDownward {
            a: vector_slot(table, a)?,
        },
    };
    Ok(ResolvedConstraint {
        source: c.clone(),
        form,
    })
}

pub fn resolve(plan: &MotionPlan, table: &ElementTable) -> Result<ResolvedPlan, ResolveError> {
    let constraints = plan
        .constraints
        .iter()
        .map(|c| resolve_constraint(c, table))
        .collect::<Result<_, _>>()?;
    Ok(ResolvedPlan {
        constraints,
        actions: plan.actions.clone(),
    })
}
