//! Pose sequences after the grasp: actions applied to the solved pose, the
//! fixed rule-based plans, and straight-line waypoint densification.
//!
//! The end-effector approach axis is the +z column of its orientation.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint_lang::{parse_action, ParseError, SubsequentAction};
use crate::geometry::{Pose, Rotation, Vec3};

/// Height above a rule target for the first rule step.
pub const RULE_ABOVE: f64 = 0.05;
pub const RULE_DOWN: f64 = 0.06;
pub const RULE_BACKWARD: f64 = 0.10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    #[default]
    Hold,
    Open,
}

/// Where a step came from. Serialized as a single string: `grasp`,
/// `solved`, an action sentence, or `rule: <step>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Provenance {
    Grasp,
    Solved,
    Action(SubsequentAction),
    Rule(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Grasp => f.write_str("grasp"),
            Provenance::Solved => f.write_str("solved"),
            Provenance::Action(a) => write!(f, "{a}"),
            Provenance::Rule(s) => write!(f, "rule: {s}"),
        }
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for Provenance {
    type Error = ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Ok(match s.as_str() {
            "grasp" => Provenance::Grasp,
            "solved" => Provenance::Solved,
            _ => match s.strip_prefix("rule: ") {
                Some(step) => Provenance::Rule(step.to_string()),
                None => Provenance::Action(parse_action(&s)?),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseStep {
    pub pose: Pose,
    pub gripper: Gripper,
    pub provenance: Provenance,
}

impl PoseStep {
    pub fn new(pose: Pose, gripper: Gripper, provenance: Provenance) -> Self {
        Self {
            pose,
            gripper,
            provenance,
        }
    }
}

pub fn approach_axis(pose: &Pose) -> Vec3 {
    pose.orientation.axis(2)
}

pub fn apply_action(current: &Pose, a: &SubsequentAction) -> PoseStep {
    let mut pose = *current;
    let mut gripper = Gripper::Hold;
    match a {
        SubsequentAction::MoveVerticallyDown { distance } => pose.position.z -= distance.meters(),
        SubsequentAction::MoveForward { distance } => {
            pose.position += approach_axis(current) * distance.meters()
        }
        SubsequentAction::OpenGripper => gripper = Gripper::Open,
        SubsequentAction::RotateEndEffector180 => {
            pose.orientation = current.orientation.compose(&Rotation::about_z(PI))
        }
    }
    PoseStep::new(pose, gripper, Provenance::Action(a.clone()))
}

/// `p1` tagged as solved, then one step per action.
pub fn plan_post_grasp(p1: &Pose, actions: &[SubsequentAction]) -> Vec<PoseStep> {
    let mut steps = vec![PoseStep::new(*p1, Gripper::Hold, Provenance::Solved)];
    for a in actions {
        let prev = steps.last().expect("nonempty").pose;
        steps.push(apply_action(&prev, a));
    }
    steps
}

/// An object or part named by a rule instruction, with its position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleTarget {
    pub name: String,
    pub position: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFormat {
    Hammer,
    Press,
    Open,
    Pour,
    PutInto,
}

/// A rule instruction with its slot names, before positions are known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleInstruction {
    pub format: RuleFormat,
    pub a: String,
    pub b: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("{0:?} matches none of the rule formats (Hammer A. / Press A with B. / Open A. / Pour water from A to B. / Put A into B.)")]
    UnknownFormat(String),
    #[error("waypoint spacing must be positive, got {0}")]
    InvalidStep(f64),
}

fn object_name(s: &str) -> String {
    let s = s.trim();
    let lower = s.to_ascii_lowercase();
    for article in ["the ", "a ", "an "] {
        if lower.starts_with(article) {
            return s[article.len()..].trim().to_string();
        }
    }
    s.to_string()
}

fn split_once_ci<'a>(s: &'a str, sep: &str) -> Option<(&'a str, &'a str)> {
    let i = s.to_ascii_lowercase().find(sep)?;
    Some((&s[..i], &s[i + sep.len()..]))
}

/// Recognizes the five rule formats. Leading articles are dropped from slot
/// names.
pub fn parse_rule_instruction(text: &str) -> Result<RuleInstruction, RuleError> {
    let body = text.trim().trim_end_matches('.').trim();
    let lower = body.to_ascii_lowercase();
    let unknown = || RuleError::UnknownFormat(text.to_string());
    let nonempty = |s: String| if s.is_empty() { Err(unknown()) } else { Ok(s) };
    let rest = |prefix: &str| body[prefix.len()..].to_string();
    let (format, a, b) = if lower.starts_with("pour water from ") {
        let (a, b) = split_once_ci(&rest("pour water from "), " to ")
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .ok_or_else(unknown)?;
        (RuleFormat::Pour, a, Some(b))
    } else if lower.starts_with("press ") {
        let r = rest("press ");
        let (a, b) = split_once_ci(&r, " with ").ok_or_else(unknown)?;
        (RuleFormat::Press, a.to_string(), Some(b.to_string()))
    } else if lower.starts_with("put ") {
        let r = rest("put ");
        let (a, b) = split_once_ci(&r, " into ").ok_or_else(unknown)?;
        (RuleFormat::PutInto, a.to_string(), Some(b.to_string()))
    } else if lower.starts_with("hammer ") {
        (RuleFormat::Hammer, rest("hammer "), None)
    } else if lower.starts_with("open ") {
        (RuleFormat::Open, rest("open "), None)
    } else {
        return Err(unknown());
    };
    Ok(RuleInstruction {
        format,
        a: nonempty(object_name(&a))?,
        b: b.map(|b| nonempty(object_name(&b))).transpose()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum RuleTask {
    Hammer { a: RuleTarget },
    Press { a: RuleTarget, with_b: RuleTarget },
    Open { a: RuleTarget },
    Pour { from_a: RuleTarget, to_b: RuleTarget },
    PutInto { a: RuleTarget, b: RuleTarget },
}

impl RuleTask {
    /// Builds the task from a parsed instruction and a position lookup.
    pub fn bind(
        ins: &RuleInstruction,
        mut position_of: impl FnMut(&str) -> Option<Vec3>,
    ) -> Result<Self, String> {
        let mut target = |name: &str| {
            position_of(name)
                .map(|position| RuleTarget {
                    name: name.to_string(),
                    position,
                })
                .ok_or_else(|| format!("no object named {name:?}"))
        };
        let b = |t: &mut dyn FnMut(&str) -> Result<RuleTarget, String>| {
            let name = ins.b.as_deref().ok_or("format needs a second object")?;
            t(name)
        };
        Ok(match ins.format {
            RuleFormat::Hammer => RuleTask::Hammer { a: target(&ins.a)? },
            RuleFormat::Open => RuleTask::Open { a: target(&ins.a)? },
            RuleFormat::Press => RuleTask::Press {
                a: target(&ins.a)?,
                with_b: b(&mut target)?,
            },
            RuleFormat::Pour => RuleTask::Pour {
                from_a: target(&ins.a)?,
                to_b: b(&mut target)?,
            },
            RuleFormat::PutInto => RuleTask::PutInto {
                a: target(&ins.a)?,
                b: b(&mut target)?,
            },
        })
    }
}

fn above(target: &RuleTarget, grasp: &Pose, mover: &str) -> PoseStep {
    PoseStep::new(
        Pose::new(target.position + Vec3::new(0.0, 0.0, RULE_ABOVE), grasp.orientation),
        Gripper::Hold,
        Provenance::Rule(format!("Move {mover} to 5 cm above {}.", target.name)),
    )
}

/// Steps after the grasp pose for the fixed rule plans.
pub fn plan_rule_based(task: &RuleTask, grasp_pose: &Pose) -> Vec<PoseStep> {
    let down = |s: &PoseStep| {
        let mut p = s.pose;
        p.position.z -= RULE_DOWN;
        PoseStep::new(p, Gripper::Hold, Provenance::Rule("Move vertically down 6 cm.".into()))
    };
    match task {
        RuleTask::Hammer { a } => {
            let s1 = above(a, grasp_pose, "hammer");
            let s2 = down(&s1);
            vec![s1, s2]
        }
        RuleTask::Press { a, with_b } => {
            let s1 = above(a, grasp_pose, &with_b.name);
            let s2 = down(&s1);
            vec![s1, s2]
        }
        RuleTask::Open { .. } => {
            let mut p = *grasp_pose;
            p.position -= approach_axis(grasp_pose) * RULE_BACKWARD;
            vec![PoseStep::new(p, Gripper::Hold, Provenance::Rule("Move backward 10 cm.".into()))]
        }
        RuleTask::Pour { from_a, to_b } => {
            let s1 = above(to_b, grasp_pose, &from_a.name);
            let mut p = s1.pose;
            p.orientation = p.orientation.compose(&Rotation::about_z(PI));
            let s2 = PoseStep::new(
                p,
                Gripper::Hold,
                Provenance::Rule("End-effector rotates 180 degrees.".into()),
            );
            vec![s1, s2]
        }
        RuleTask::PutInto { a, b } => {
            let s1 = above(b, grasp_pose, &a.name);
            let s2 = PoseStep::new(s1.pose, Gripper::Open, Provenance::Rule("Open the gripper.".into()));
            vec![s1, s2]
        }
    }
}

/// Inserts straight-line, slerped waypoints so consecutive positions are at
/// most `max_step` apart. Input poses appear unchanged in the output.
pub fn interpolate(steps: &[PoseStep], max_step: f64) -> Result<Vec<Pose>, RuleError> {
    if !(max_step > 0.0 && max_step.is_finite()) {
        return Err(RuleError::InvalidStep(max_step));
    }
    let mut out = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        if i > 0 {
            let a = &steps[i - 1].pose;
            let b = &s.pose;
            let d = (b.position - a.position).norm();
            let segments = (d / max_step).ceil() as usize;
            let (qa, qb) = (a.orientation.quaternion(), b.orientation.quaternion());
            for k in 1..segments {
                let t = k as f64 / segments as f64;
                let q = qa.try_slerp(&qb, t, 1e-12).unwrap_or(if t < 0.5 { qa } else { qb });
                out.push(Pose::new(
                    a.position + (b.position - a.position) * t,
                    Rotation::from_quaternion(&q),
                ));
            }
        }
        out.push(s.pose);
    }
    Ok(out)
}

/// Output document: discrete steps plus the densified path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<PoseStep>,
    pub waypoints: Vec<Pose>,
}
