//! The sentence language spoken by the constraint oracle.
//!
//! Six constraint templates describe the first target pose and four action
//! templates describe what follows it. Parsing is tolerant of case,
//! whitespace and trailing punctuation; formatting always emits the canonical
//! wording, and `parse(format(x)) == x` for every IR value.

pub mod lexer;
pub mod resolve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use lexer::{tokenize, Token};
pub use resolve::{resolve, resolve_constraint, ElementTable, PointSlot, ResolveError, ResolvedConstraint, ResolvedForm, ResolvedPlan, VectorSlot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unrecognized sentence {text:?}; closest template is {closest:?}")]
    UnrecognizedTemplate { text: String, closest: &'static str },
    #[error("unsupported unit {unit:?} in {text:?}; distances must be given in cm")]
    BadUnit { text: String, unit: String },
    #[error("bad part label {token:?} in {text:?}")]
    BadLabel { text: String, token: String },
    #[error("distance must be positive in {text:?}")]
    NonPositiveDistance { text: String },
}

/// The word used to name a part in a sentence. All three share one id
/// namespace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Vector,
    Point,
    Surface,
}

impl LabelKind {
    fn word(self) -> &'static str {
        match self {
            LabelKind::Vector => "Vector",
            LabelKind::Point => "Point",
            LabelKind::Surface => "Surface",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        match w {
            "vector" => Some(LabelKind::Vector),
            "point" => Some(LabelKind::Point),
            "surface" => Some(LabelKind::Surface),
            _ => None,
        }
    }
}

/// Reference to an annotated part by its numeric label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PartRef {
    pub id: u32,
    pub label: LabelKind,
}

impl PartRef {
    pub fn vector(id: u32) -> Self {
        Self {
            id,
            label: LabelKind::Vector,
        }
    }

    pub fn point(id: u32) -> Self {
        Self {
            id,
            label: LabelKind::Point,
        }
    }

    pub fn surface(id: u32) -> Self {
        Self {
            id,
            label: LabelKind::Surface,
        }
    }
}

impl fmt::Display for PartRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.label.word(), self.id)
    }
}

/// A length as written in a sentence. Stored in centimeters so the printed
/// form round-trips exactly.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Distance {
    cm: f64,
}

impl Distance {
    pub fn from_cm(cm: f64) -> Self {
        Self { cm }
    }

    pub fn cm(&self) -> f64 {
        self.cm
    }

    pub fn meters(&self) -> f64 {
        self.cm / 100.0
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cm", self.cm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Constraint {
    CollinearOpposite { a: PartRef, b: PartRef },
    TargetAlong { a: PartRef, b: PartRef, c: PartRef, distance: Distance },
    ParallelToTable { a: PartRef },
    HeightAboveTable { a: PartRef, height: Distance },
    PerpendicularToTable { a: PartRef },
    PointsDownward { a: PartRef },
}

impl Constraint {
    /// The part on the manipulated object (slot A).
    pub fn subject(&self) -> PartRef {
        match *self {
            Constraint::CollinearOpposite { a, .. }
            | Constraint::TargetAlong { a, .. }
            | Constraint::ParallelToTable { a }
            | Constraint::HeightAboveTable { a, .. }
            | Constraint::PerpendicularToTable { a }
            | Constraint::PointsDownward { a } => a,
        }
    }

    pub fn refs(&self) -> Vec<PartRef> {
        match *self {
            Constraint::CollinearOpposite { a, b } => vec![a, b],
            Constraint::TargetAlong { a, b, c, .. } => vec![a, b, c],
            _ => vec![self.subject()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum SubsequentAction {
    MoveVerticallyDown { distance: Distance },
    MoveForward { distance: Distance },
    OpenGripper,
    RotateEndEffector180,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::CollinearOpposite { a, b } => write!(
                f,
                "{a} and {b} are on the same line, with the opposite direction."
            ),
            Constraint::TargetAlong { a, b, c, distance } => write!(
                f,
                "The target position of {a} is {distance} along {b} from {c}'s current position."
            ),
            Constraint::ParallelToTable { a } => write!(f, "{a} is parallel to the table surface."),
            Constraint::HeightAboveTable { a, height } => {
                write!(f, "{a} is {height} above the table surface.")
            }
            Constraint::PerpendicularToTable { a } => {
                write!(f, "{a} is perpendicular to the table surface.")
            }
            Constraint::PointsDownward { a } => write!(f, "{a} points downward."),
        }
    }
}

impl fmt::Display for SubsequentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsequentAction::MoveVerticallyDown { distance } => {
                write!(f, "Move vertically down {distance}.")
            }
            SubsequentAction::MoveForward { distance } => write!(f, "Move forward {distance}."),
            SubsequentAction::OpenGripper => write!(f, "Open the gripper."),
            SubsequentAction::RotateEndEffector180 => write!(f, "End-effector rotates 180 degrees."),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Pat {
    Lit(&'static str),
    Label,
    Qty,
}

use Pat::{Label as L, Lit as W, Qty as Q};

struct Template {
    canonical: &'static str,
    pattern: &'static [Pat],
}

const CONSTRAINT_TEMPLATES: [Template; 6] = [
    Template {
        canonical: "Vector A and Vector B are on the same line, with the opposite direction.",
        pattern: &[
            L,
            W("and"),
            L,
            W("are"),
            W("on"),
            W("the"),
            W("same"),
            W("line"),
            W("with"),
            W("the"),
            W("opposite"),
            W("direction"),
        ],
    },
    Template {
        canonical: "The target position of Point A is x cm along Vector B from Point C's current position.",
        pattern: &[
            W("the"),
            W("target"),
            W("position"),
            W("of"),
            L,
            W("is"),
            Q,
            W("along"),
            L,
            W("from"),
            L,
            W("'s"),
            W("current"),
            W("position"),
        ],
    },
    Template {
        canonical: "Vector A is parallel to the table surface.",
        pattern: &[L, W("is"), W("parallel"), W("to"), W("the"), W("table"), W("surface")],
    },
    Template {
        canonical: "Point A is x cm above the table surface.",
        pattern: &[L, W("is"), Q, W("above"), W("the"), W("table"), W("surface")],
    },
    Template {
        canonical: "Vector A is perpendicular to the table surface.",
        pattern: &[
            L,
            W("is"),
            W("perpendicular"),
            W("to"),
            W("the"),
            W("table"),
            W("surface"),
        ],
    },
    Template {
        canonical: "Vector A points downward.",
        pattern: &[L, W("points"), W("downward")],
    },
];

const ACTION_TEMPLATES: [Template; 4] = [
    Template {
        canonical: "Move vertically down x cm.",
        pattern: &[W("move"), W("vertically"), W("down"), Q],
    },
    Template {
        canonical: "Move forward x cm.",
        pattern: &[W("move"), W("forward"), Q],
    },
    Template {
        canonical: "Open the gripper.",
        pattern: &[W("open"), W("the"), W("gripper")],
    },
    Template {
        canonical: "End-effector rotates 180 degrees.",
        pattern: &[W("end-effector"), W("rotates"), W("180"), W("degrees")],
    },
];

const CM_WORDS: [&str; 5] = ["cm", "centimeter", "centimeters", "centimetre", "centimetres"];

#[derive(Debug)]
enum Slot {
    Label(PartRef),
    Qty(Distance),
}

/// Outcome of matching a token stream against one template.
enum Match {
    Ok(Vec<Slot>),
    BadUnit(String),
    BadLabel(String),
    No,
}

fn match_template(tokens: &[Token], pattern: &[Pat]) -> Match {
    let mut slots = Vec::new();
    let mut bad_unit = None;
    let mut bad_label = None;
    let mut i = 0;
    for pat in pattern {
        match pat {
            Pat::Lit(w) => {
                if tokens.get(i).map(Token::text) != Some(*w) {
                    return Match::No;
                }
                i += 1;
            }
            Pat::Label => {
                let kind = match tokens.get(i) {
                    Some(Token::Word(w)) => match LabelKind::from_word(w) {
                        Some(k) => k,
                        None => return Match::No,
                    },
                    _ => return Match::No,
                };
                let Some(Token::Number { text, .. }) = tokens.get(i + 1) else {
                    return Match::No;
                };
                match text.parse::<u32>() {
                    Ok(id) => slots.push(Slot::Label(PartRef { id, label: kind })),
                    Err(_) => {
                        bad_label.get_or_insert(text.clone());
                        slots.push(Slot::Label(PartRef { id: 0, label: kind }));
                    }
                }
                i += 2;
            }
            Pat::Qty => {
                let Some(Token::Number { value, .. }) = tokens.get(i) else {
                    return Match::No;
                };
                let Some(Token::Word(unit)) = tokens.get(i + 1) else {
                    return Match::No;
                };
                if !CM_WORDS.contains(&unit.as_str()) {
                    bad_unit.get_or_insert(unit.clone());
                }
                slots.push(Slot::Qty(Distance::from_cm(*value)));
                i += 2;
            }
        }
    }
    if i != tokens.len() {
        return Match::No;
    }
    if let Some(t) = bad_label {
        return Match::BadLabel(t);
    }
    if let Some(u) = bad_unit {
        return Match::BadUnit(u);
    }
    Match::Ok(slots)
}

/// Token-level edit distance to a template, counting slot tokens by class.
fn template_distance(tokens: &[Token], pattern: &[Pat]) -> usize {
    #[derive(Clone, Copy)]
    enum Class {
        Lit(&'static str),
        Kind,
        Int,
        Num,
        Unit,
    }
    let classes: Vec<Class> = pattern
        .iter()
        .flat_map(|p| match p {
            Pat::Lit(w) => vec![Class::Lit(w)],
            Pat::Label => vec![Class::Kind, Class::Int],
            Pat::Qty => vec![Class::Num, Class::Unit],
        })
        .collect();
    let fits = |t: &Token, c: Class| match (t, c) {
        (t, Class::Lit(w)) => t.text() == w,
        (Token::Word(w), Class::Kind) => LabelKind::from_word(w).is_some(),
        (Token::Number { .. }, Class::Int) | (Token::Number { .. }, Class::Num) => true,
        (Token::Word(_), Class::Unit) => true,
        _ => false,
    };
    let mut prev: Vec<usize> = (0..=classes.len()).collect();
    for (i, t) in tokens.iter().enumerate() {
        let mut cur = vec![i + 1; classes.len() + 1];
        for (j, &c) in classes.iter().enumerate() {
            let sub = prev[j] + usize::from(!fits(t, c));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[classes.len()]
}

fn closest(tokens: &[Token], templates: &[Template]) -> &'static str {
    templates
        .iter()
        .min_by_key(|t| template_distance(tokens, t.pattern))
        .map(|t| t.canonical)
        .expect("template list is nonempty")
}

/// Index of the matching template and its slots.
fn parse_with(text: &str, templates: &[Template]) -> Result<(usize, Vec<Slot>), ParseError> {
    let tokens = tokenize(text);
    for (idx, t) in templates.iter().enumerate() {
        match match_template(&tokens, t.pattern) {
            Match::Ok(slots) => return Ok((idx, slots)),
            Match::BadUnit(unit) => {
                return Err(ParseError::BadUnit {
                    text: text.to_string(),
                    unit,
                })
            }
            Match::BadLabel(token) => {
                return Err(ParseError::BadLabel {
                    text: text.to_string(),
                    token,
                })
            }
            Match::No => {}
        }
    }
    Err(ParseError::UnrecognizedTemplate {
        text: text.to_string(),
        closest: closest(&tokens, templates),
    })
}

fn label(slots: &[Slot], i: usize) -> PartRef {
    match slots[i] {
        Slot::Label(r) => r,
        Slot::Qty(_) => unreachable!("template slot order"),
    }
}

fn qty(slots: &[Slot], i: usize) -> Distance {
    match slots[i] {
        Slot::Qty(d) => d,
        Slot::Label(_) => unreachable!("template slot order"),
    }
}

pub fn parse_constraint(text: &str) -> Result<Constraint, ParseError> {
    let (idx, s) = parse_with(text, &CONSTRAINT_TEMPLATES)?;
    Ok(match idx {
        0 => Constraint::CollinearOpposite {
            a: label(&s, 0),
            b: label(&s, 1),
        },
        1 => Constraint::TargetAlong {
            a: label(&s, 0),
            distance: qty(&s, 1),
            b: label(&s, 2),
            c: label(&s, 3),
        },
        2 => Constraint::ParallelToTable { a: label(&s, 0) },
        3 => Constraint::HeightAboveTable {
            a: label(&s, 0),
            height: qty(&s, 1),
        },
        4 => Constraint::PerpendicularToTable { a: label(&s, 0) },
        5 => Constraint::PointsDownward { a: label(&s, 0) },
        _ => unreachable!("six constraint templates"),
    })
}

pub fn parse_action(text: &str) -> Result<SubsequentAction, ParseError> {
    let (idx, s) = parse_with(text, &ACTION_TEMPLATES)?;
    let positive = |d: Distance| {
        if d.cm() > 0.0 {
            Ok(d)
        } else {
            Err(ParseError::NonPositiveDistance {
                text: text.to_string(),
            })
        }
    };
    Ok(match idx {
        0 => SubsequentAction::MoveVerticallyDown {
            distance: positive(qty(&s, 0))?,
        },
        1 => SubsequentAction::MoveForward {
            distance: positive(qty(&s, 0))?,
        },
        2 => SubsequentAction::OpenGripper,
        3 => SubsequentAction::RotateEndEffector180,
        _ => unreachable!("four action templates"),
    })
}

impl FromStr for Constraint {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_constraint(s)
    }
}

impl FromStr for SubsequentAction {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_action(s)
    }
}

impl From<Constraint> for String {
    fn from(c: Constraint) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for Constraint {
    type Error = ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_constraint(&s)
    }
}

impl From<SubsequentAction> for String {
    fn from(a: SubsequentAction) -> Self {
        a.to_string()
    }
}

impl TryFrom<String> for SubsequentAction {
    type Error = ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_action(&s)
    }
}

/// Constraints for the first target pose followed by the actions after it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub constraints: Vec<Constraint>,
    pub actions: Vec<SubsequentAction>,
}

/// Sentences that failed to parse, with the reason for each.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{} sentence(s) failed to parse: {}", .failures.len(), .failures.iter().map(|(s, e)| format!("{s:?} ({e})")).collect::<Vec<_>>().join("; "))]
pub struct PlanParseError {
    pub failures: Vec<(String, ParseError)>,
}

impl MotionPlan {
    /// Parses raw oracle sentences, collecting every failure.
    pub fn parse(constraints: &[String], actions: &[String]) -> Result<Self, PlanParseError> {
        let mut failures = Vec::new();
        let mut plan = MotionPlan::default();
        for s in constraints {
            match parse_constraint(s) {
                Ok(c) => plan.constraints.push(c),
                Err(e) => failures.push((s.clone(), e)),
            }
        }
        for s in actions {
            match parse_action(s) {
                Ok(a) => plan.actions.push(a),
                Err(e) => failures.push((s.clone(), e)),
            }
        }
        if failures.is_empty() {
            Ok(plan)
        } else {
            Err(PlanParseError { failures })
        }
    }
}
