//! Synthetic tabletop scenes built from boxes and ray cast into depth, RGB
//! and per-part masks, plus the scripted oracle and manifest for each.
//!
//! Rendering is exact: no noise is added, so regenerating a fixture
//! reproduces its files byte for byte.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{unit, CameraModel, DepthImage, Pose, Rotation, UnitVec3, Vec3};
use crate::grasp::{gripper_orientation, GraspCandidate};
use crate::io::{save_mask_png, save_pfm, save_rgb, write_json, IoError};
use crate::mask::BinaryMask;
use crate::oracle::{
    ConstraintResponse, GroundingResponse, Phase, Purpose, ScriptEntry, ScriptResponse,
};
use crate::pipeline::scene::{
    CameraEntry, CandidateSource, MaskSource, ObjectEntry, PartEntry, SceneManifest,
    SynthesizeSpec, TaskDefaults, SCENE_FORMAT,
};
use crate::solver::TableFrame;

pub const FIXTURE_NAMES: [&str; 5] = [
    "hammer-nail",
    "spoon-into-cup",
    "open-drawer",
    "press-button",
    "insert-flower",
];

pub const IMAGE_WIDTH: u32 = 640;
pub const IMAGE_HEIGHT: u32 = 480;
pub const FOCAL: f64 = 600.0;
/// Height of the table top in every fixture.
pub const TABLE_Z: f64 = 0.07;
pub const CAMERA_NAME: &str = "front";

const BACKGROUND: [u8; 3] = [38, 40, 48];
const TABLE_COLOR: [u8; 3] = [150, 120, 90];
const ARM_COLOR: [u8; 3] = [200, 200, 205];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture {0:?}")]
    Unknown(String),
    #[error("fixture {fixture}: part {part} covers {pixels} pixels")]
    Invisible { fixture: String, part: u32, pixels: usize },
    #[error("fixture {fixture}: {message}")]
    Camera { fixture: String, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Box face, named by its outward local axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Face {
    fn from_axis(axis: usize, positive: bool) -> Self {
        match (axis, positive) {
            (0, true) => Face::PosX,
            (0, false) => Face::NegX,
            (1, true) => Face::PosY,
            (1, false) => Face::NegY,
            (2, true) => Face::PosZ,
            _ => Face::NegZ,
        }
    }

    fn local_normal(self) -> Vec3 {
        match self {
            Face::PosX => Vec3::x(),
            Face::NegX => -Vec3::x(),
            Face::PosY => Vec3::y(),
            Face::NegY => -Vec3::y(),
            Face::PosZ => Vec3::z(),
            Face::NegZ => -Vec3::z(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cuboid {
    pub center: Vec3,
    pub half: Vec3,
    pub rotation: Rotation,
}

impl Cuboid {
    pub fn axis_aligned(center: Vec3, half: Vec3) -> Self {
        Self {
            center,
            half,
            rotation: Rotation::identity(),
        }
    }

    /// Entry distance and face for a ray from outside the box.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, Face)> {
        let (o, d) = if self.rotation == Rotation::identity() {
            (origin - self.center, *dir)
        } else {
            let inv = self.rotation.inverse();
            (inv.rotate(&(origin - self.center)), inv.rotate(dir))
        };
        let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut face = Face::PosZ;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if o[i].abs() > self.half[i] {
                    return None;
                }
                continue;
            }
            let t1 = (-self.half[i] - o[i]) / d[i];
            let t2 = (self.half[i] - o[i]) / d[i];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if lo > t_near {
                t_near = lo;
                // entering through the face the ray travels against
                face = Face::from_axis(i, d[i] < 0.0);
            }
            t_far = t_far.min(hi);
        }
        (t_near <= t_far && t_near > 0.0).then_some((t_near, face))
    }

    pub fn face_normal(&self, face: Face) -> Vec3 {
        self.rotation.rotate(&face.local_normal())
    }
}

/// What a ray hit stands for in the masks.
#[derive(Clone, Debug, PartialEq)]
pub enum Role {
    Scenery,
    Arm,
    /// Whole box is one part.
    Part(u32),
    /// Listed faces are parts; other faces fall back to `rest`.
    Faces { faces: Vec<(Face, u32)>, rest: Option<u32> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solid {
    pub cuboid: Cuboid,
    pub color: [u8; 3],
    pub role: Role,
}

impl Solid {
    fn part_at(&self, face: Face) -> Option<u32> {
        match &self.role {
            Role::Part(id) => Some(*id),
            Role::Faces { faces, rest } => faces
                .iter()
                .find(|(f, _)| *f == face)
                .map(|(_, id)| *id)
                .or(*rest),
            Role::Scenery | Role::Arm => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSpec {
    pub id: u32,
    pub name: &'static str,
    pub parts: Vec<(u32, &'static str)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSpec {
    pub point: Vec3,
    pub approach: Vec3,
    /// Direction the fingers close across.
    pub along: Vec3,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CandidatePlan {
    Listed(Vec<CandidateSpec>),
    Synthesize { n: usize, seed: u64 },
}

/// Canned oracle answers for one instruction.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptSpec {
    pub grasp_object: u32,
    pub grasp_part: u32,
    pub task_objects: Vec<u32>,
    pub task_parts: Vec<u32>,
    pub constraints: Vec<&'static str>,
    pub actions: Vec<&'static str>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSpec {
    pub name: &'static str,
    pub instruction: &'static str,
    pub eye: Vec3,
    pub target: Vec3,
    pub arm_reference: Vec3,
    pub solids: Vec<Solid>,
    pub objects: Vec<ObjectSpec>,
    pub candidates: CandidatePlan,
    pub script: ScriptSpec,
    /// Store masks as RLE JSON instead of PNG.
    pub rle_masks: bool,
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn solid(center: Vec3, half: Vec3, color: [u8; 3], role: Role) -> Solid {
    Solid {
        cuboid: Cuboid::axis_aligned(center, half),
        color,
        role,
    }
}

fn table() -> Solid {
    solid(v(0.6, 0.0, TABLE_Z / 2.0), v(0.6, 0.8, TABLE_Z / 2.0), TABLE_COLOR, Role::Scenery)
}

/// A wrist link hanging into view; its mask is the arm mask.
fn arm(at: Vec3) -> Solid {
    solid(at, v(0.03, 0.03, 0.12), ARM_COLOR, Role::Arm)
}

fn robot_object() -> ObjectSpec {
    ObjectSpec {
        id: 9,
        name: "robot arm",
        parts: vec![(9, "wrist")],
    }
}

fn top_down(point: Vec3, along: Vec3, score: f64) -> CandidateSpec {
    CandidateSpec {
        point,
        approach: -Vec3::z(),
        along,
        score,
    }
}

fn hammer_nail() -> FixtureSpec {
    let wood = [170, 130, 80];
    let steel = [120, 125, 135];
    FixtureSpec {
        name: "hammer-nail",
        instruction: "Hammer the nail.",
        eye: v(0.95, 0.0, 0.55),
        target: v(0.5, 0.0, 0.1),
        arm_reference: v(0.0, 0.0, TABLE_Z),
        solids: vec![
            table(),
            // head; its +x face is the striking surface
            solid(
                v(0.45, 0.0, 0.09),
                v(0.05, 0.015, 0.02),
                steel,
                Role::Faces {
                    faces: vec![(Face::PosX, 1)],
                    rest: Some(4),
                },
            ),
            solid(v(0.45, -0.12, 0.082), v(0.012, 0.105, 0.012), wood, Role::Part(2)),
            // block the nail is driven into
            solid(v(0.65, 0.0, 0.08), v(0.05, 0.05, 0.01), [190, 170, 120], Role::Scenery),
            solid(v(0.65, 0.0, 0.094), v(0.002, 0.002, 0.004), steel, Role::Scenery),
            solid(
                v(0.65, 0.0, 0.099),
                v(0.01, 0.01, 0.001),
                [90, 95, 105],
                Role::Faces {
                    faces: vec![(Face::PosZ, 3)],
                    rest: None,
                },
            ),
            arm(v(0.3, 0.3, 0.4)),
        ],
        objects: vec![
            ObjectSpec {
                id: 1,
                name: "hammer",
                parts: vec![(1, "striking surface"), (2, "handle"), (4, "head")],
            },
            ObjectSpec {
                id: 2,
                name: "nail",
                parts: vec![(3, "nail head")],
            },
            robot_object(),
        ],
        candidates: CandidatePlan::Listed(vec![
            top_down(v(0.45, -0.06, 0.094), Vec3::y(), 0.55),
            top_down(v(0.45, -0.18, 0.094), Vec3::y(), 0.71),
            top_down(v(0.45, 0.0, 0.11), Vec3::x(), 0.93),
            top_down(v(0.65, 0.0, 0.1), Vec3::x(), 0.88),
            top_down(v(0.45, -0.12, 0.094), Vec3::y(), 0.62),
        ]),
        script: ScriptSpec {
            grasp_object: 1,
            grasp_part: 2,
            task_objects: vec![1, 2],
            task_parts: vec![1, 2, 3],
            constraints: vec![
                "Vector 1 and Vector 3 are on the same line, with the opposite direction.",
                "The target position of Point 1 is 5 cm along Vector 3 from Point 3's current position.",
            ],
            actions: vec!["Move vertically down 7 cm.", "Open the gripper."],
        },
        rle_masks: false,
    }
}

fn spoon_into_cup() -> FixtureSpec {
    let metal = [175, 180, 190];
    FixtureSpec {
        name: "spoon-into-cup",
        instruction: "Put spoon into the cup.",
        eye: v(0.95, 0.0, 0.55),
        target: v(0.5, 0.0, 0.1),
        arm_reference: v(0.0, 0.0, TABLE_Z),
        solids: vec![
            table(),
            solid(v(0.42, -0.10, 0.075), v(0.008, 0.08, 0.005), metal, Role::Part(1)),
            solid(v(0.42, -0.215, 0.076), v(0.022, 0.035, 0.006), metal, Role::Part(3)),
            solid(
                v(0.65, 0.12, 0.12),
                v(0.04, 0.04, 0.05),
                [60, 120, 190],
                Role::Faces {
                    faces: vec![(Face::PosZ, 2)],
                    rest: Some(4),
                },
            ),
            arm(v(0.3, 0.3, 0.4)),
        ],
        objects: vec![
            ObjectSpec {
                id: 1,
                name: "spoon",
                parts: vec![(1, "handle"), (3, "bowl")],
            },
            ObjectSpec {
                id: 2,
                name: "cup",
                parts: vec![(2, "opening"), (4, "body")],
            },
            robot_object(),
        ],
        candidates: CandidatePlan::Synthesize { n: 4, seed: 7 },
        script: ScriptSpec {
            grasp_object: 1,
            grasp_part: 1,
            task_objects: vec![1, 2],
            task_parts: vec![1, 2],
            constraints: vec![
                "Vector 1 is perpendicular to the table surface.",
                "Vector 1 points downward.",
                "The target position of Point 1 is 10 cm along Vector 2 from Point 2's current position.",
            ],
            actions: vec!["Move vertically down 5 cm.", "Open the gripper."],
        },
        rle_masks: false,
    }
}

fn open_drawer() -> FixtureSpec {
    FixtureSpec {
        name: "open-drawer",
        instruction: "Open the drawer.",
        eye: v(0.0, 0.0, 0.45),
        target: v(0.6, 0.0, 0.15),
        arm_reference: v(0.0, -0.35, TABLE_Z),
        solids: vec![
            table(),
            solid(
                v(0.75, 0.0, 0.17),
                v(0.15, 0.15, 0.10),
                [180, 150, 110],
                Role::Faces {
                    faces: vec![(Face::NegX, 1)],
                    rest: None,
                },
            ),
            solid(v(0.592, 0.0, 0.2), v(0.008, 0.07, 0.006), [60, 60, 66], Role::Part(2)),
            arm(v(0.35, -0.16, 0.32)),
        ],
        objects: vec![
            ObjectSpec {
                id: 1,
                name: "drawer",
                parts: vec![(1, "front"), (2, "handle")],
            },
            robot_object(),
        ],
        candidates: CandidatePlan::Listed(vec![
            CandidateSpec {
                point: v(0.586, 0.03, 0.2),
                approach: Vec3::x(),
                along: Vec3::y(),
                score: 0.64,
            },
            CandidateSpec {
                point: v(0.6, 0.0, 0.13),
                approach: Vec3::x(),
                along: Vec3::y(),
                score: 0.9,
            },
            CandidateSpec {
                point: v(0.586, -0.01, 0.2),
                approach: Vec3::x(),
                along: Vec3::y(),
                score: 0.77,
            },
        ]),
        script: ScriptSpec {
            grasp_object: 1,
            grasp_part: 2,
            task_objects: vec![1],
            task_parts: vec![1, 2],
            constraints: vec![
                "The target position of Point 2 is 10 cm along Vector 1 from Point 2's current position.",
                "Vector 2 is parallel to the table surface.",
            ],
            actions: vec!["Open the gripper."],
        },
        rle_masks: true,
    }
}

fn press_button() -> FixtureSpec {
    FixtureSpec {
        name: "press-button",
        instruction: "Press the button with the stick.",
        eye: v(0.95, 0.0, 0.55),
        target: v(0.5, 0.0, 0.1),
        arm_reference: v(0.0, 0.0, TABLE_Z),
        solids: vec![
            table(),
            solid(v(0.45, -0.15, 0.078), v(0.008, 0.10, 0.008), [120, 90, 60], Role::Part(1)),
            solid(v(0.65, 0.1, 0.085), v(0.04, 0.04, 0.015), [70, 70, 75], Role::Scenery),
            solid(
                v(0.65, 0.1, 0.105),
                v(0.012, 0.012, 0.005),
                [210, 40, 40],
                Role::Faces {
                    faces: vec![(Face::PosZ, 2)],
                    rest: None,
                },
            ),
            arm(v(0.3, 0.3, 0.4)),
        ],
        objects: vec![
            ObjectSpec {
                id: 1,
                name: "stick",
                parts: vec![(1, "stick")],
            },
            ObjectSpec {
                id: 2,
                name: "button",
                parts: vec![(2, "button top")],
            },
            robot_object(),
        ],
        candidates: CandidatePlan::Listed(vec![
            top_down(v(0.45, -0.12, 0.086), Vec3::y(), 0.58),
            top_down(v(0.65, 0.1, 0.11), Vec3::x(), 0.95),
            top_down(v(0.45, -0.09, 0.086), Vec3::y(), 0.81),
        ]),
        script: ScriptSpec {
            grasp_object: 1,
            grasp_part: 1,
            task_objects: vec![1, 2],
            task_parts: vec![1, 2],
            constraints: vec![
                "Vector 1 and Vector 2 are on the same line, with the opposite direction.",
                "The target position of Point 1 is 5 cm along Vector 2 from Point 2's current position.",
            ],
            actions: vec!["Move vertically down 6 cm."],
        },
        rle_masks: false,
    }
}

fn insert_flower() -> FixtureSpec {
    FixtureSpec {
        name: "insert-flower",
        instruction: "Put flowers into the vase.",
        eye: v(0.95, 0.0, 0.55),
        target: v(0.5, 0.0, 0.1),
        arm_reference: v(0.0, 0.0, TABLE_Z),
        solids: vec![
            table(),
            solid(v(0.45, -0.16, 0.075), v(0.006, 0.10, 0.005), [60, 150, 60], Role::Part(1)),
            solid(v(0.45, -0.03, 0.085), v(0.03, 0.03, 0.015), [220, 90, 160], Role::Part(3)),
            solid(
                v(0.68, 0.12, 0.15),
                v(0.04, 0.04, 0.08),
                [90, 160, 170],
                Role::Faces {
                    faces: vec![(Face::PosZ, 2)],
                    rest: Some(4),
                },
            ),
            arm(v(0.3, 0.3, 0.4)),
        ],
        objects: vec![
            ObjectSpec {
                id: 1,
                name: "flowers",
                parts: vec![(1, "stem"), (3, "petals")],
            },
            ObjectSpec {
                id: 2,
                name: "vase",
                parts: vec![(2, "opening"), (4, "body")],
            },
            robot_object(),
        ],
        candidates: CandidatePlan::Listed(vec![
            top_down(v(0.45, -0.03, 0.1), Vec3::x(), 0.9),
            top_down(v(0.45, -0.14, 0.08), Vec3::y(), 0.74),
            top_down(v(0.45, -0.2, 0.08), Vec3::y(), 0.69),
        ]),
        script: ScriptSpec {
            grasp_object: 1,
            grasp_part: 1,
            task_objects: vec![1, 2],
            task_parts: vec![1, 2],
            constraints: vec![
                "Vector 1 is perpendicular to the table surface.",
                "Vector 1 points downward.",
                "The target position of Point 1 is 8 cm along Vector 2 from Point 2's current position.",
            ],
            actions: vec!["Move vertically down 6 cm.", "Open the gripper."],
        },
        rle_masks: false,
    }
}

pub fn fixture_spec(name: &str) -> Result<FixtureSpec, FixtureError> {
    match name {
        "hammer-nail" => Ok(hammer_nail()),
        "spoon-into-cup" => Ok(spoon_into_cup()),
        "open-drawer" => Ok(open_drawer()),
        "press-button" => Ok(press_button()),
        "insert-flower" => Ok(insert_flower()),
        other => Err(FixtureError::Unknown(other.to_string())),
    }
}

/// Ray-cast images of a fixture.
#[derive(Clone, Debug)]
pub struct Rendered {
    pub camera: CameraModel,
    pub depth: DepthImage,
    pub rgb: RgbImage,
    pub arm: BinaryMask,
    /// `(part id, mask)` in first-appearance order of `spec.objects`.
    pub parts: Vec<(u32, BinaryMask)>,
}

pub fn render(spec: &FixtureSpec) -> Result<Rendered, FixtureError> {
    let camera = CameraModel::look_at(spec.eye, spec.target, FOCAL, IMAGE_WIDTH, IMAGE_HEIGHT).map_err(|e| {
        FixtureError::Camera {
            fixture: spec.name.into(),
            message: e.to_string(),
        }
    })?;
    let (w, h) = (IMAGE_WIDTH, IMAGE_HEIGHT);
    let origin = camera.center();
    let axis = camera.optical_axis().into_inner();
    let light = unit(v(0.3, 0.2, 1.0)).expect("nonzero").into_inner();
    let mut depth = DepthImage::filled(w, h, 0.0);
    let mut rgb = RgbImage::from_pixel(w, h, Rgb(BACKGROUND));
    let mut arm = BinaryMask::new(w, h);
    let ids: Vec<u32> = spec.objects.iter().flat_map(|o| o.parts.iter().map(|p| p.0)).collect();
    let mut parts: Vec<(u32, BinaryMask)> = ids.iter().map(|&id| (id, BinaryMask::new(w, h))).collect();
    for py in 0..h {
        for px in 0..w {
            let ray = camera.pixel_ray(px as f64, py as f64).into_inner();
            let hit = spec
                .solids
                .iter()
                .filter_map(|s| s.cuboid.intersect(&origin, &ray).map(|(t, f)| (t, f, s)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((t, face, s)) = hit else {
                continue;
            };
            depth.set(px, py, (t * ray.dot(&axis)) as f32);
            let shade = 0.45 + 0.55 * s.cuboid.face_normal(face).dot(&light).max(0.0);
            rgb.put_pixel(px, py, Rgb(s.color.map(|c| (c as f64 * shade).round() as u8)));
            if s.role == Role::Arm {
                arm.set(px, py, true);
            }
            if let Some(id) = s.part_at(face) {
                if let Some((_, m)) = parts.iter_mut().find(|(pid, _)| *pid == id) {
                    m.set(px, py, true);
                }
            }
        }
    }
    // the robot's own part is whatever the arm covers
    for o in &spec.objects {
        if o.id == robot_object().id {
            for (id, _) in &o.parts {
                if let Some((_, m)) = parts.iter_mut().find(|(pid, _)| pid == id) {
                    *m = arm.clone();
                }
            }
        }
    }
    for (id, m) in &parts {
        let n = m.count();
        if n < 100 {
            return Err(FixtureError::Invisible {
                fixture: spec.name.into(),
                part: *id,
                pixels: n,
            });
        }
    }
    Ok(Rendered {
        camera,
        depth,
        rgb,
        arm,
        parts,
    })
}

pub fn candidates(spec: &[CandidateSpec]) -> Vec<GraspCandidate> {
    spec.iter()
        .map(|c| {
            let approach = UnitVec3::new_normalize(c.approach);
            GraspCandidate {
                pose: Pose::new(c.point, gripper_orientation(&approach, Some(&c.along))),
                grasp_point: c.point,
                width: 0.04,
                height: 0.02,
                depth: 0.02,
                score: c.score,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ScriptFile {
    entries: Vec<ScriptEntry>,
}

pub fn script_entries(instruction: &str, s: &ScriptSpec) -> Vec<ScriptEntry> {
    let ground = |phase, purpose, selected: Vec<u32>| ScriptEntry {
        phase,
        purpose,
        instruction: instruction.to_string(),
        response: ScriptResponse::Grounding(GroundingResponse { selected }),
    };
    vec![
        ground(Phase::CoarseObject, Purpose::Grasp, vec![s.grasp_object]),
        ground(Phase::FinePart, Purpose::Grasp, vec![s.grasp_part]),
        ground(Phase::CoarseObject, Purpose::Task, s.task_objects.clone()),
        ground(Phase::FinePart, Purpose::Task, s.task_parts.clone()),
        ScriptEntry {
            phase: Phase::Constraints,
            purpose: Purpose::Task,
            instruction: instruction.to_string(),
            response: ScriptResponse::Constraints(ConstraintResponse {
                constraints: s.constraints.iter().map(|c| c.to_string()).collect(),
                actions: s.actions.iter().map(|a| a.to_string()).collect(),
            }),
        },
    ]
}

/// Writes every file of the fixture into `dir` and returns the manifest path.
pub fn write_fixture(spec: &FixtureSpec, dir: &Path) -> Result<PathBuf, FixtureError> {
    let r = render(spec)?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|source| IoError::Io {
        path: p.to_path_buf(),
        source,
    });
    mkdir(&dir.join("masks"))?;
    save_pfm(&dir.join("depth.pfm"), &r.depth)?;
    save_rgb(&dir.join("rgb.png"), &r.rgb)?;
    save_mask_png(&dir.join("arm_mask.png"), &r.arm)?;

    let mut objects = Vec::new();
    for o in &spec.objects {
        let mut parts = Vec::new();
        for (id, name) in &o.parts {
            let mask = &r.parts.iter().find(|(pid, _)| pid == id).expect("rendered").1;
            let rel = if spec.rle_masks {
                let rel = format!("masks/part_{id}.json");
                write_json(&dir.join(&rel), &mask.to_rle())?;
                rel
            } else {
                let rel = format!("masks/part_{id}.png");
                save_mask_png(&dir.join(&rel), mask)?;
                rel
            };
            parts.push(PartEntry {
                id: *id,
                name: name.to_string(),
                camera: CAMERA_NAME.into(),
                mask: MaskSource::Path(rel),
            });
        }
        objects.push(ObjectEntry {
            id: o.id,
            name: o.name.to_string(),
            movable: None,
            parts,
        });
    }

    let grasp_candidates = match &spec.candidates {
        CandidatePlan::Listed(list) => {
            write_json(&dir.join("candidates.json"), &candidates(list))?;
            CandidateSource::File("candidates.json".into())
        }
        CandidatePlan::Synthesize { n, seed } => CandidateSource::Synthesize {
            synthesize: SynthesizeSpec { n: *n, seed: *seed },
        },
    };
    write_json(
        &dir.join("oracle.json"),
        &ScriptFile {
            entries: script_entries(spec.instruction, &spec.script),
        },
    )?;
    let manifest = SceneManifest {
        format: SCENE_FORMAT.into(),
        cameras: vec![CameraEntry {
            name: CAMERA_NAME.into(),
            model: r.camera,
            depth: "depth.pfm".into(),
            depth_scale: 1.0,
            rgb: Some("rgb.png".into()),
            arm_mask: Some("arm_mask.png".into()),
        }],
        objects,
        arm_reference: spec.arm_reference,
        robot_base: Pose::new(v(0.0, 0.0, TABLE_Z), Rotation::identity()),
        grasp_candidates,
        table: Some(TableFrame {
            point: v(0.5, 0.0, TABLE_Z),
            normal: Vec3::z_axis(),
        }),
        observation_after_grasp: None,
        task: Some(TaskDefaults {
            instruction: spec.instruction.into(),
            oracle: "oracle.json".into(),
        }),
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Regenerates every shipped fixture under `root/<name>/`.
pub fn write_all(root: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    FIXTURE_NAMES
        .iter()
        .map(|name| write_fixture(&fixture_spec(name)?, &root.join(name)))
        .collect()
}
