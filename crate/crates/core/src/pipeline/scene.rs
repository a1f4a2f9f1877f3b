//! Scene manifests: one JSON file that references every image by a path
//! relative to the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, DepthImage, Pose, Vec3};
use crate::io::{load_depth, load_mask_png, load_mask_rle, load_rgb, read_json, IoError};
use crate::mask::{BinaryMask, PartMask, RleMask};
use crate::solver::TableFrame;

pub const SCENE_FORMAT: &str = "copa-scene/v1";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> SceneError {
    SceneError::Invalid(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub name: String,
    pub model: CameraModel,
    /// `.pfm` in meters, or 16-bit `.png` multiplied by `depth_scale`.
    pub depth: String,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_mask: Option<String>,
}

fn origin() -> Vec3 {
    Vec3::zeros()
}

fn default_depth_scale() -> f64 {
    0.001
}

/// A PNG path, an RLE JSON path, or an inline RLE block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSource {
    Path(String),
    Rle { rle: RleMask },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartEntry {
    pub id: u32,
    pub name: String,
    pub camera: String,
    pub mask: MaskSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: u32,
    pub name: String,
    /// Overrides the default of "movable iff grasped".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movable: Option<bool>,
    pub parts: Vec<PartEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizeSpec {
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateSource {
    File(String),
    Synthesize { synthesize: SynthesizeSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationEntry {
    pub cameras: Vec<CameraEntry>,
}

/// Defaults for the CLI when `--instruction` or `--oracle` are omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDefaults {
    pub instruction: String,
    pub oracle: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub format: String,
    pub cameras: Vec<CameraEntry>,
    pub objects: Vec<ObjectEntry>,
    #[serde(default = "origin")]
    pub arm_reference: Vec3,
    #[serde(default)]
    pub robot_base: Pose,
    pub grasp_candidates: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_after_grasp: Option<ObservationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskDefaults>,
}

#[derive(Clone, Debug)]
pub struct SceneCamera {
    pub name: String,
    pub model: CameraModel,
    pub depth: DepthImage,
    pub rgb: Option<RgbImage>,
    /// Path of the RGB image relative to the scene directory.
    pub rgb_ref: Option<String>,
    pub arm_mask: Option<BinaryMask>,
}

#[derive(Clone, Debug)]
pub struct SceneObject {
    pub id: u32,
    pub name: String,
    pub movable: Option<bool>,
    pub parts: Vec<PartMask>,
}

#[derive(Clone, Debug)]
pub enum GraspSource {
    File(PathBuf),
    Synthesize(SynthesizeSpec),
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub dir: PathBuf,
    pub cameras: Vec<SceneCamera>,
    pub objects: Vec<SceneObject>,
    pub arm_reference: Vec3,
    pub robot_base: Pose,
    pub grasp_source: GraspSource,
    pub table: TableFrame,
    /// Post-grasp observation; `None` reuses the initial one.
    pub after_grasp: Option<Vec<SceneCamera>>,
    pub task: Option<TaskDefaults>,
}

impl Scene {
    pub fn camera(&self, name: &str) -> Option<&SceneCamera> {
        self.cameras.iter().find(|c| c.name == name)
    }

    /// Camera of the post-grasp observation, falling back to the initial one.
    pub fn camera_after_grasp(&self, name: &str) -> Option<&SceneCamera> {
        match &self.after_grasp {
            Some(cams) => cams.iter().find(|c| c.name == name),
            None => self.camera(name),
        }
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_of_part(&self, part: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.parts.iter().any(|p| p.id == part))
    }

    pub fn part(&self, id: u32) -> Option<&PartMask> {
        self.objects.iter().flat_map(|o| &o.parts).find(|p| p.id == id)
    }

    pub fn all_parts(&self) -> impl Iterator<Item = &PartMask> {
        self.objects.iter().flat_map(|o| &o.parts)
    }
}

fn load_camera(dir: &Path, c: &CameraEntry) -> Result<SceneCamera, SceneError> {
    let (w, h) = (c.model.width, c.model.height);
    let depth = load_depth(&dir.join(&c.depth), c.depth_scale)?;
    if (depth.width, depth.height) != (w, h) {
        return Err(invalid(format!(
            "camera {}: depth is {}x{}, camera is {w}x{h}",
            c.name, depth.width, depth.height
        )));
    }
    let rgb = c.rgb.as_ref().map(|p| load_rgb(&dir.join(p))).transpose()?;
    if let Some(img) = &rgb {
        if img.dimensions() != (w, h) {
            return Err(invalid(format!("camera {}: rgb size differs from camera", c.name)));
        }
    }
    let arm_mask = c
        .arm_mask
        .as_ref()
        .map(|p| load_mask(dir, &MaskSource::Path(p.clone())))
        .transpose()?;
    if let Some(m) = &arm_mask {
        if (m.width, m.height) != (w, h) {
            return Err(invalid(format!("camera {}: arm mask size differs from camera", c.name)));
        }
    }
    Ok(SceneCamera {
        name: c.name.clone(),
        model: c.model.clone(),
        depth,
        rgb,
        rgb_ref: c.rgb.clone(),
        arm_mask,
    })
}

fn load_mask(dir: &Path, src: &MaskSource) -> Result<BinaryMask, SceneError> {
    match src {
        MaskSource::Path(p) if p.to_ascii_lowercase().ends_with(".json") => {
            Ok(load_mask_rle(&dir.join(p))?)
        }
        MaskSource::Path(p) => Ok(load_mask_png(&dir.join(p))?),
        MaskSource::Rle { rle } => rle.decode().map_err(SceneError::Invalid),
    }
}

fn load_cameras(dir: &Path, entries: &[CameraEntry]) -> Result<Vec<SceneCamera>, SceneError> {
    if entries.is_empty() {
        return Err(invalid("at least one camera is required"));
    }
    let mut names = BTreeSet::new();
    for c in entries {
        if !names.insert(c.name.as_str()) {
            return Err(invalid(format!("duplicate camera name {:?}", c.name)));
        }
    }
    entries.iter().map(|c| load_camera(dir, c)).collect()
}

impl Scene {
    pub fn load(manifest_path: &Path) -> Result<Self, SceneError> {
        let m: SceneManifest = read_json(manifest_path)?;
        let dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self::from_manifest(m, dir)
    }

    pub fn from_manifest(m: SceneManifest, dir: PathBuf) -> Result<Self, SceneError> {
        if m.format != SCENE_FORMAT {
            return Err(invalid(format!(
                "format is {:?}, expected {SCENE_FORMAT:?}",
                m.format
            )));
        }
        let cameras = load_cameras(&dir, &m.cameras)?;
        let after_grasp = m
            .observation_after_grasp
            .as_ref()
            .map(|o| load_cameras(&dir, &o.cameras))
            .transpose()?;
        if let Some(after) = &after_grasp {
            for c in &cameras {
                let same = after
                    .iter()
                    .find(|a| a.name == c.name)
                    .is_some_and(|a| (a.model.width, a.model.height) == (c.model.width, c.model.height));
                if !same {
                    return Err(invalid(format!(
                        "post-grasp observation lacks a matching camera {:?}",
                        c.name
                    )));
                }
            }
        }
        let mut object_ids = BTreeSet::new();
        let mut part_ids = BTreeSet::new();
        let mut objects = Vec::with_capacity(m.objects.len());
        for o in &m.objects {
            if !object_ids.insert(o.id) {
                return Err(invalid(format!("duplicate object id {}", o.id)));
            }
            let mut parts = Vec::with_capacity(o.parts.len());
            for p in &o.parts {
                if !part_ids.insert(p.id) {
                    return Err(invalid(format!("part id {} appears twice", p.id)));
                }
                let cam = cameras
                    .iter()
                    .find(|c| c.name == p.camera)
                    .ok_or_else(|| invalid(format!("part {} names unknown camera {:?}", p.id, p.camera)))?;
                let mask = load_mask(&dir, &p.mask)?;
                if (mask.width, mask.height) != (cam.model.width, cam.model.height) {
                    return Err(invalid(format!(
                        "part {} mask is {}x{}, camera {:?} is {}x{}",
                        p.id, mask.width, mask.height, cam.name, cam.model.width, cam.model.height
                    )));
                }
                parts.push(PartMask::new(p.id, &p.camera, mask).with_name(&p.name));
            }
            objects.push(SceneObject {
                id: o.id,
                name: o.name.clone(),
                movable: o.movable,
                parts,
            });
        }
        let grasp_source = match &m.grasp_candidates {
            CandidateSource::File(p) => GraspSource::File(dir.join(p)),
            CandidateSource::Synthesize { synthesize } => {
                if synthesize.n == 0 {
                    return Err(invalid("synthesize.n must be at least 1"));
                }
                GraspSource::Synthesize(*synthesize)
            }
        };
        Ok(Scene {
            dir,
            cameras,
            objects,
            arm_reference: m.arm_reference,
            robot_base: m.robot_base,
            grasp_source,
            table: m.table.unwrap_or_default(),
            after_grasp,
            task: m.task,
        })
    }
}
