//! Part modeling: classifies a part mask as slender or not, then abstracts it
//! into a directed 3D vector (slender parts) or an oriented surface (the rest).

pub mod min_rect;
pub mod ransac;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    back_project_where, serde_unit, unit, CameraModel, DepthImage, GeometryError, Pixel,
    UnitVec3, Vec3,
};
use crate::mask::{BinaryMask, PartMask};

pub use min_rect::RotatedRect;
pub use ransac::RansacConfig;

/// Masks with fewer true pixels are rejected as degenerate.
pub const MIN_MASK_PIXELS: usize = 20;

/// Minimum valid-depth pixels a slender mask must cover.
pub const MIN_VECTOR_DEPTH_PIXELS: usize = 10;

/// Length of the drawn normal arrow in annotations, meters.
pub const NORMAL_ARROW_LENGTH: f64 = 0.05;

/// Label placement relative to the labeled pixel.
pub const LABEL_OFFSET: (f64, f64) = (6.0, -6.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartModelError {
    #[error("degenerate mask for part {id}: {reason}")]
    DegenerateMask { id: u32, reason: String },
    #[error("no valid depth near endpoint ({u:.1}, {v:.1}) of part {id}")]
    NoDepth { id: u32, u: f64, v: f64 },
    #[error("part {id} has {found} valid depth points, {needed} required")]
    TooFewPoints { id: u32, found: usize, needed: usize },
    #[error("plane fit for part {id} reached only {ratio:.2} inlier ratio")]
    NoConsensus { id: u32, ratio: f64 },
    #[error("mask of part {id} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    SizeMismatch {
        id: u32,
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("part {id}: {source}")]
    Geometry { id: u32, source: GeometryError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartModelConfig {
    /// Long/short side ratio above which a part is slender.
    pub aspect_threshold: f64,
    /// Side length of the square window used to lift endpoints to 3D.
    pub endpoint_window: u32,
    pub ransac: RansacConfig,
}

impl Default for PartModelConfig {
    fn default() -> Self {
        Self {
            aspect_threshold: 3.0,
            endpoint_window: 5,
            ransac: RansacConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Slender,
    Surface,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorElement {
    pub endpoint_near: Vec3,
    pub endpoint_far: Vec3,
    /// The endpoint farther from the arm reference point.
    pub anchor_point: Vec3,
    /// Unit direction from the other endpoint toward `anchor_point`.
    #[serde(with = "serde_unit")]
    pub direction: UnitVec3,
}

impl VectorElement {
    /// Orders the endpoints so the one farther from `arm_ref` is the anchor.
    pub fn from_endpoints(a: Vec3, b: Vec3, arm_ref: &Vec3) -> Option<Self> {
        let (near, far) = if (b - arm_ref).norm() >= (a - arm_ref).norm() {
            (a, b)
        } else {
            (b, a)
        };
        if (far - near).norm() <= 1e-4 {
            return None;
        }
        Some(Self {
            endpoint_near: near,
            endpoint_far: far,
            anchor_point: far,
            direction: unit(far - near)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceElement {
    pub center: Vec3,
    #[serde(with = "serde_unit")]
    pub normal: UnitVec3,
    pub inlier_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementShape {
    Vector(VectorElement),
    Surface(SurfaceElement),
}

/// A modeled part, identified by its annotation label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricElement {
    pub id: u32,
    pub name: String,
    #[serde(flatten)]
    pub shape: ElementShape,
}

impl GeometricElement {
    pub fn vector(id: u32, name: impl Into<String>, v: VectorElement) -> Self {
        Self {
            id,
            name: name.into(),
            shape: ElementShape::Vector(v),
        }
    }

    pub fn surface(id: u32, name: impl Into<String>, s: SurfaceElement) -> Self {
        Self {
            id,
            name: name.into(),
            shape: ElementShape::Surface(s),
        }
    }

    pub fn kind(&self) -> PartKind {
        match self.shape {
            ElementShape::Vector(_) => PartKind::Slender,
            ElementShape::Surface(_) => PartKind::Surface,
        }
    }

    /// Direction carried by the element: the vector itself, or the surface
    /// normal.
    pub fn direction(&self) -> UnitVec3 {
        match &self.shape {
            ElementShape::Vector(v) => v.direction,
            ElementShape::Surface(s) => s.normal,
        }
    }

    /// Surface center, or the anchor endpoint of a vector.
    pub fn associated_point(&self) -> Vec3 {
        match &self.shape {
            ElementShape::Vector(v) => v.anchor_point,
            ElementShape::Surface(s) => s.center,
        }
    }
}

fn check_mask(mask: &PartMask) -> Result<usize, PartModelError> {
    let n = mask.mask.count();
    if n < MIN_MASK_PIXELS {
        return Err(PartModelError::DegenerateMask {
            id: mask.id,
            reason: format!("{n} pixels, at least {MIN_MASK_PIXELS} required"),
        });
    }
    Ok(n)
}

fn check_shape(mask: &PartMask, w: u32, h: u32) -> Result<(), PartModelError> {
    if mask.mask.width != w || mask.mask.height != h {
        return Err(PartModelError::SizeMismatch {
            id: mask.id,
            got_w: mask.mask.width,
            got_h: mask.mask.height,
            want_w: w,
            want_h: h,
        });
    }
    Ok(())
}

/// Minimum-area rotated rectangle of the mask's pixel squares.
pub fn min_bounding_rect(mask: &BinaryMask) -> Option<RotatedRect> {
    min_rect::min_area_rect(&min_rect::mask_corner_points(mask))
}

pub fn classify_part(mask: &PartMask, cfg: &PartModelConfig) -> Result<PartKind, PartModelError> {
    check_mask(mask)?;
    let rect = min_bounding_rect(&mask.mask).expect("mask has pixels");
    if rect.short < 2.0 {
        return Err(PartModelError::DegenerateMask {
            id: mask.id,
            reason: format!("bounding rectangle short side {:.2} px < 2 px", rect.short),
        });
    }
    Ok(if rect.aspect() > cfg.aspect_threshold {
        PartKind::Slender
    } else {
        PartKind::Surface
    })
}

/// Total-least-squares line through the mask pixel centers:
/// `(centroid, unit direction)` in image coordinates.
pub fn fit_mask_line(mask: &BinaryMask) -> Option<([f64; 2], [f64; 2])> {
    let pts: Vec<[f64; 2]> = mask.pixels().map(|(u, v)| [u as f64, v as f64]).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mu, mv) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for p in &pts {
        let (du, dv) = (p[0] - mu, p[1] - mv);
        suu += du * du;
        suv += du * dv;
        svv += dv * dv;
    }
    // principal axis of the 2x2 scatter matrix
    let theta = 0.5 * (2.0 * suv).atan2(suu - svv);
    Some(([mu, mv], [theta.cos(), theta.sin()]))
}

/// Extreme points where the fitted line still lies inside the mask.
fn line_extremes(mask: &BinaryMask, c: [f64; 2], d: [f64; 2]) -> Option<(Pixel, Pixel)> {
    let (mut s_lo, mut s_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (u, v) in mask.pixels() {
        let s = (u as f64 - c[0]) * d[0] + (v as f64 - c[1]) * d[1];
        s_lo = s_lo.min(s);
        s_hi = s_hi.max(s);
    }
    let step = 0.25;
    let (mut first, mut last) = (None, None);
    let mut s = s_lo - 1.0;
    while s <= s_hi + 1.0 {
        let (u, v) = (c[0] + s * d[0], c[1] + s * d[1]);
        if mask.get_i(u.round() as i64, v.round() as i64) {
            first.get_or_insert(s);
            last = Some(s);
        }
        s += step;
    }
    let (a, b) = (first?, last?);
    Some((
        Pixel::new(c[0] + a * d[0], c[1] + a * d[1]),
        Pixel::new(c[0] + b * d[0], c[1] + b * d[1]),
    ))
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 0 {
        (values[m - 1] + values[m]) / 2.0
    } else {
        values[m]
    })
}

/// Median depth in a `window × window` neighborhood, preferring pixels inside
/// the mask so silhouette edges do not pull in background depth.
fn window_depth(depth: &DepthImage, mask: &BinaryMask, px: Pixel, window: u32) -> Option<f64> {
    let half = (window / 2) as i64;
    let (cu, cv) = (px.u.round() as i64, px.v.round() as i64);
    let mut in_mask = Vec::new();
    let mut any = Vec::new();
    for v in cv - half..=cv + half {
        for u in cu - half..=cu + half {
            if u < 0 || v < 0 || u >= depth.width as i64 || v >= depth.height as i64 {
                continue;
            }
            if let Some(d) = depth.valid(u as u32, v as u32) {
                any.push(d);
                if mask.get(u as u32, v as u32) {
                    in_mask.push(d);
                }
            }
        }
    }
    median(&mut in_mask).or_else(|| median(&mut any))
}

pub fn fit_vector(
    mask: &PartMask,
    depth: &DepthImage,
    cam: &CameraModel,
    arm_ref: &Vec3,
    cfg: &PartModelConfig,
) -> Result<VectorElement, PartModelError> {
    check_shape(mask, depth.width, depth.height)?;
    let covered = mask
        .mask
        .pixels()
        .filter(|&(u, v)| depth.valid(u, v).is_some())
        .count();
    if covered < MIN_VECTOR_DEPTH_PIXELS {
        if covered == 0 {
            let (u, v) = mask.mask.pixels().next().map_or((0, 0), |p| p);
            return Err(PartModelError::NoDepth {
                id: mask.id,
                u: u as f64,
                v: v as f64,
            });
        }
        return Err(PartModelError::TooFewPoints {
            id: mask.id,
            found: covered,
            needed: MIN_VECTOR_DEPTH_PIXELS,
        });
    }
    let degenerate = |reason: &str| PartModelError::DegenerateMask {
        id: mask.id,
        reason: reason.to_string(),
    };
    let (c, d) = fit_mask_line(&mask.mask).ok_or_else(|| degenerate("fewer than 2 pixels"))?;
    let (pa, pb) =
        line_extremes(&mask.mask, c, d).ok_or_else(|| degenerate("line misses the mask"))?;
    if (pa.u - pb.u).hypot(pa.v - pb.v) < 1.0 {
        return Err(degenerate("fewer than 2 distinct pixels on the fitted line"));
    }
    let lift = |px: Pixel| -> Result<Vec3, PartModelError> {
        let d = window_depth(depth, &mask.mask, px, cfg.endpoint_window).ok_or(
            PartModelError::NoDepth {
                id: mask.id,
                u: px.u,
                v: px.v,
            },
        )?;
        Ok(cam.back_project_pixel(px.u, px.v, d))
    };
    let (a, b) = (lift(pa)?, lift(pb)?);
    VectorElement::from_endpoints(a, b, arm_ref)
        .ok_or_else(|| degenerate("endpoints closer than 0.1 mm in 3D"))
}

pub fn fit_surface(
    mask: &PartMask,
    depth: &DepthImage,
    cam: &CameraModel,
    view_dir: &UnitVec3,
    cfg: &PartModelConfig,
) -> Result<SurfaceElement, PartModelError> {
    check_shape(mask, depth.width, depth.height)?;
    let needed = cfg.ransac.min_points.max(3);
    let cloud = match back_project_where(depth, cam, |u, v| mask.mask.get(u, v)) {
        Ok(c) => c,
        Err(GeometryError::EmptyCloud) => {
            return Err(PartModelError::TooFewPoints {
                id: mask.id,
                found: 0,
                needed,
            })
        }
        Err(source) => return Err(PartModelError::Geometry { id: mask.id, source }),
    };
    if cloud.len() < needed {
        return Err(PartModelError::TooFewPoints {
            id: mask.id,
            found: cloud.len(),
            needed,
        });
    }
    let fit = ransac::fit_plane(&cloud.points, &cfg.ransac).ok_or(PartModelError::NoConsensus {
        id: mask.id,
        ratio: 0.0,
    })?;
    let ratio = fit.inlier_ratio(cloud.len());
    if ratio < cfg.ransac.min_inlier_ratio {
        return Err(PartModelError::NoConsensus { id: mask.id, ratio });
    }
    let normal = if fit.normal.dot(view_dir) >= 0.0 {
        -fit.normal
    } else {
        fit.normal
    };
    Ok(SurfaceElement {
        center: fit.center,
        normal,
        inlier_count: fit.inliers.len(),
    })
}

/// World-frame ray from the camera through the mask's pixel centroid.
pub fn mask_view_direction(mask: &BinaryMask, cam: &CameraModel) -> Option<UnitVec3> {
    let n = mask.count();
    if n == 0 {
        return None;
    }
    let (su, sv) = mask
        .pixels()
        .fold((0.0, 0.0), |(a, b), (u, v)| (a + u as f64, b + v as f64));
    Some(cam.pixel_ray(su / n as f64, sv / n as f64))
}

/// Classifies the part and fits the matching element type.
pub fn model_part(
    mask: &PartMask,
    depth: &DepthImage,
    cam: &CameraModel,
    arm_ref: &Vec3,
    cfg: &PartModelConfig,
) -> Result<GeometricElement, PartModelError> {
    let name = mask.display_name();
    match classify_part(mask, cfg)? {
        PartKind::Slender => Ok(GeometricElement::vector(
            mask.id,
            name,
            fit_vector(mask, depth, cam, arm_ref, cfg)?,
        )),
        PartKind::Surface => {
            let view = mask_view_direction(&mask.mask, cam).unwrap_or_else(|| cam.optical_axis());
            Ok(GeometricElement::surface(
                mask.id,
                name,
                fit_surface(mask, depth, cam, &view, cfg)?,
            ))
        }
    }
}

/// Drops every mask whose overlap with the arm mask exceeds half its area.
pub fn filter_arm_masks(
    masks: Vec<PartMask>,
    arm_mask: &BinaryMask,
) -> Result<Vec<PartMask>, PartModelError> {
    let mut kept = Vec::with_capacity(masks.len());
    for m in masks {
        check_shape(&m, arm_mask.width, arm_mask.height)?;
        let area = m.mask.count();
        if 2 * m.mask.overlap(arm_mask) <= area {
            kept.push(m);
        }
    }
    Ok(kept)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotationGeometry {
    Vector {
        /// Projected non-anchor endpoint.
        start: Pixel,
        /// Projected anchor endpoint.
        end: Pixel,
    },
    Surface {
        center: Pixel,
        normal_tip: Pixel,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u32,
    pub name: String,
    #[serde(flatten)]
    pub geometry: AnnotationGeometry,
    pub label: Pixel,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub annotations: Vec<Annotation>,
}

fn label_at(p: Pixel) -> Pixel {
    Pixel::new(p.u + LABEL_OFFSET.0, p.v + LABEL_OFFSET.1)
}

/// 2D annotation of each element as seen by `cam`.
pub fn annotate(
    elements: &[GeometricElement],
    cam: &CameraModel,
) -> Result<AnnotationDocument, PartModelError> {
    let project = |id: u32, p: &Vec3| {
        cam.project(p)
            .map_err(|source| PartModelError::Geometry { id, source })
    };
    let mut annotations = Vec::with_capacity(elements.len());
    for e in elements {
        let (geometry, label) = match &e.shape {
            ElementShape::Vector(v) => {
                let start = project(e.id, &v.endpoint_near)?;
                let end = project(e.id, &v.anchor_point)?;
                (AnnotationGeometry::Vector { start, end }, label_at(end))
            }
            ElementShape::Surface(s) => {
                let center = project(e.id, &s.center)?;
                let tip = project(e.id, &(s.center + s.normal.into_inner() * NORMAL_ARROW_LENGTH))?;
                (
                    AnnotationGeometry::Surface {
                        center,
                        normal_tip: tip,
                    },
                    label_at(center),
                )
            }
        };
        annotations.push(Annotation {
            id: e.id,
            name: e.name.clone(),
            geometry,
            label,
        });
    }
    Ok(AnnotationDocument { annotations })
}
