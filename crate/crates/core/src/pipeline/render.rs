//! Annotated overlays: tinted part masks, element arrows, numeric labels and
//! the projected pose sequence.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use thiserror::Error;

use super::{RunReport, Scene, SceneCamera};
use crate::geometry::{CameraModel, Pixel};
use crate::io::{save_rgb, IoError};
use crate::part_model::AnnotationGeometry;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("report has no modeled elements to draw")]
    NoElements,
    #[error(transparent)]
    Io(#[from] IoError),
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 80, 60],
    [60, 160, 230],
    [90, 200, 90],
    [230, 190, 50],
    [180, 90, 220],
    [50, 200, 190],
];
const TRAJECTORY: [u8; 3] = [255, 40, 200];
const LABEL_BG: [u8; 3] = [255, 255, 255];
const LABEL_FG: [u8; 3] = [0, 0, 0];
/// Glyph cell scale in pixels per font dot.
const GLYPH_SCALE: i64 = 2;

/// 3x5 digit glyphs, one row per entry, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn color(id: u32) -> [u8; 3] {
    PALETTE[id as usize % PALETTE.len()]
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

/// Liang-Barsky clip of the segment to the image rectangle.
fn clip(img: &RgbImage, a: Pixel, b: Pixel) -> Option<(Pixel, Pixel)> {
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    let (w, h) = (img.width() as f64, img.height() as f64);
    for (p, q) in [(-dx, a.u + 1.0), (dx, w - a.u), (-dy, a.v + 1.0), (dy, h - a.v)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| {
        let at = |t: f64| Pixel::new(a.u + dx * t, a.v + dy * t);
        (at(t0), at(t1))
    })
}

fn line(img: &mut RgbImage, a: Pixel, b: Pixel, c: [u8; 3]) {
    if !(a.u.is_finite() && a.v.is_finite() && b.u.is_finite() && b.v.is_finite()) {
        return;
    }
    let Some((a, b)) = clip(img, a, b) else {
        return;
    };
    let steps = (b.u - a.u).abs().max((b.v - a.v).abs()).ceil().max(1.0) as i64;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = (a.u + (b.u - a.u) * t, a.v + (b.v - a.v) * t);
        put(img, x.round() as i64, y.round() as i64, c);
    }
}

fn dot(img: &mut RgbImage, p: Pixel, r: i64, c: [u8; 3]) {
    let (x0, y0) = (p.u.round() as i64, p.v.round() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(img, x0 + dx, y0 + dy, c);
            }
        }
    }
}

/// Label box centered on `at`, holding the decimal id.
fn label(img: &mut RgbImage, at: Pixel, id: u32) {
    let text = id.to_string();
    let glyph_w = 3 * GLYPH_SCALE;
    let glyph_h = 5 * GLYPH_SCALE;
    let w = text.len() as i64 * (glyph_w + GLYPH_SCALE) + GLYPH_SCALE;
    let h = glyph_h + 2 * GLYPH_SCALE;
    let (x0, y0) = (at.u.round() as i64 - w / 2, at.v.round() as i64 - h / 2);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            put(img, x, y, LABEL_BG);
        }
    }
    for (i, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x0 + GLYPH_SCALE + i as i64 * (glyph_w + GLYPH_SCALE);
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for sy in 0..GLYPH_SCALE {
                    for sx in 0..GLYPH_SCALE {
                        put(
                            img,
                            gx + col * GLYPH_SCALE + sx,
                            y0 + GLYPH_SCALE + row as i64 * GLYPH_SCALE + sy,
                            LABEL_FG,
                        );
                    }
                }
            }
        }
    }
}

fn base_image(cam: &SceneCamera) -> RgbImage {
    if let Some(rgb) = &cam.rgb {
        return rgb.clone();
    }
    let valid: Vec<f32> = cam.depth.data.iter().copied().filter(|d| d.is_finite() && *d > 0.0).collect();
    let lo = valid.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = valid.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = (hi - lo).max(1e-6);
    RgbImage::from_fn(cam.model.width, cam.model.height, |u, v| {
        let d = cam.depth.get(u, v);
        let g = if d.is_finite() && d > 0.0 {
            (230.0 - 180.0 * (d - lo) / span) as u8
        } else {
            0
        };
        Rgb([g, g, g])
    })
}

fn tint(img: &mut RgbImage, scene: &Scene, id: u32) {
    let Some(part) = scene.part(id) else {
        return;
    };
    let c = color(id);
    for (u, v) in part.mask.pixels() {
        let p = img.get_pixel_mut(u, v);
        for k in 0..3 {
            p.0[k] = ((p.0[k] as u16 + c[k] as u16) / 2) as u8;
        }
    }
}

fn draw_trajectory(img: &mut RgbImage, model: &CameraModel, report: &RunReport) {
    let pixels: Vec<Option<Pixel>> = report
        .steps
        .iter()
        .map(|s| model.project(&s.pose.position).ok())
        .collect();
    for pair in pixels.windows(2) {
        if let [Some(a), Some(b)] = pair {
            line(img, *a, *b, TRAJECTORY);
        }
    }
    for p in pixels.iter().flatten() {
        dot(img, *p, 3, TRAJECTORY);
    }
}

/// One overlay per annotated camera, written as `overlay_<camera>.png`.
pub fn render_scene(scene: &Scene, report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
    if report.elements.is_empty() || report.annotations.is_empty() {
        return Err(RenderError::NoElements);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| IoError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for ann in &report.annotations {
        let Some(cam) = scene.camera(&ann.camera) else {
            continue;
        };
        let mut img = base_image(cam);
        for a in &ann.document.annotations {
            tint(&mut img, scene, a.id);
        }
        for a in &ann.document.annotations {
            let c = color(a.id);
            match a.geometry {
                AnnotationGeometry::Vector { start, end } => {
                    line(&mut img, start, end, c);
                    dot(&mut img, end, 3, c);
                }
                AnnotationGeometry::Surface { center, normal_tip } => {
                    line(&mut img, center, normal_tip, c);
                    dot(&mut img, center, 3, c);
                }
            }
        }
        if !report.steps.is_empty() {
            draw_trajectory(&mut img, &cam.model, report);
        }
        // labels last so they stay readable
        for a in &ann.document.annotations {
            label(&mut img, a.label, a.id);
        }
        let path = out_dir.join(format!("overlay_{}.png", ann.camera));
        save_rgb(&path, &img)?;
        written.push(path);
    }
    Ok(written)
}
