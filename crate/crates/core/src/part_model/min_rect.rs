//! Convex hull and minimum-area enclosing rectangle of a pixel mask.

use crate::mask::BinaryMask;

pub type Point2 = [f64; 2];

/// Rotated rectangle; `long ≥ short`, `angle` is the long side's direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotatedRect {
    pub center: Point2,
    pub long: f64,
    pub short: f64,
    pub angle: f64,
}

impl RotatedRect {
    pub fn area(&self) -> f64 {
        self.long * self.short
    }

    pub fn aspect(&self) -> f64 {
        if self.short > 0.0 {
            self.long / self.short
        } else {
            f64::INFINITY
        }
    }
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // upper chain must not pop into the lower one
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area rectangle enclosing `points`; one side is collinear with a
/// hull edge.
pub fn min_area_rect(points: &[Point2]) -> Option<RotatedRect> {
    let hull = convex_hull(points);
    if hull.is_empty() {
        return None;
    }
    if hull.len() == 1 {
        return Some(RotatedRect {
            center: hull[0],
            long: 0.0,
            short: 0.0,
            angle: 0.0,
        });
    }
    let mut best: Option<(f64, RotatedRect)> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let (ex, ey) = (dx / len, dy / len);
        let (mut s_min, mut s_max, mut t_min, mut t_max) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let s = p[0] * ex + p[1] * ey;
            let t = -p[0] * ey + p[1] * ex;
            s_min = s_min.min(s);
            s_max = s_max.max(s);
            t_min = t_min.min(t);
            t_max = t_max.max(t);
        }
        let (ds, dt) = (s_max - s_min, t_max - t_min);
        let area = ds * dt;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let (sc, tc) = ((s_min + s_max) / 2.0, (t_min + t_max) / 2.0);
            let center = [sc * ex - tc * ey, sc * ey + tc * ex];
            let (long, short, angle) = if ds >= dt {
                (ds, dt, ey.atan2(ex))
            } else {
                (dt, ds, ex.atan2(-ey))
            };
            best = Some((
                area,
                RotatedRect {
                    center,
                    long,
                    short,
                    angle,
                },
            ));
        }
    }
    best.map(|(_, r)| r)
}

/// Corner points of every true pixel, treating pixel `(u, v)` as the unit
/// square centered on `(u, v)`.
pub fn mask_corner_points(mask: &BinaryMask) -> Vec<Point2> {
    let mut pts = Vec::new();
    for (u, v) in mask.pixels() {
        // interior pixels cannot contribute hull vertices
        let (ui, vi) = (u as i64, v as i64);
        let interior = mask.get_i(ui - 1, vi)
            && mask.get_i(ui + 1, vi)
            && mask.get_i(ui, vi - 1)
            && mask.get_i(ui, vi + 1);
        if interior {
            continue;
        }
        let (uf, vf) = (u as f64, v as f64);
        for (du, dv) in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
            pts.push([uf + du, vf + dv]);
        }
    }
    pts
}
