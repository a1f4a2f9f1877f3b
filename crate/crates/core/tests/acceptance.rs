//! Acceptance run: all nine criteria at their stated tolerances, one verdict
//! line each. Built without the libtest harness so the lines always print.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::*;
use copa_core::constraint_lang::{
    parse_action, parse_constraint, Constraint, Distance, LabelKind, PartRef, PointSlot,
    ResolvedConstraint, ResolvedForm, SubsequentAction, VectorSlot,
};
use copa_core::geometry::{CameraModel, DepthImage, Pose, RigidTransform, Rotation, Vec3};
use copa_core::grasp::{filter_and_select, GraspCandidate, GraspError};
use copa_core::mask::{BinaryMask, PartMask};
use copa_core::oracle::{load_script, Purpose};
use copa_core::part_model::{
    fit_surface, mask_view_direction, model_part, ElementShape, PartKind, PartModelConfig,
};
use copa_core::pipeline::{run, Mode, RunReport, Scene, TaskSpec};
use copa_core::post_grasp::{
    apply_action, parse_rule_instruction, plan_rule_based, Gripper, RuleTask,
};
use copa_core::solver::{constraint_loss, solve, SolveProblem, TableFrame};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Option<f64>, Check); 9] = [
        ("loss-table fidelity", Some(1.0), loss_table),
        ("gradient correctness", Some(5.0), gradients),
        ("solver recovery", Some(30.0), solver_recovery),
        ("part modeling", Some(10.0), part_modeling),
        ("grasp selection", Some(5.0), grasp_selection),
        ("language round trip", Some(10.0), language),
        ("pose calculus", Some(1.0), pose_calculus),
        ("end-to-end determinism", Some(60.0), end_to_end),
        ("ablation contracts", None, ablations),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let secs = start.elapsed().as_secs_f64();
        let in_time = limit.is_none_or(|l| secs < l);
        let budget = limit.map_or(String::new(), |l| format!(", limit {l} s"));
        let (pass, detail) = match outcome {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; over time")),
            Err(e) => (false, e),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {detail} [{secs:.2} s{budget}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- losses

const TABLE_POINT: V = [0.5, 0.0, 0.07];
const TABLE_NORMAL: V = [0.0, 0.0, 1.0];
const DOWN: V = [0.0, 0.0, -1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Family {
    Collinear,
    Target,
    Parallel,
    Height,
    Perpendicular,
    Downward,
}

const FAMILIES: [Family; 6] = [
    Family::Collinear,
    Family::Target,
    Family::Parallel,
    Family::Height,
    Family::Perpendicular,
    Family::Downward,
];

/// Slot geometry before the transform, in plain arrays.
#[derive(Clone, Copy, Debug)]
struct Slots {
    va: V,
    pa: V,
    vb: V,
    pb: V,
    pc: V,
    x: f64,
}

fn vslot(id: u32, d: V, p: V) -> VectorSlot {
    VectorSlot {
        element_id: id,
        direction: unit3(d),
        point: vec3(p),
    }
}

fn pslot(id: u32, p: V) -> PointSlot {
    PointSlot {
        element_id: id,
        point: vec3(p),
    }
}

fn build(family: Family, s: &Slots) -> ResolvedConstraint {
    let (v, p) = (PartRef::vector, PartRef::point);
    let cm = Distance::from_cm(s.x * 100.0);
    let (source, form) = match family {
        Family::Collinear => (
            Constraint::CollinearOpposite { a: v(1), b: v(2) },
            ResolvedForm::CollinearOpposite {
                a: vslot(1, s.va, s.pa),
                b: vslot(2, s.vb, s.pb),
            },
        ),
        Family::Target => (
            Constraint::TargetAlong {
                a: p(1),
                b: v(2),
                c: p(3),
                distance: cm,
            },
            ResolvedForm::TargetAlong {
                a: pslot(1, s.pa),
                b: vslot(2, s.vb, s.pb),
                c: pslot(3, s.pc),
                distance: s.x,
            },
        ),
        Family::Parallel => (
            Constraint::ParallelToTable { a: v(1) },
            ResolvedForm::ParallelToTable {
                a: vslot(1, s.va, s.pa),
            },
        ),
        Family::Height => (
            Constraint::HeightAboveTable { a: p(1), height: cm },
            ResolvedForm::HeightAboveTable {
                a: pslot(1, s.pa),
                height: s.x,
            },
        ),
        Family::Perpendicular => (
            Constraint::PerpendicularToTable { a: v(1) },
            ResolvedForm::PerpendicularToTable {
                a: vslot(1, s.va, s.pa),
            },
        ),
        Family::Downward => (
            Constraint::PointsDownward { a: v(1) },
            ResolvedForm::PointsDownward {
                a: vslot(1, s.va, s.pa),
            },
        ),
    };
    ResolvedConstraint { source, form }
}

/// The Appendix loss table, term by term. Returns the loss and the
/// arguments of every `|.|` and `‖.‖`, for kink detection.
fn brute_loss(family: Family, s: &Slots, t: &RigidTransform) -> (f64, Vec<f64>) {
    let ta = apply_dir(t, normalize(s.va));
    let tp = apply_point(t, s.pa);
    let vb = normalize(s.vb);
    match family {
        Family::Collinear => {
            let a = norm(cross(ta, vb));
            let b = norm(cross(sub(tp, s.pb), vb));
            let c = norm(add(ta, vb));
            (a + b + c, vec![a, b, c])
        }
        Family::Target => {
            let d = sub(tp, s.pc);
            let a = dot(d, vb) - s.x;
            let b = norm(cross(d, vb));
            (a.abs() + b, vec![a.abs(), b])
        }
        Family::Parallel => {
            let a = dot(ta, TABLE_NORMAL).abs();
            (a, vec![a])
        }
        Family::Height => {
            let a = (dot(sub(tp, TABLE_POINT), TABLE_NORMAL) - s.x).abs();
            (a, vec![a])
        }
        Family::Perpendicular => {
            let a = norm(cross(ta, TABLE_NORMAL));
            (a, vec![a])
        }
        Family::Downward => (-dot(ta, DOWN), vec![]),
    }
}

/// Slots whose image under `t` satisfies the constraint, or violates it by
/// a margin well above 1e-3 when `violate` is set.
fn configuration(rng: &mut ChaCha8Rng, family: Family, t: &RigidTransform, violate: bool) -> Slots {
    let vb = random_unit(rng);
    let pb = random_point(rng, 0.5);
    let pc = random_point(rng, 0.5);
    let x = rng.random_range(-0.3..0.3);
    let angle = rng.random_range(3.0_f64.to_radians()..PI);
    let offset = rng.random_range(0.005..0.3);
    // moved direction and point
    let (u, q) = match family {
        Family::Collinear => {
            let u = scale(vb, -1.0);
            let q = add(pb, scale(vb, x));
            match (violate, rng.random_bool(0.5)) {
                (false, _) => (u, q),
                (true, true) => (tilt(rng, u, angle), q),
                (true, false) => (u, add(q, scale(random_perpendicular(rng, vb), offset))),
            }
        }
        Family::Target => {
            let q = add(pc, scale(vb, x));
            let q = match (violate, rng.random_bool(0.5)) {
                (false, _) => q,
                (true, true) => add(q, scale(vb, offset * if rng.random_bool(0.5) { 1.0 } else { -1.0 })),
                (true, false) => add(q, scale(random_perpendicular(rng, vb), offset)),
            };
            (random_unit(rng), q)
        }
        Family::Parallel => {
            let h = normalize(random_perpendicular(rng, TABLE_NORMAL));
            let u = if violate {
                let lift = rng.random_range(1.0_f64.to_radians()..PI / 2.0);
                add(scale(h, lift.cos()), scale(TABLE_NORMAL, lift.sin() * sign(rng)))
            } else {
                h
            };
            (u, random_point(rng, 0.5))
        }
        Family::Height => {
            let mut q = random_point(rng, 0.5);
            q[2] = TABLE_POINT[2] + x;
            if violate {
                q[2] += offset * sign(rng);
            }
            (random_unit(rng), q)
        }
        Family::Perpendicular => {
            let u = scale(TABLE_NORMAL, sign(rng));
            let u = if violate {
                let angle = rng.random_range(1.0_f64.to_radians()..PI / 2.0);
                tilt(rng, u, angle)
            } else {
                u
            };
            (u, random_point(rng, 0.5))
        }
        Family::Downward => {
            let u = if violate { tilt(rng, DOWN, angle) } else { DOWN };
            (u, random_point(rng, 0.5))
        }
    };
    Slots {
        va: unapply_dir(t, u),
        pa: unapply_point(t, q),
        vb,
        pb,
        pc,
        x,
    }
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn loss_table() -> Result<String, String> {
    let table = TableFrame::default();
    ensure(
        arr(&table.point) == TABLE_POINT && arr(&table.normal.into_inner()) == TABLE_NORMAL,
        || "default table frame differs from (0.5, 0, 0.07) / (0, 0, 1)".into(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_match: f64 = 0.0;
    let mut worst_sat: f64 = 0.0;
    let mut least_violation = f64::INFINITY;
    for family in FAMILIES {
        for violate in [false, true] {
            for _ in 0..50 {
                let t = random_transform(&mut rng, 0.5);
                let s = configuration(&mut rng, family, &t, violate);
                let got = constraint_loss(&build(family, &s), &t, &table);
                let (want, _) = brute_loss(family, &s, &t);
                worst_match = worst_match.max((got - want).abs());
                ensure((got - want).abs() <= 1e-12, || {
                    format!("{family:?}: loss {got} but the loss table gives {want}")
                })?;
                // downward scores against its minimum of -1
                let excess = if family == Family::Downward { got + 1.0 } else { got };
                if violate {
                    least_violation = least_violation.min(excess);
                    ensure(excess > 1e-3, || format!("{family:?}: violating case scored {got}"))?;
                } else {
                    worst_sat = worst_sat.max(excess.abs());
                    ensure(excess.abs() <= 1e-9, || format!("{family:?}: satisfied case scored {got}"))?;
                }
            }
        }
    }
    Ok(format!(
        "600 cases; max |loss - table| {worst_match:.1e}, satisfied ≤ {worst_sat:.1e}, violated ≥ {least_violation:.1e}"
    ))
}

// ---------------------------------------------------------------- gradients

fn random_slots(rng: &mut ChaCha8Rng) -> Slots {
    Slots {
        va: random_unit(rng),
        pa: random_point(rng, 0.5),
        vb: random_unit(rng),
        pb: random_point(rng, 0.5),
        pc: random_point(rng, 0.5),
        x: rng.random_range(-0.3..0.3),
    }
}

fn gradients() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for family in FAMILIES {
        let mut checked = 0;
        while checked < 100 {
            let s = random_slots(&mut rng);
            let p = SolveProblem::new(vec![build(family, &s)], [1]).map_err(|e| e.to_string())?;
            let x: [f64; 6] = std::array::from_fn(|i| {
                if i < 3 {
                    rng.random_range(-1.5..1.5)
                } else {
                    rng.random_range(-0.3..0.3)
                }
            });
            let x = copa_core::solver::Vec6::from_row_slice(&x);
            let (_, args) = brute_loss(family, &s, &p.transform_from_params(&x));
            if args.iter().any(|a| *a < 1e-5) {
                skipped += 1;
                continue;
            }
            let (_, g) = p.objective(&x);
            let mut fd = copa_core::solver::Vec6::zeros();
            for i in 0..6 {
                let mut hi = x;
                let mut lo = x;
                hi[i] += h;
                lo[i] -= h;
                fd[i] = (p.objective(&hi).0 - p.objective(&lo).0) / (2.0 * h);
            }
            let rel = (g - fd).norm() / fd.norm().max(g.norm()).max(1e-8);
            worst = worst.max(rel);
            ensure(rel <= 1e-4, || {
                format!("{family:?}: gradient {:?} vs finite difference {:?} (rel {rel:.2e})", g.as_slice(), fd.as_slice())
            })?;
            checked += 1;
        }
    }
    Ok(format!("600 points, worst relative error {worst:.1e}, {skipped} near-kink draws skipped"))
}

// ---------------------------------------------------------------- recovery

/// Movable elements 1 (vector) and 2 (vector); static 3 (vector) and 4
/// (point). Built satisfied at the identity, then scrambled by `scramble`.
fn recovery_problem(rng: &mut ChaCha8Rng, kind: usize, scramble: &RigidTransform) -> SolveProblem {
    let v3 = random_unit(rng);
    let p3 = random_point(rng, 0.4);
    let p4 = random_point(rng, 0.4);
    let x = rng.random_range(0.02..0.15);
    let mv = |d: V, p: V| (apply_dir(scramble, d), apply_point(scramble, p));
    let (p, v) = (PartRef::point, PartRef::vector);
    let cm = Distance::from_cm(x * 100.0);
    let constraints = match kind {
        // hammer-like: line up opposite, then stand off along the line
        0 => {
            let (d1, p1) = mv(scale(v3, -1.0), add(p3, scale(v3, x)));
            vec![
                ResolvedConstraint {
                    source: Constraint::CollinearOpposite { a: v(1), b: v(3) },
                    form: ResolvedForm::CollinearOpposite {
                        a: vslot(1, d1, p1),
                        b: vslot(3, v3, p3),
                    },
                },
                ResolvedConstraint {
                    source: Constraint::TargetAlong { a: p(1), b: v(3), c: p(3), distance: cm },
                    form: ResolvedForm::TargetAlong {
                        a: pslot(1, p1),
                        b: vslot(3, v3, p3),
                        c: pslot(3, p3),
                        distance: x,
                    },
                },
            ]
        }
        // pour-like: upright, pointing down, above a target
        1 => {
            let (d1, p1) = mv(DOWN, add(p4, scale(v3, x)));
            vec![
                ResolvedConstraint {
                    source: Constraint::PerpendicularToTable { a: v(1) },
                    form: ResolvedForm::PerpendicularToTable { a: vslot(1, d1, p1) },
                },
                ResolvedConstraint {
                    source: Constraint::PointsDownward { a: v(1) },
                    form: ResolvedForm::PointsDownward { a: vslot(1, d1, p1) },
                },
                ResolvedConstraint {
                    source: Constraint::TargetAlong { a: p(1), b: v(3), c: p(4), distance: cm },
                    form: ResolvedForm::TargetAlong {
                        a: pslot(1, p1),
                        b: vslot(3, v3, p3),
                        c: pslot(4, p4),
                        distance: x,
                    },
                },
            ]
        }
        // level a second part while placing the first at a height
        2 => {
            let target = add(p4, scale(v3, x));
            let h = target[2] - TABLE_POINT[2];
            let level = random_perpendicular(rng, TABLE_NORMAL);
            let (_, p1) = mv(v3, target);
            let (d2, p2) = mv(level, add(target, random_point(rng, 0.1)));
            vec![
                ResolvedConstraint {
                    source: Constraint::TargetAlong { a: p(1), b: v(3), c: p(4), distance: cm },
                    form: ResolvedForm::TargetAlong {
                        a: pslot(1, p1),
                        b: vslot(3, v3, p3),
                        c: pslot(4, p4),
                        distance: x,
                    },
                },
                ResolvedConstraint {
                    source: Constraint::HeightAboveTable { a: p(1), height: Distance::from_cm(h * 100.0) },
                    form: ResolvedForm::HeightAboveTable { a: pslot(1, p1), height: h },
                },
                ResolvedConstraint {
                    source: Constraint::ParallelToTable { a: v(2) },
                    form: ResolvedForm::ParallelToTable { a: vslot(2, d2, p2) },
                },
            ]
        }
        // insert-like: collinear with an upward opening, pointing down
        _ => {
            let up = TABLE_NORMAL;
            let (d1, p1) = mv(DOWN, add(p3, scale(up, x)));
            vec![
                ResolvedConstraint {
                    source: Constraint::CollinearOpposite { a: v(1), b: v(3) },
                    form: ResolvedForm::CollinearOpposite {
                        a: vslot(1, d1, p1),
                        b: vslot(3, up, p3),
                    },
                },
                ResolvedConstraint {
                    source: Constraint::PointsDownward { a: v(1) },
                    form: ResolvedForm::PointsDownward { a: vslot(1, d1, p1) },
                },
                ResolvedConstraint {
                    source: Constraint::TargetAlong { a: p(1), b: v(3), c: p(3), distance: cm },
                    form: ResolvedForm::TargetAlong {
                        a: pslot(1, p1),
                        b: vslot(3, up, p3),
                        c: pslot(3, p3),
                        distance: x,
                    },
                },
            ]
        }
    };
    SolveProblem::new(constraints, [1, 2]).expect("slot A parts are movable")
}

fn solver_recovery() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut recovered = 0;
    let mut misses = Vec::new();
    for i in 0..25 {
        let scramble = random_transform(&mut rng, 0.3);
        let p = recovery_problem(&mut rng, i % 4, &scramble);
        let r = match solve(&p) {
            Ok(r) => r,
            Err(copa_core::solver::SolveError::NoConvergence(r)) => *r,
            Err(e) => return Err(e.to_string()),
        };
        // downward terms bottom out at -1, so measure from that floor
        let excess = r.residual - p.loss_floor();
        if r.success && excess <= 1e-3 {
            recovered += 1;
        } else {
            misses.push(format!("#{i} residual {:.2e} above floor", excess));
        }
    }
    ensure(recovered >= 24, || format!("{recovered}/25 recovered; {}", misses.join(", ")))?;

    let report = fixture_run("hammer-nail", Mode::Full, Some(FIXED_SEED))?;
    let normal = |id: u32| -> Result<V, String> {
        report
            .elements
            .iter()
            .find(|e| e.id == id)
            .and_then(|e| match &e.shape {
                ElementShape::Surface(s) => Some(arr(&s.normal.into_inner())),
                ElementShape::Vector(_) => None,
            })
            .ok_or_else(|| format!("hammer report has no surface {id}"))
    };
    let t = report.solve.as_ref().ok_or("hammer report has no solve result")?.transform;
    let striking = apply_dir(&t, normal(1)?);
    let nail = scale(normal(3)?, -1.0);
    let angle = dot(normalize(striking), normalize(nail)).clamp(-1.0, 1.0).acos().to_degrees();
    ensure(angle <= 0.1, || format!("hammer striking normal is {angle:.4}° off the negated nail normal"))?;
    Ok(format!("{recovered}/25 recovered; hammer striking normal {angle:.2e}° from the negated nail normal"))
}

// ---------------------------------------------------------------- part modeling

const W: u32 = 640;
const H: u32 = 480;
const CAMERA_HEIGHT: f64 = 0.6;

fn depth_from(points: &[(u32, u32, f64)], fill: f32) -> DepthImage {
    let mut d = DepthImage::filled(W, H, fill);
    for &(u, v, z) in points {
        d.set(u, v, z as f32);
    }
    d
}

fn part_modeling() -> Result<String, String> {
    let cam = top_down_camera([0.0, 0.0, CAMERA_HEIGHT], 600.0, W, H);
    let eye = [0.0, 0.0, CAMERA_HEIGHT];
    let cfg = PartModelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 0.001).expect("valid sigma");

    // noisy planes
    let mut worst_normal: f64 = 0.0;
    let mut worst_center: f64 = 0.0;
    for _ in 0..20 {
        let slope = rng.random_range(0.0..50.0_f64.to_radians());
        let n = tilt(&mut rng, [0.0, 0.0, 1.0], slope);
        let c = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.1)];
        let mut mask = BinaryMask::new(W, H);
        let mut samples = Vec::new();
        let mut exact = Vec::new();
        for v in 0..H {
            for u in 0..W {
                let ray = top_down_ray(&cam, u as f64, v as f64);
                let t = dot(sub(c, eye), n) / dot(ray, n);
                let hit = add(eye, scale(ray, t));
                if norm(sub(hit, c)) > 0.06 {
                    continue;
                }
                mask.set(u, v, true);
                exact.push(hit);
                let z = eye[2] - hit[2];
                let z = if rng.random_bool(0.3) {
                    z + rng.random_range(-0.1..0.1)
                } else {
                    z + noise.sample(&mut rng)
                };
                samples.push((u, v, z));
            }
        }
        let part = PartMask::new(1, "top", mask);
        let depth = depth_from(&samples, 0.0);
        let view = mask_view_direction(&part.mask, &cam).ok_or("empty plane mask")?;
        let fit = fit_surface(&part, &depth, &cam, &view, &cfg).map_err(|e| e.to_string())?;
        let angle = dot(arr(&fit.normal.into_inner()), n).clamp(-1.0, 1.0).acos().to_degrees();
        let truth = scale(exact.iter().fold([0.0; 3], |a, p| add(a, *p)), 1.0 / exact.len() as f64);
        let off = norm(sub(arr(&fit.center), truth));
        worst_normal = worst_normal.max(angle);
        worst_center = worst_center.max(off);
        ensure(angle <= 1.0 && off <= 0.002, || {
            format!("plane fit off by {angle:.3}° and {:.2} mm", off * 1e3)
        })?;
    }

    // bars and squares lying on a table at z = 0
    let mut worst_endpoint: f64 = 0.0;
    for (deg, slender) in [(0.0, true), (30.0, true), (45.0, true), (90.0, true), (0.0, false), (30.0, false), (45.0, false)] {
        let theta = f64::to_radians(deg);
        let (half_len, half_w, top) = if slender { (0.10, 0.006, 0.012) } else { (0.03, 0.03, 0.01) };
        let center = [0.05, 0.03, top];
        let axis = [theta.cos(), theta.sin(), 0.0];
        let side = [-theta.sin(), theta.cos(), 0.0];
        let mut mask = BinaryMask::new(W, H);
        let mut samples = Vec::new();
        for v in 0..H {
            for u in 0..W {
                let ray = top_down_ray(&cam, u as f64, v as f64);
                let on_top = add(eye, scale(ray, (eye[2] - top) / -ray[2]));
                let d = sub(on_top, center);
                let inside = dot(d, axis).abs() <= half_len && dot(d, side).abs() <= half_w;
                let z = if inside {
                    mask.set(u, v, true);
                    eye[2] - top
                } else {
                    eye[2]
                };
                samples.push((u, v, z + noise.sample(&mut rng)));
            }
        }
        let part = PartMask::new(2, "bar", mask);
        let depth = depth_from(&samples, 0.0);
        let e = model_part(&part, &depth, &cam, &Vec3::new(-1.0, 0.0, 0.0), &cfg).map_err(|e| e.to_string())?;
        let want = if slender { PartKind::Slender } else { PartKind::Surface };
        ensure(e.kind() == want, || format!("{deg}° {:?} classified {:?}", want, e.kind()))?;
        if let ElementShape::Vector(vec) = &e.shape {
            let ends = [add(center, scale(axis, half_len)), sub(center, scale(axis, half_len))];
            let (a, b) = (arr(&vec.endpoint_near), arr(&vec.endpoint_far));
            let err = f64::min(
                norm(sub(a, ends[0])).max(norm(sub(b, ends[1]))),
                norm(sub(a, ends[1])).max(norm(sub(b, ends[0]))),
            );
            worst_endpoint = worst_endpoint.max(err);
            ensure(err <= 0.01, || format!("{deg}° bar endpoint off by {:.1} mm", err * 1e3))?;
        }
    }
    Ok(format!(
        "20 planes: normal ≤ {worst_normal:.3}°, center ≤ {:.2} mm; 4 bars Slender with endpoints ≤ {:.1} mm; 3 squares Surface",
        worst_center * 1e3,
        worst_endpoint * 1e3
    ))
}

// ---------------------------------------------------------------- grasp

fn brute_select(cands: &[GraspCandidate], mask: &BinaryMask, cam: &CameraModel) -> Option<(usize, usize)> {
    let mut best: Option<usize> = None;
    let mut count = 0;
    for (i, c) in cands.iter().enumerate() {
        let Some((u, v)) = project(cam, arr(&c.grasp_point)) else {
            continue;
        };
        let (u, v) = (u.round(), v.round());
        if !(u >= 0.0 && v >= 0.0 && u < mask.width as f64 && v < mask.height as f64) {
            continue;
        }
        if !mask.get(u as u32, v as u32) {
            continue;
        }
        count += 1;
        match best {
            Some(b) if cands[b].score >= c.score => {}
            _ => best = Some(i),
        }
    }
    best.map(|b| (b, count))
}

fn grasp_selection() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (w, h) = (64, 48);
    let mut selected = 0;
    for instance in 0..1000 {
        let eye = add(random_point(&mut rng, 0.5), [0.0, 0.0, 1.0]);
        let cam = CameraModel::look_at(vec3(eye), vec3(random_point(&mut rng, 0.1)), 60.0, w, h)
            .map_err(|e| e.to_string())?;
        let mut mask = BinaryMask::new(w, h);
        for _ in 0..rng.random_range(0..6) {
            let (u0, v0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (du, dv) = (rng.random_range(1..32), rng.random_range(1..24));
            for v in v0..(v0 + dv).min(h) {
                for u in u0..(u0 + du).min(w) {
                    mask.set(u, v, true);
                }
            }
        }
        let n = rng.random_range(0..16);
        let cands: Vec<GraspCandidate> = (0..n)
            .map(|_| {
                let p = if rng.random_bool(0.7) {
                    // a pixel center pushed out to a random depth
                    let (u, v) = (rng.random_range(0..w), rng.random_range(0..h));
                    cam.back_project_pixel(u as f64, v as f64, rng.random_range(0.2..2.0))
                } else {
                    vec3(random_point(&mut rng, 2.0))
                };
                GraspCandidate {
                    pose: Pose::new(p, Rotation::identity()),
                    grasp_point: p,
                    width: 0.04,
                    height: 0.02,
                    depth: 0.02,
                    // coarse scores force ties
                    score: rng.random_range(0..5) as f64 / 4.0,
                }
            })
            .collect();
        let part = PartMask::new(7, "cam", mask.clone());
        let got = filter_and_select(&cands, &part, &cam);
        match (brute_select(&cands, &mask, &cam), got) {
            (Some((i, count)), Ok(sel)) => {
                ensure(sel.index == i && sel.in_mask_count == count && sel.chosen == cands[i], || {
                    format!("instance {instance}: chose {} of {count}, expected {i}", sel.index)
                })?;
                selected += 1;
            }
            (None, Err(GraspError::EmptyCandidates)) if cands.is_empty() => {}
            (None, Err(GraspError::NoCandidateInMask { part: 7, total })) if total == cands.len() && !cands.is_empty() => {}
            (want, got) => return Err(format!("instance {instance}: expected {want:?}, got {got:?}")),
        }
    }
    Ok(format!("1000 instances match ({selected} with a selection)"))
}

// ---------------------------------------------------------------- language

fn random_ref(rng: &mut ChaCha8Rng) -> PartRef {
    let id = if rng.random_bool(0.8) { rng.random_range(0..20) } else { rng.random::<u32>() };
    let label = [LabelKind::Vector, LabelKind::Point, LabelKind::Surface][rng.random_range(0..3)];
    PartRef { id, label }
}

fn random_cm(rng: &mut ChaCha8Rng, positive: bool) -> Distance {
    let cm = match rng.random_range(0..3) {
        0 => rng.random_range(0..100) as f64,
        1 => rng.random_range(0..100_000) as f64 / 1000.0,
        _ => rng.random_range(0.0..1000.0),
    };
    if positive {
        Distance::from_cm(if cm == 0.0 { 0.5 } else { cm })
    } else {
        Distance::from_cm(cm * sign(rng))
    }
}

fn random_constraint(rng: &mut ChaCha8Rng) -> Constraint {
    let a = random_ref(rng);
    match rng.random_range(0..6) {
        0 => Constraint::CollinearOpposite { a, b: random_ref(rng) },
        1 => Constraint::TargetAlong {
            a,
            b: random_ref(rng),
            c: random_ref(rng),
            distance: random_cm(rng, false),
        },
        2 => Constraint::ParallelToTable { a },
        3 => Constraint::HeightAboveTable { a, height: random_cm(rng, false) },
        4 => Constraint::PerpendicularToTable { a },
        _ => Constraint::PointsDownward { a },
    }
}

fn random_action(rng: &mut ChaCha8Rng) -> SubsequentAction {
    match rng.random_range(0..4) {
        0 => SubsequentAction::MoveVerticallyDown { distance: random_cm(rng, true) },
        1 => SubsequentAction::MoveForward { distance: random_cm(rng, true) },
        2 => SubsequentAction::OpenGripper,
        _ => SubsequentAction::RotateEndEffector180,
    }
}

const FUZZ_WORDS: [&str; 24] = [
    "Vector", "Point", "Surface", "1", "-3", "2.5", "cm", "mm", "the", "is", "along", "from", "'s",
    "points", "downward", ".", ",", "Move", "vertically", "down", "gripper", "Open", "1e9", "∞",
];

fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..3) {
        0 => (0..rng.random_range(0..40))
            .map(|_| char::from_u32(rng.random_range(0..0x11000)).unwrap_or('\u{fffd}'))
            .collect(),
        1 => (0..rng.random_range(0..20))
            .map(|_| FUZZ_WORDS[rng.random_range(0..FUZZ_WORDS.len())])
            .collect::<Vec<_>>()
            .join(if rng.random_bool(0.5) { " " } else { "" }),
        _ => {
            // a valid sentence with a few bytes spliced
            let mut s: Vec<char> = random_constraint(rng).to_string().chars().collect();
            for _ in 0..rng.random_range(1..4) {
                let i = rng.random_range(0..=s.len());
                match rng.random_range(0..3) {
                    0 if i < s.len() => {
                        s.remove(i);
                    }
                    1 => s.insert(i, FUZZ_WORDS[rng.random_range(0..FUZZ_WORDS.len())].chars().next().unwrap_or('x')),
                    _ => s.insert(i, char::from_u32(rng.random_range(0x20..0x7f)).unwrap_or(' ')),
                }
            }
            s.into_iter().collect()
        }
    }
}

fn language() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10_000 {
        if rng.random_bool(0.6) {
            let c = random_constraint(&mut rng);
            let text = c.to_string();
            let back = parse_constraint(&text).map_err(|e| format!("#{i} {text:?}: {e}"))?;
            ensure(back == c, || format!("#{i} {text:?} parsed to {back:?}"))?;
        } else {
            let a = random_action(&mut rng);
            let text = a.to_string();
            let back = parse_action(&text).map_err(|e| format!("#{i} {text:?}: {e}"))?;
            ensure(back == a, || format!("#{i} {text:?} parsed to {back:?}"))?;
        }
    }
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..10_000 {
        let s = fuzz_string(&mut rng);
        let outcome = catch_unwind(|| (parse_constraint(&s).is_ok(), parse_action(&s).is_ok()))
            .map_err(|_| format!("parser panicked on {s:?}"))?;
        if outcome.0 || outcome.1 {
            accepted += 1;
        } else {
            rejected += 1;
        }
    }
    Ok(format!("10000 round trips exact; 10000 fuzz strings, {accepted} parsed and {rejected} typed errors, no panics"))
}

// ---------------------------------------------------------------- pose calculus

fn pose_calculus() -> Result<String, String> {
    let start = Pose::new(Vec3::new(0.3, -0.2, 0.4), Rotation::about_y(PI));
    let step = apply_action(&start, &parse_action("Move vertically down 7 cm.").map_err(|e| e.to_string())?);
    ensure(step.pose.position.z == 0.4 - 0.07, || format!("down 7 cm gave z = {}", step.pose.position.z))?;
    ensure(
        step.pose.position.x == start.position.x
            && step.pose.position.y == start.position.y
            && step.pose.orientation == start.orientation,
        || "down 7 cm changed more than z".into(),
    )?;

    // top-down grasp: approach axis is world -z
    let grasp = Pose::new(Vec3::new(0.4, -0.1, 0.2), Rotation::about_y(PI));
    let positions = |name: &str| -> Option<Vec3> {
        match name {
            "nail" => Some(Vec3::new(0.4, 0.1, 0.10)),
            "button" => Some(Vec3::new(0.6, 0.0, 0.09)),
            "drawer" => Some(Vec3::new(0.7, 0.0, 0.2)),
            "cup" => Some(Vec3::new(0.5, -0.2, 0.12)),
            "bowl" => Some(Vec3::new(0.55, 0.2, 0.1)),
            "stick" | "kettle" | "flower" => Some(Vec3::new(0.4, -0.1, 0.1)),
            _ => None,
        }
    };
    let plan = |text: &str| -> Result<Vec<copa_core::post_grasp::PoseStep>, String> {
        let ins = parse_rule_instruction(text).map_err(|e| e.to_string())?;
        let task = RuleTask::bind(&ins, positions)?;
        Ok(plan_rule_based(&task, &grasp))
    };
    let close = |a: &Vec3, b: [f64; 3]| norm(sub(arr(a), b)) <= 1e-12;

    let hammer = plan("Hammer the nail.")?;
    ensure(hammer.len() == 2, || format!("hammer: {} steps", hammer.len()))?;
    ensure(close(&hammer[0].pose.position, [0.4, 0.1, 0.15]), || format!("hammer step 1 at {:?}", hammer[0].pose.position))?;
    ensure((hammer[1].pose.position.z - 0.09).abs() <= 1e-12, || "hammer step 2 not 6 cm lower".into())?;

    let press = plan("Press the button with the stick.")?;
    ensure(press.len() == 2, || format!("press: {} steps", press.len()))?;
    ensure(close(&press[0].pose.position, [0.6, 0.0, 0.14]) && close(&press[1].pose.position, [0.6, 0.0, 0.08]), || {
        "press steps off".into()
    })?;

    let open = plan("Open the drawer.")?;
    ensure(open.len() == 1, || format!("open: {} steps", open.len()))?;
    // backward is against the approach axis, which points down here
    ensure(close(&open[0].pose.position, [0.4, -0.1, 0.30]) && open[0].pose.orientation == grasp.orientation, || {
        format!("open step at {:?}", open[0].pose.position)
    })?;

    let pour = plan("Pour water from the kettle to the bowl.")?;
    ensure(pour.len() == 2, || format!("pour: {} steps", pour.len()))?;
    let turned = rotation_angle_between(&matrix_of(&pour[0].pose.orientation), &matrix_of(&pour[1].pose.orientation));
    ensure(close(&pour[0].pose.position, [0.55, 0.2, 0.15]) && (turned - PI).abs() <= 1e-9, || {
        format!("pour turned {turned} rad")
    })?;

    let put = plan("Put the flower into the cup.")?;
    ensure(put.len() == 2, || format!("put: {} steps", put.len()))?;
    ensure(
        close(&put[0].pose.position, [0.5, -0.2, 0.17]) && put[1].gripper == Gripper::Open && put[1].pose == put[0].pose,
        || "put-into steps off".into(),
    )?;
    Ok("down 7 cm exact; step counts 2/2/1/2/2 with +5 cm, -6 cm, -10 cm, 180° and open offsets".into())
}

// ---------------------------------------------------------------- end to end

const FIXED_SEED: u64 = 20_240_301;
const FIXTURES: [&str; 5] = ["hammer-nail", "spoon-into-cup", "open-drawer", "press-button", "insert-flower"];

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).join("manifest.json")
}

fn fixture_run(name: &str, mode: Mode, seed: Option<u64>) -> Result<RunReport, String> {
    let scene = Scene::load(&fixture_path(name)).map_err(|e| format!("{name}: {e}"))?;
    let defaults = scene.task.clone().ok_or_else(|| format!("{name}: manifest has no task"))?;
    let oracle = load_script(&scene.dir.join(&defaults.oracle)).map_err(|e| format!("{name}: {e}"))?;
    let mut task = TaskSpec::new(defaults.instruction, mode);
    task.seed = seed;
    run(&scene, &task, &oracle).map_err(|f| format!("{name} ({mode}): {}", f.error))
}

/// Final pose of the hammer fixture, worked out from the box dimensions the
/// fixture is built from:
/// - striking face: +x face of the head box centered at (0.45, 0, 0.09) with
///   half extent 0.05, so its center is (0.50, 0, 0.09) and normal +x;
/// - nail head top: (0.65, 0, 0.10), normal +z;
/// - chosen grasp: (0.45, -0.18, 0.094), top-down, gripper frame Ry(180°);
/// - "Vector 1 and Vector 3 ... opposite": +x must map to -z; the smallest
///   such rotation is Ry(90°). Rotation about the nail axis is left free by
///   the constraints and the identity start keeps it at zero;
/// - "Point 1 is 5 cm along Vector 3 from Point 3": the face center lands on
///   (0.65, 0, 0.15);
/// - then down 7 cm and open, which keeps the pose.
fn hammer_expected() -> (V, M) {
    let r = rot_y(PI / 2.0);
    let face = [0.50, 0.0, 0.09];
    let target = add([0.65, 0.0, 0.10], [0.0, 0.0, 0.05]);
    let grasp = [0.45, -0.18, 0.094];
    let p1 = add(mat_vec(&r, sub(grasp, face)), target);
    (sub(p1, [0.0, 0.0, 0.07]), mat_mul(&r, &rot_y(PI)))
}

fn end_to_end() -> Result<String, String> {
    let mut summary = Vec::new();
    for name in FIXTURES {
        let first = fixture_run(name, Mode::Full, Some(FIXED_SEED))?;
        let second = fixture_run(name, Mode::Full, Some(FIXED_SEED))?;
        let bytes = |r: &RunReport| -> Result<Vec<u8>, String> {
            let t = r.trajectory().map_err(|e| e.to_string())?;
            serde_json::to_vec_pretty(&t).map_err(|e| e.to_string())
        };
        ensure(bytes(&first)? == bytes(&second)?, || format!("{name}: trajectories differ between runs"))?;
        let solve = first.solve.as_ref().ok_or_else(|| format!("{name}: no solve result"))?;
        ensure(solve.success, || format!("{name}: solve did not meet tolerance"))?;
        summary.push(format!("{name} {} steps", first.steps.len()));
        if name == "hammer-nail" {
            ensure(first.steps.len() >= 4 && solve.residual <= 1e-3, || {
                format!("hammer: {} steps, residual {}", first.steps.len(), solve.residual)
            })?;
            let last = first.steps.last().expect("nonempty").pose;
            let (want_p, want_r) = hammer_expected();
            let dp = norm(sub(arr(&last.position), want_p));
            let dr = rotation_angle_between(&matrix_of(&last.orientation), &want_r).to_degrees();
            ensure(dp <= 1e-3 && dr <= 0.1, || {
                format!("hammer final pose off by {:.3} mm and {dr:.4}° from the hand-derived pose", dp * 1e3)
            })?;
            summary.push(format!("hammer pose within {:.2} mm / {dr:.1e}°", dp * 1e3));
        }
    }
    Ok(summary.join(", "))
}

// ---------------------------------------------------------------- ablations

fn ablations() -> Result<String, String> {
    for name in FIXTURES {
        let rule = fixture_run(name, Mode::RuleBased, None)?;
        ensure(rule.solve_calls == 0 && rule.solve.is_none(), || {
            format!("{name}: rule mode made {} solve calls", rule.solve_calls)
        })?;
        let flat = fixture_run(name, Mode::NoCoarseToFine, None)?;
        let (g, t) = (flat.grounding_calls(Purpose::Grasp), flat.grounding_calls(Purpose::Task));
        ensure(g == 1 && t == 1, || format!("{name}: no-c2f made {g} grasp and {t} task grounding calls"))?;
        let full = fixture_run(name, Mode::Full, None)?;
        let (g, t) = (full.grounding_calls(Purpose::Grasp), full.grounding_calls(Purpose::Task));
        ensure(g == 2 && t == 2, || format!("{name}: full mode made {g} grasp and {t} task grounding calls"))?;
    }
    Ok("5 fixtures: rule mode 0 solves; no-c2f 1 grounding call per phase; full 2 per phase".into())
}
