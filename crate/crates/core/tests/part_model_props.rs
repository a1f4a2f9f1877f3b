mod common;

use common::*;
use copa_core::geometry::DepthImage;
use copa_core::mask::{BinaryMask, PartMask};
use copa_core::part_model::{
    classify_part, filter_arm_masks, fit_surface, mask_view_direction, PartKind, PartModelConfig,
    VectorElement,
};
use proptest::prelude::*;

const W: u32 = 160;
const H: u32 = 120;
const CAMERA_HEIGHT: f64 = 0.6;

/// Pixel centers inside a rectangle of the given half sides, turned by `theta`.
fn rect_mask(theta: f64, half_len: f64, half_w: f64) -> PartMask {
    let (c, s) = (theta.cos(), theta.sin());
    let (cu, cv) = (W as f64 / 2.0, H as f64 / 2.0);
    PartMask::new(
        1,
        "cam",
        BinaryMask::from_fn(W, H, |u, v| {
            let (du, dv) = (u as f64 - cu, v as f64 - cv);
            (du * c + dv * s).abs() <= half_len && (-du * s + dv * c).abs() <= half_w
        }),
    )
}

fn small_mask() -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), 64).prop_map(|b| BinaryMask::from_vec(8, 8, b).unwrap())
}

proptest! {
    #[test]
    fn classification_ignores_in_plane_rotation(theta in 0.0..std::f64::consts::PI) {
        let cfg = PartModelConfig::default();
        prop_assert_eq!(classify_part(&rect_mask(theta, 40.0, 4.0), &cfg).unwrap(), PartKind::Slender);
        prop_assert_eq!(classify_part(&rect_mask(theta, 15.0, 12.0), &cfg).unwrap(), PartKind::Surface);
    }

    #[test]
    fn vectors_point_at_the_anchor(a in proptest::array::uniform3(-1.0..1.0f64), b in proptest::array::uniform3(-1.0..1.0f64), arm in proptest::array::uniform3(-2.0..2.0f64)) {
        let (a, b, arm) = (vec3(a), vec3(b), vec3(arm));
        prop_assume!((a - b).norm() > 1e-3);
        let e = VectorElement::from_endpoints(a, b, &arm).unwrap();
        prop_assert_eq!(e.anchor_point, e.endpoint_far);
        prop_assert!((e.endpoint_far - arm).norm() >= (e.endpoint_near - arm).norm());
        let back = e.endpoint_near + e.direction.into_inner() * (e.endpoint_far - e.endpoint_near).norm();
        prop_assert!((back - e.anchor_point).norm() <= 1e-12);
    }

    #[test]
    fn clean_planes_fit_exactly(slope in 0.0..1.0f64, az in 0.0..6.28f64, cz in 0.0..0.1f64) {
        let cam = top_down_camera([0.0, 0.0, CAMERA_HEIGHT], 150.0, W, H);
        let eye = [0.0, 0.0, CAMERA_HEIGHT];
        let n = [slope.sin() * az.cos(), slope.sin() * az.sin(), slope.cos()];
        let c = [0.0, 0.0, cz];
        let mut depth = DepthImage::filled(W, H, 0.0);
        let mask = BinaryMask::from_fn(W, H, |u, v| {
            let ray = top_down_ray(&cam, u as f64, v as f64);
            let hit = add(eye, scale(ray, dot(sub(c, eye), n) / dot(ray, n)));
            norm(sub(hit, c)) <= 0.08
        });
        for (u, v) in mask.pixels().collect::<Vec<_>>() {
            let ray = top_down_ray(&cam, u as f64, v as f64);
            let hit = add(eye, scale(ray, dot(sub(c, eye), n) / dot(ray, n)));
            depth.set(u, v, (eye[2] - hit[2]) as f32);
        }
        let part = PartMask::new(1, "top", mask);
        let view = mask_view_direction(&part.mask, &cam).unwrap();
        let fit = fit_surface(&part, &depth, &cam, &view, &PartModelConfig::default()).unwrap();
        let normal = arr(&fit.normal.into_inner());
        prop_assert!(dot(normal, arr(&view.into_inner())) < 0.0);
        prop_assert!(dot(normal, n).abs().min(1.0).acos().to_degrees() < 0.1);
        prop_assert!(dot(sub(arr(&fit.center), c), n).abs() <= 1e-6);
    }

    #[test]
    fn arm_filtering_keeps_order(masks in proptest::collection::vec(small_mask(), 0..8), arm in small_mask()) {
        let parts: Vec<PartMask> = masks.into_iter().enumerate().map(|(i, m)| PartMask::new(i as u32, "cam", m)).collect();
        let kept = filter_arm_masks(parts.clone(), &arm).unwrap();
        let mut k = kept.iter().peekable();
        for p in &parts {
            let keep = 2 * p.mask.overlap(&arm) <= p.mask.count();
            if k.peek().map(|q| q.id) == Some(p.id) {
                prop_assert!(keep);
                prop_assert_eq!(k.next().unwrap(), p);
            } else {
                prop_assert!(!keep);
            }
        }
        prop_assert!(k.next().is_none());
    }
}

#[test]
fn mismatched_arm_mask_is_rejected() {
    let part = PartMask::new(1, "cam", BinaryMask::new(4, 4));
    assert!(filter_arm_masks(vec![part], &BinaryMask::new(5, 4)).is_err());
}

