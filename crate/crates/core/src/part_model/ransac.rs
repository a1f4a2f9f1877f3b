//! RANSAC plane fitting with a least-squares refit on the consensus set.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{unit, UnitVec3, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Point-to-plane distance (m) below which a point is an inlier.
    pub inlier_distance: f64,
    pub iterations: usize,
    pub min_points: usize,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_distance: 0.005,
            iterations: 500,
            min_points: 30,
            min_inlier_ratio: 0.5,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit {
    pub normal: UnitVec3,
    /// Centroid of the final inlier set.
    pub center: Vec3,
    pub inliers: Vec<usize>,
}

impl PlaneFit {
    pub fn inlier_ratio(&self, total: usize) -> f64 {
        self.inliers.len() as f64 / total as f64
    }
}

/// Total-least-squares plane: centroid plus the covariance eigenvector with
/// the smallest eigenvalue.
pub fn least_squares_plane(points: &[Vec3]) -> Option<(Vec3, UnitVec3)> {
    if points.len() < 3 {
        return None;
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imin();
    unit(eig.eigenvectors.column(i).into_owned()).map(|n| (centroid, n))
}

fn inliers_of(points: &[Vec3], origin: &Vec3, normal: &Vec3, threshold: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - origin).dot(normal).abs() <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Best plane by inlier count (ties keep the earliest hypothesis), then two
/// rounds of least-squares refit and inlier re-selection.
///
/// Returns `None` when fewer than three points are given or every sampled
/// triple is degenerate.
pub fn fit_plane(points: &[Vec3], cfg: &RansacConfig) -> Option<PlaneFit> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Vec<usize>> = None;
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let (a, b, c) = (points[i], points[j], points[k]);
        let Some(normal) = unit((b - a).cross(&(c - a))) else {
            continue;
        };
        let inliers = inliers_of(points, &a, &normal, cfg.inlier_distance);
        if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
            best = Some(inliers);
        }
    }
    let mut inliers = best?;
    let mut plane = None;
    for _ in 0..2 {
        let subset: Vec<Vec3> = inliers.iter().map(|&i| points[i]).collect();
        let Some((c, nrm)) = least_squares_plane(&subset) else {
            break;
        };
        plane = Some((c, nrm));
        let refit = inliers_of(points, &c, &nrm, cfg.inlier_distance);
        if refit.len() < 3 {
            break;
        }
        inliers = refit;
    }
    let (_, normal) = plane?;
    let center = inliers.iter().map(|&i| points[i]).sum::<Vec3>() / inliers.len() as f64;
    Some(PlaneFit {
        normal,
        center,
        inliers,
    })
}
