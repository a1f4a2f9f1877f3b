//! BFGS with a weak-Wolfe bisection line search, which stays usable on
//! objectives that are only piecewise smooth.

use nalgebra::{SMatrix, SVector};

pub type Vec6 = SVector<f64, 6>;
type Mat6 = SMatrix<f64, 6, 6>;

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Stop once `f ≤ floor + floor_tolerance`.
    pub floor: f64,
    pub floor_tolerance: f64,
    pub gradient_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_steps: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            floor: f64::NEG_INFINITY,
            floor_tolerance: 1e-12,
            gradient_tolerance: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            max_line_steps: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec6,
    pub f: f64,
    pub iterations: usize,
}

/// Returns `(alpha, f, g)` at an accepted step, or `None` when no step
/// within `max_line_steps` bisections decreases `f`.
fn line_search<F>(
    obj: &mut F,
    x: &Vec6,
    f0: f64,
    g0: &Vec6,
    d: &Vec6,
    cfg: &BfgsConfig,
) -> Option<(f64, f64, Vec6)>
where
    F: FnMut(&Vec6) -> (f64, Vec6),
{
    let slope = g0.dot(d);
    if slope >= 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut alpha = 1.0;
    let mut best_decrease: Option<(f64, f64, Vec6)> = None;
    for _ in 0..cfg.max_line_steps {
        let (f, g) = obj(&(x + d * alpha));
        if !f.is_finite() || f > f0 + cfg.c1 * alpha * slope {
            hi = alpha;
        } else {
            if f < f0 && best_decrease.as_ref().is_none_or(|b| f < b.1) {
                best_decrease = Some((alpha, f, g));
            }
            if g.dot(d) < cfg.c2 * slope {
                lo = alpha;
            } else {
                return Some((alpha, f, g));
            }
        }
        alpha = if hi.is_finite() {
            (lo + hi) / 2.0
        } else {
            2.0 * lo
        };
    }
    // Armijo-only step is still progress on a nonsmooth objective.
    best_decrease
}

pub fn minimize<F>(mut obj: F, x0: Vec6, cfg: &BfgsConfig) -> BfgsOutcome
where
    F: FnMut(&Vec6) -> (f64, Vec6),
{
    let mut x = x0;
    let (mut f, mut g) = obj(&x);
    let mut h = Mat6::identity();
    let mut reset = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if f - cfg.floor <= cfg.floor_tolerance || g.norm() <= cfg.gradient_tolerance {
            break;
        }
        let d = -(h * g);
        let Some((alpha, f_new, g_new)) = line_search(&mut obj, &x, f, &g, &d, cfg) else {
            if reset {
                break;
            }
            h = Mat6::identity();
            reset = true;
            continue;
        };
        reset = false;
        iterations += 1;
        let s = d * alpha;
        let y = g_new - g;
        x += s;
        f = f_new;
        g = g_new;
        if s.norm() < 1e-15 {
            break;
        }
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let rho = 1.0 / sy;
            let i = Mat6::identity();
            h = (i - s * y.transpose() * rho) * h * (i - y * s.transpose() * rho)
                + s * s.transpose() * rho;
        }
    }
    BfgsOutcome { x, f, iterations }
}
