//! Simulated range scanner.

use std::f64::consts::PI;

use nalgebra::{Rotation2, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::collision::{Body, Point};
use crate::obstacle::{Ray, Scan};

/// A body placed in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedBody {
    pub pose: Vector3<f64>,
    pub body: Body,
}

/// Distance along the unit ray `origin + t·dir` to the first hit, if any.
pub fn ray_hit(origin: &Point, dir: &Vector2<f64>, target: &PlacedBody) -> Option<f64> {
    let c = target.pose.xy();
    match &target.body {
        Body::Sphere { radius } => {
            let oc = c - origin;
            let t_mid = dir.dot(&oc);
            let perp2 = oc.norm_squared() - t_mid * t_mid;
            let disc = radius * radius - perp2;
            if disc < 0.0 {
                return None;
            }
            let t = t_mid - disc.sqrt();
            (t > 0.0).then_some(t)
        }
        Body::Polygon(poly) => {
            let rot = Rotation2::new(target.pose.z);
            let v: Vec<Point> = poly.vertices().iter().map(|p| rot * p + c).collect();
            let mut best: Option<f64> = None;
            for i in 0..v.len() {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                let e = b - a;
                let denom = dir.perp(&e);
                if denom.abs() < 1e-15 {
                    continue;
                }
                let w = a - origin;
                let t = w.perp(&e) / denom;
                let s = w.perp(dir) / denom;
                if t > 0.0 && (0.0..=1.0).contains(&s) && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
            best
        }
    }
}

/// Scan from `pose` over `n_rays` bearings in `[−π, π)`, with Gaussian
/// range noise on every return.
pub fn simulate_scan<R: Rng>(
    pose: &Vector3<f64>,
    targets: &[PlacedBody],
    n_rays: usize,
    max_range: f64,
    range_sd: f64,
    timestamp: f64,
    rng: &mut R,
) -> Scan {
    let noise = Normal::new(0.0, range_sd.max(0.0)).expect("finite standard deviation");
    let origin = pose.xy();
    let rays = (0..n_rays)
        .map(|i| {
            let bearing = -PI + 2.0 * PI * i as f64 / n_rays as f64;
            let h = pose.z + bearing;
            let dir = Vector2::new(h.cos(), h.sin());
            let hit = targets
                .iter()
                .filter_map(|t| ray_hit(&origin, &dir, t))
                .fold(f64::INFINITY, f64::min);
            let range = if hit < max_range {
                (hit + noise.sample(rng)).clamp(1e-3, max_range - 1e-3)
            } else {
                max_range
            };
            Ray { bearing, range }
        })
        .collect();
    Scan {
        rays,
        max_range,
        timestamp,
    }
}
