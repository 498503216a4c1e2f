//! Dynamic obstacle estimation from range-bearing scans and short-horizon
//! prediction of obstacle position beliefs.

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::belief::PoseBelief;
use crate::collision::PositionBelief;
use crate::error::{Error, Result};

/// Rays closer than this to the maximum range count as "no return".
pub const MAX_RANGE_MARGIN: f64 = 1e-6;
/// Consecutive velocity changes above this (m/s) trigger a warning.
pub const VELOCITY_JUMP_WARNING: f64 = 0.5;
/// Default number of estimates used to derive velocities.
pub const DEFAULT_BURST: usize = 5;

/// One ray of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub bearing: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub rays: Vec<Ray>,
    pub max_range: f64,
    pub timestamp: f64,
}

impl Scan {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::InvalidInput(
                "scan max_range must be positive".into(),
            ));
        }
        for (i, w) in self.rays.windows(2).enumerate() {
            if !(w[1].bearing > w[0].bearing) {
                return Err(Error::InvalidInput(format!(
                    "scan bearings must increase strictly (rays {i} and {})",
                    i + 1
                )));
            }
        }
        if let Some(r) = self
            .rays
            .iter()
            .find(|r| !(r.range > 0.0 && r.range <= self.max_range))
        {
            return Err(Error::InvalidInput(format!(
                "ray range {} outside (0, {}]",
                r.range, self.max_range
            )));
        }
        Ok(())
    }
}

/// Splits a scan into contiguous runs of returns separated by max-range
/// rays.
pub fn cluster_scan(scan: &Scan) -> Vec<Scan> {
    let mut out = Vec::new();
    let mut current: Vec<Ray> = Vec::new();
    for ray in &scan.rays {
        if ray.range < scan.max_range - MAX_RANGE_MARGIN {
            current.push(*ray);
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out.into_iter()
        .map(|rays| Scan {
            rays,
            max_range: scan.max_range,
            timestamp: scan.timestamp,
        })
        .collect()
}

/// Range and bearing noise of the scanner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanNoise {
    pub range_var: f64,
    pub bearing_var: f64,
}

impl Default for ScanNoise {
    fn default() -> Self {
        ScanNoise {
            range_var: 0.01,
            bearing_var: 1e-4,
        }
    }
}

/// Obstacle-centre pseudo-measurement in world coordinates: the shortest
/// ray extended by the obstacle radius, with its covariance (sensor noise
/// plus robot pose uncertainty mapped through the ray geometry).
pub fn pseudo_measurement(
    robot: &PoseBelief,
    cluster: &Scan,
    obstacle_radius: f64,
    noise: &ScanNoise,
) -> Result<PositionBelief> {
    let ray = cluster
        .rays
        .iter()
        .min_by(|a, b| a.range.total_cmp(&b.range))
        .ok_or_else(|| Error::InsufficientData("empty cluster".into()))?;
    let r = ray.range + obstacle_radius;
    let heading = robot.mean.z + ray.bearing;
    let (s, c) = heading.sin_cos();
    let mean = robot.mean.xy() + Vector2::new(r * c, r * s);
    let j = Matrix2::new(c, -r * s, s, r * c);
    let q = Matrix2::from_diagonal(&Vector2::new(noise.range_var, noise.bearing_var));
    // Robot pose enters through position and, via the lever arm, heading.
    let j_pose = Matrix2x3::new(1.0, 0.0, -r * s, 0.0, 1.0, r * c);
    Ok(PositionBelief {
        mean,
        covariance: j * q * j.transpose() + j_pose * robot.covariance * j_pose.transpose(),
    })
}

/// MAP fusion of a prior obstacle position with one scan cluster.
pub fn estimate_location(
    robot: &PoseBelief,
    cluster: &Scan,
    prior: &PositionBelief,
    obstacle_radius: f64,
    noise: &ScanNoise,
) -> Result<PositionBelief> {
    let m = pseudo_measurement(robot, cluster, obstacle_radius, noise)?;
    fuse(prior, &m)
}

/// Product of two Gaussians over the same position.
pub fn fuse(a: &PositionBelief, b: &PositionBelief) -> Result<PositionBelief> {
    let s = a.covariance + b.covariance;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Singular("sum of prior and measurement covariances".into()))?;
    let k = a.covariance * s_inv;
    let cov = a.covariance - k * a.covariance;
    Ok(PositionBelief {
        mean: a.mean + k * (b.mean - a.mean),
        covariance: (cov + cov.transpose()) * 0.5,
    })
}

/// Obstacle position history with finite-difference motion statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTrack {
    pub positions: Vec<PositionBelief>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    /// Variance of the largest velocity change along x.
    pub ax_max_cov: f64,
    /// Variance of the largest velocity change along y.
    pub ay_max_cov: f64,
    pub dt: f64,
    pub warnings: Vec<String>,
}

/// Forward-difference velocities and the variance of the largest velocity
/// change.
pub fn estimate_velocities(positions: &[PositionBelief], dt: f64) -> Result<ObstacleTrack> {
    if positions.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 positions for velocities, got {}",
            positions.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    let vx: Vec<f64> = positions
        .windows(2)
        .map(|w| (w[1].mean.x - w[0].mean.x) / dt)
        .collect();
    let vy: Vec<f64> = positions
        .windows(2)
        .map(|w| (w[1].mean.y - w[0].mean.y) / dt)
        .collect();
    // Variance of velocity i along one axis.
    let var_v = |i: usize, axis: usize| {
        (positions[i].covariance[(axis, axis)] + positions[i + 1].covariance[(axis, axis)])
            / (dt * dt)
    };
    let max_change = |v: &[f64], axis: usize| -> (f64, f64) {
        if v.len() < 2 {
            return (0.0, var_v(0, axis));
        }
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..v.len() - 1 {
            let d = (v[i + 1] - v[i]).abs();
            if d > best.1 {
                best = (i, d);
            }
        }
        (best.1, var_v(best.0, axis) + var_v(best.0 + 1, axis))
    };
    let (jump_x, ax_max_cov) = max_change(&vx, 0);
    let (jump_y, ay_max_cov) = max_change(&vy, 1);
    let mut warnings = Vec::new();
    if jump_x.max(jump_y) > VELOCITY_JUMP_WARNING {
        warnings.push(format!(
            "consecutive velocities differ by {:.3} m/s; the smooth-motion assumption may not hold",
            jump_x.max(jump_y)
        ));
    }
    Ok(ObstacleTrack {
        positions: positions.to_vec(),
        vx,
        vy,
        ax_max_cov,
        ay_max_cov,
        dt,
        warnings,
    })
}

/// Predicted obstacle position beliefs for steps `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePrediction {
    pub steps: Vec<PositionBelief>,
}

impl ObstacleTrack {
    /// Latest velocity and acceleration estimates.
    pub fn last_motion(&self) -> (Vector2<f64>, Vector2<f64>) {
        let n = self.vx.len();
        let v = Vector2::new(self.vx[n - 1], self.vy[n - 1]);
        let a = if n >= 2 {
            Vector2::new(
                self.vx[n - 1] - self.vx[n - 2],
                self.vy[n - 1] - self.vy[n - 2],
            ) / self.dt
        } else {
            Vector2::zeros()
        };
        (v, a)
    }

    /// One-step process noise for a prediction step of length `dt`.
    pub fn process_noise(&self, dt: f64) -> Matrix2<f64> {
        let d4 = dt.powi(4);
        Matrix2::from_diagonal(&Vector2::new(
            0.25 * self.ax_max_cov * d4,
            0.25 * self.ay_max_cov * d4,
        ))
    }
}

/// When the second-order term enters the predicted mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrder {
    Always,
    /// Per axis, only when the last second difference exceeds this many
    /// of its own standard deviations.
    Significant(f64),
    Never,
}

/// Options for [`predict_obstacle_with`]. The default reproduces
/// [`predict_obstacle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    #[serde(default = "PredictionConfig::d_second_order")]
    pub second_order: SecondOrder,
    /// Adds the variance the extrapolation inherits from the estimates it
    /// is built from, treating them as independent. Without it only the
    /// last estimate's covariance and the process noise are carried.
    #[serde(default)]
    pub propagate_estimate_covariance: bool,
}

impl PredictionConfig {
    fn d_second_order() -> SecondOrder {
        SecondOrder::Always
    }
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            second_order: SecondOrder::Always,
            propagate_estimate_covariance: false,
        }
    }
}

/// Second-order Taylor prediction from the last estimate; noise accumulates
/// linearly with the step index.
pub fn predict_obstacle(
    track: &ObstacleTrack,
    steps: usize,
    dt: f64,
) -> Result<ObstaclePrediction> {
    predict_obstacle_with(track, steps, dt, &PredictionConfig::default())
}

pub fn predict_obstacle_with(
    track: &ObstacleTrack,
    steps: usize,
    dt: f64,
    cfg: &PredictionConfig,
) -> Result<ObstaclePrediction> {
    let n = track.positions.len();
    if n < 2 || track.vx.is_empty() {
        return Err(Error::InsufficientData(
            "track needs at least 2 positions".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt = {dt} must be positive")));
    }
    let last = track.positions[n - 1];
    let (v, mut a) = track.last_motion();
    // Per-axis switch for the second-order term.
    let mut use_a = [n >= 3; 2];
    match cfg.second_order {
        SecondOrder::Always => {}
        SecondOrder::Never => use_a = [false; 2],
        SecondOrder::Significant(k) if n >= 3 => {
            let c = |i: usize| track.positions[i].covariance;
            let var = (c(n - 1) + c(n - 2) * 4.0 + c(n - 3)) / track.dt.powi(4);
            for (axis, on) in use_a.iter_mut().enumerate() {
                *on = a[axis].abs() >= k * var[(axis, axis)].sqrt();
            }
        }
        SecondOrder::Significant(_) => {}
    }
    for axis in 0..2 {
        if !use_a[axis] {
            a[axis] = 0.0;
        }
    }
    let noise = track.process_noise(dt);
    let steps = (1..=steps)
        .map(|l| {
            let t = l as f64 * dt;
            let mut covariance = last.covariance + noise * l as f64;
            if cfg.propagate_estimate_covariance {
                covariance += extrapolation_covariance(track, t / track.dt, use_a);
            }
            PositionBelief {
                mean: last.mean + v * t + a * (0.5 * t * t),
                covariance,
            }
        })
        .collect();
    Ok(ObstaclePrediction { steps })
}

/// Extra covariance of `s_n + τ(s_n − s_{n−1}) + ½τ²(s_n − 2s_{n−1} + s_{n−2})`
/// beyond that of `s_n`, for `τ` estimate intervals ahead.
fn extrapolation_covariance(track: &ObstacleTrack, tau: f64, use_a: [bool; 2]) -> Matrix2<f64> {
    let n = track.positions.len();
    let h = 0.5 * tau * tau;
    // Coefficients on s_n, s_{n−1}, s_{n−2} per axis.
    let coeffs = |on: bool| {
        if on {
            [1.0 + tau + h, -tau - 2.0 * h, h]
        } else {
            [1.0 + tau, -tau, 0.0]
        }
    };
    let (cx, cy) = (coeffs(use_a[0]), coeffs(use_a[1]));
    let mut out = Matrix2::zeros();
    for j in 0..3 {
        if j >= n {
            break;
        }
        let d = Matrix2::from_diagonal(&Vector2::new(cx[j], cy[j]));
        out += d * track.positions[n - 1 - j].covariance * d;
    }
    out - track.positions[n - 1].covariance
}

/// Tracks one obstacle from successive scan clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTracker {
    pub radius: f64,
    pub prior_covariance: Matrix2<f64>,
    pub noise: ScanNoise,
    pub burst: usize,
    pub history: Vec<PositionBelief>,
    pub dt: f64,
    pub prediction: PredictionConfig,
}

impl ObstacleTracker {
    pub fn new(radius: f64, prior_covariance: Matrix2<f64>, noise: ScanNoise, dt: f64) -> Self {
        ObstacleTracker {
            radius,
            prior_covariance,
            noise,
            burst: DEFAULT_BURST,
            history: Vec::new(),
            dt,
            prediction: PredictionConfig::default(),
        }
    }

    /// Mean the next estimate is expected near, if any history exists.
    pub fn predicted_mean(&self) -> Option<Vector2<f64>> {
        self.predicted().map(|p| p.mean)
    }

    /// One-step prediction used as the prior for the next scan. With a
    /// single estimate the motion is unknown and the configured prior
    /// covariance is used around it.
    pub fn predicted(&self) -> Option<PositionBelief> {
        match self.history.len() {
            0 => None,
            1 => Some(PositionBelief {
                mean: self.history[0].mean,
                covariance: self.prior_covariance,
            }),
            _ => {
                let track = self.track().ok()?;
                predict_obstacle_with(&track, 1, self.dt, &self.prediction)
                    .ok()
                    .map(|p| p.steps[0])
            }
        }
    }

    /// Fuses a cluster with the predicted prior, or with the configured
    /// prior centred on the measurement for a new track.
    pub fn update(&mut self, robot: &PoseBelief, cluster: &Scan) -> Result<PositionBelief> {
        let m = pseudo_measurement(robot, cluster, self.radius, &self.noise)?;
        let prior = self.predicted().unwrap_or(PositionBelief {
            mean: m.mean,
            covariance: self.prior_covariance,
        });
        let est = fuse(&prior, &m)?;
        self.history.push(est);
        if self.history.len() > self.burst.max(3) {
            self.history.remove(0);
        }
        Ok(est)
    }

    /// Records that no cluster matched this tick: the prediction becomes
    /// the estimate with inflated covariance.
    pub fn coast(&mut self) {
        if let Some(mean) = self.predicted_mean() {
            let last = self.history[self.history.len() - 1];
            self.history.push(PositionBelief {
                mean,
                covariance: last.covariance + self.prior_covariance * 0.1,
            });
            if self.history.len() > self.burst.max(3) {
                self.history.remove(0);
            }
        }
    }

    pub fn track(&self) -> Result<ObstacleTrack> {
        estimate_velocities(&self.history, self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn ray(b: f64, r: f64) -> Ray {
        Ray {
            bearing: b,
            range: r,
        }
    }

    fn scan(ranges: &[f64]) -> Scan {
        Scan {
            rays: ranges
                .iter()
                .enumerate()
                .map(|(i, r)| ray(i as f64 * 0.01, *r))
                .collect(),
            max_range: 3.5,
            timestamp: 0.0,
        }
    }

    #[test]
    fn clustering_examples() {
        assert!(cluster_scan(&scan(&[3.5; 8])).is_empty());
        let c = cluster_scan(&scan(&[3.5, 1.0, 1.1, 1.2, 1.1, 1.0, 3.5]));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].rays.len(), 5);
        let c = cluster_scan(&scan(&[1.0, 1.1, 3.5, 2.0, 2.1]));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn location_examples() {
        let robot = PoseBelief::new(Vector3::zeros(), Matrix3::zeros()).unwrap();
        let cluster = Scan {
            rays: vec![ray(-0.05, 1.02), ray(0.0, 1.0), ray(0.05, 1.02)],
            max_range: 3.5,
            timestamp: 0.0,
        };
        let prior = PositionBelief::isotropic(1.3, 0.0, 0.1).unwrap();
        let est = estimate_location(&robot, &cluster, &prior, 0.22, &ScanNoise::default()).unwrap();
        assert!(est.mean.x > 1.22 && est.mean.x < 1.3, "{}", est.mean.x);
        assert!(est.mean.y.abs() < 1e-12);

        let exact = PositionBelief::isotropic(1.22, 0.0, 0.1).unwrap();
        let est = estimate_location(&robot, &cluster, &exact, 0.22, &ScanNoise::default()).unwrap();
        assert!((est.mean - exact.mean).norm() < 1e-12);
        assert!(est.covariance.trace() < exact.covariance.trace());

        let vague = PositionBelief::isotropic(-4.0, 3.0, 1e8).unwrap();
        let est = estimate_location(&robot, &cluster, &vague, 0.22, &ScanNoise::default()).unwrap();
        assert!((est.mean - Vector2::new(1.22, 0.0)).norm() < 1e-3);
    }

    fn at(x: f64, y: f64, var: f64) -> PositionBelief {
        PositionBelief::isotropic(x, y, var).unwrap()
    }

    #[test]
    fn velocity_examples() {
        let t = estimate_velocities(
            &[at(0.0, 0.0, 0.01), at(0.5, 0.0, 0.01), at(1.0, 0.0, 0.01)],
            1.0,
        )
        .unwrap();
        assert_eq!(t.vx, vec![0.5, 0.5]);
        assert_eq!(t.vy, vec![0.0, 0.0]);
        let s = estimate_velocities(&[at(2.0, 1.0, 0.01); 4], 0.1).unwrap();
        assert!(s.vx.iter().chain(&s.vy).all(|v| *v == 0.0));
        let t = estimate_velocities(
            &[at(0.0, 0.0, 0.01), at(0.1, 0.0, 0.01), at(0.3, 0.0, 0.01)],
            0.5,
        )
        .unwrap();
        assert!((t.ax_max_cov - 0.16).abs() < 1e-15);
        assert!(estimate_velocities(&[at(0.0, 0.0, 0.01)], 0.5).is_err());
    }

    #[test]
    fn prediction_examples() {
        let s = estimate_velocities(&[at(2.0, 1.0, 0.01); 4], 0.1).unwrap();
        let p = predict_obstacle(&s, 5, 0.1).unwrap();
        assert!(p.steps.iter().all(|b| b.mean == Vector2::new(2.0, 1.0)));

        let cv: Vec<_> = (0..4).map(|i| at(0.1 * i as f64, 0.0, 0.01)).collect();
        let t = estimate_velocities(&cv, 0.1).unwrap();
        let p = predict_obstacle(&t, 3, 0.1).unwrap();
        for (l, b) in p.steps.iter().enumerate() {
            assert!((b.mean.x - (0.3 + 0.1 * (l + 1) as f64)).abs() < 1e-12);
        }

        let mut t = t;
        t.ax_max_cov = 0.04;
        assert!((t.process_noise(0.5)[(0, 0)] - 6.25e-4).abs() < 1e-18);
    }
}
