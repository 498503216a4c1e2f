//! Collision probability between two Gaussian-positioned bodies.

pub mod geometry;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::quadform::{self, QuadFormSpec, SeriesConfig, SeriesResult};
pub use geometry::{convex_hull, minkowski_difference, polygons_overlap, ConvexPolygon, Point};

/// Gaussian belief over a 2D position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionBelief {
    pub mean: Vector2<f64>,
    pub covariance: Matrix2<f64>,
}

impl PositionBelief {
    pub fn new(mean: Vector2<f64>, covariance: Matrix2<f64>) -> Result<Self> {
        let b = PositionBelief { mean, covariance };
        b.validate()?;
        Ok(b)
    }

    pub fn isotropic(x: f64, y: f64, variance: f64) -> Result<Self> {
        PositionBelief::new(Vector2::new(x, y), Matrix2::identity() * variance)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.covariance;
        if !(self.mean.iter().chain(c.iter()).all(|v| v.is_finite())) {
            return Err(Error::InvalidInput(
                "position belief has non-finite entries".into(),
            ));
        }
        if (c[(0, 1)] - c[(1, 0)]).abs() > 1e-12 * c.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(
                "position covariance is not symmetric".into(),
            ));
        }
        let min = c.symmetric_eigenvalues().min();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                name: "position covariance".into(),
                min_eigenvalue: min,
            });
        }
        Ok(())
    }
}

/// Rigid body shape attached to a reference point.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Sphere { radius: f64 },
    Polygon(ConvexPolygon),
}

impl Body {
    pub fn sphere(radius: f64) -> Result<Body> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "radius {radius} must be positive"
            )));
        }
        Ok(Body::Sphere { radius })
    }

    /// Body rotated about its reference point; spheres are unchanged.
    pub fn rotated(&self, theta: f64) -> Body {
        match self {
            Body::Sphere { radius } => Body::Sphere { radius: *radius },
            Body::Polygon(p) => Body::Polygon(p.rotated(theta)),
        }
    }

    /// Largest distance from the reference point to the body.
    pub fn circumradius(&self) -> f64 {
        match self {
            Body::Sphere { radius } => *radius,
            Body::Polygon(p) => p.circumradius(),
        }
    }
}

/// How polygonal bodies are reduced to a single radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusMode {
    /// Circumradius of the configuration-space obstacle `S ⊖ R` about the
    /// obstacle reference point. Never misses a collision.
    #[default]
    ConfigurationSpace,
    /// Circumradius of the obstacle alone, ignoring the robot's extent.
    /// Kept for comparison only: it can miss collisions.
    ObstacleOnly,
}

/// Radius `r` such that the bodies can only overlap when the reference
/// points are at most `r` apart.
pub fn effective_radius(robot: &Body, obstacle: &Body) -> Result<f64> {
    effective_radius_with(robot, obstacle, RadiusMode::ConfigurationSpace)
}

pub fn effective_radius_with(robot: &Body, obstacle: &Body, mode: RadiusMode) -> Result<f64> {
    if mode == RadiusMode::ObstacleOnly {
        return Ok(obstacle.circumradius());
    }
    match (robot, obstacle) {
        (Body::Sphere { radius: r }, Body::Sphere { radius: s }) => Ok(r + s),
        // A disk swept around a polygon: the farthest point sits past the
        // farthest vertex by exactly the disk radius.
        (Body::Sphere { radius: r }, Body::Polygon(s)) => Ok(s.circumradius() + r),
        (Body::Polygon(r), Body::Sphere { radius: s }) => Ok(r.circumradius() + s),
        (Body::Polygon(r), Body::Polygon(s)) => Ok(minkowski_difference(s, r)?.circumradius()),
    }
}

/// One collision query between a robot and an obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionQuery {
    pub robot: PositionBelief,
    pub robot_body: Body,
    pub obstacle: PositionBelief,
    pub obstacle_body: Body,
    pub delta: f64,
    pub epsilon: f64,
}

impl CollisionQuery {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.obstacle.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon = {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "delta = {} must be positive",
                self.delta
            )));
        }
        Ok(())
    }
}

/// `P(‖w‖ ≤ radius)` for `w ~ N(mean, covariance)` in the plane.
pub fn disk_probability(
    mean: &Vector2<f64>,
    covariance: &Matrix2<f64>,
    radius: f64,
    cfg: &SeriesConfig,
) -> Result<SeriesResult> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "radius {radius} must be positive"
        )));
    }
    let spec = QuadFormSpec::new(
        DMatrix::identity(2, 2),
        DVector::from_column_slice(mean.as_slice()),
        DMatrix::from_column_slice(2, 2, covariance.as_slice()),
    )?;
    let params = quadform::spectral_decompose(&spec)?;
    quadform::cdf_with(&params, radius * radius, cfg)
}

pub fn collision_probability(query: &CollisionQuery) -> Result<SeriesResult> {
    collision_probability_with(query, &SeriesConfig::with_delta(query.delta))
}

/// Like [`collision_probability`] but with explicit series settings
/// (`cfg.delta` takes precedence over `query.delta`).
pub fn collision_probability_with(
    query: &CollisionQuery,
    cfg: &SeriesConfig,
) -> Result<SeriesResult> {
    query.validate()?;
    let radius = effective_radius(&query.robot_body, &query.obstacle_body)?;
    let mean = query.robot.mean - query.obstacle.mean;
    let cov = query.robot.covariance + query.obstacle.covariance;
    disk_probability(&mean, &cov, radius, cfg)
}

/// `P(C) + bound ≤ 1 − ε`, taking the certified error on the unsafe side.
pub fn is_epsilon_safe(prob: &SeriesResult, epsilon: f64) -> bool {
    prob.value + prob.error_bound <= 1.0 - epsilon
}
