//! Motion and observation models with EKF prediction and updates, including
//! the update that accounts for uncertainty in the observed object.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::collision::PositionBelief;
use crate::error::{Error, Result};

/// Heading variance used when an object belief only constrains position.
pub const FREE_HEADING_VARIANCE: f64 = 1e6;
/// Below this turn rate the unicycle model uses its straight-line limit.
pub const STRAIGHT_LINE_OMEGA: f64 = 1e-6;
/// Relative tolerance between the two posterior covariance forms.
pub const FORM_AGREEMENT_TOL: f64 = 1e-8;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseBelief {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl PoseBelief {
    pub fn new(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self> {
        let b = PoseBelief {
            mean: Vector3::new(mean.x, mean.y, wrap_angle(mean.z)),
            covariance,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self
            .mean
            .iter()
            .chain(self.covariance.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidInput(
                "pose belief has non-finite entries".into(),
            ));
        }
        let min = symmetrize3(&self.covariance).symmetric_eigenvalues().min();
        if min < -1e-10 {
            return Err(Error::NotPositiveDefinite {
                name: "pose covariance".into(),
                min_eigenvalue: min,
            });
        }
        Ok(())
    }

    /// Marginal over the `(x, y)` position.
    pub fn position(&self) -> PositionBelief {
        PositionBelief {
            mean: self.mean.xy(),
            covariance: self.covariance.fixed_view::<2, 2>(0, 0).into_owned(),
        }
    }
}

/// Gaussian over the viewpoint pose from which an object is best observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectBelief {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl ObjectBelief {
    pub fn new(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self> {
        let min = symmetrize3(&covariance).symmetric_eigenvalues().min();
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite {
                name: "object covariance".into(),
                min_eigenvalue: min,
            });
        }
        Ok(ObjectBelief { mean, covariance })
    }

    /// Belief that only constrains position; the heading is left free.
    pub fn from_position(
        position: Vector2<f64>,
        covariance: Matrix2<f64>,
        heading: f64,
    ) -> Result<Self> {
        let mut cov = Matrix3::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&covariance);
        cov[(2, 2)] = FREE_HEADING_VARIANCE;
        ObjectBelief::new(Vector3::new(position.x, position.y, heading), cov)
    }
}

/// Robot control input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    /// Rotate, translate, rotate.
    Odometry { rot1: f64, trans: f64, rot2: f64 },
    /// Linear and angular velocity held for `dt`.
    Velocity { v: f64, omega: f64 },
}

impl Control {
    pub fn zero(&self) -> Control {
        match self {
            Control::Odometry { .. } => Control::Odometry {
                rot1: 0.0,
                trans: 0.0,
                rot2: 0.0,
            },
            Control::Velocity { .. } => Control::Velocity { v: 0.0, omega: 0.0 },
        }
    }

    /// Components as a plain vector, for cost evaluation.
    pub fn as_vec(&self) -> Vec<f64> {
        match *self {
            Control::Odometry { rot1, trans, rot2 } => vec![rot1, trans, rot2],
            Control::Velocity { v, omega } => vec![v, omega],
        }
    }
}

pub fn odometry_step(pose: &Vector3<f64>, rot1: f64, trans: f64, rot2: f64) -> Vector3<f64> {
    let h = pose.z + rot1;
    Vector3::new(
        pose.x + trans * h.cos(),
        pose.y + trans * h.sin(),
        wrap_angle(pose.z + rot1 + rot2),
    )
}

pub fn unicycle_step(pose: &Vector3<f64>, v: f64, omega: f64, dt: f64) -> Vector3<f64> {
    let th = pose.z;
    if omega.abs() < STRAIGHT_LINE_OMEGA {
        return Vector3::new(
            pose.x + v * dt * th.cos(),
            pose.y + v * dt * th.sin(),
            wrap_angle(th + omega * dt),
        );
    }
    let r = v / omega;
    let th1 = th + omega * dt;
    Vector3::new(
        pose.x + r * (th1.sin() - th.sin()),
        pose.y - r * (th1.cos() - th.cos()),
        wrap_angle(th1),
    )
}

/// Applies a control for one step.
pub fn propagate(pose: &Vector3<f64>, control: &Control, dt: f64) -> Vector3<f64> {
    match *control {
        Control::Odometry { rot1, trans, rot2 } => odometry_step(pose, rot1, trans, rot2),
        Control::Velocity { v, omega } => unicycle_step(pose, v, omega, dt),
    }
}

/// Jacobian of [`propagate`] with respect to the pose.
pub fn motion_jacobian(pose: &Vector3<f64>, control: &Control, dt: f64) -> Matrix3<f64> {
    let th = pose.z;
    match *control {
        Control::Odometry { rot1, trans, .. } => {
            let h = th + rot1;
            Matrix3::new(
                1.0,
                0.0,
                -trans * h.sin(),
                0.0,
                1.0,
                trans * h.cos(),
                0.0,
                0.0,
                1.0,
            )
        }
        Control::Velocity { v, omega } => {
            if omega.abs() < STRAIGHT_LINE_OMEGA {
                Matrix3::new(
                    1.0,
                    0.0,
                    -v * dt * th.sin(),
                    0.0,
                    1.0,
                    v * dt * th.cos(),
                    0.0,
                    0.0,
                    1.0,
                )
            } else {
                let r = v / omega;
                let th1 = th + omega * dt;
                Matrix3::new(
                    1.0,
                    0.0,
                    r * (th1.cos() - th.cos()),
                    0.0,
                    1.0,
                    r * (th1.sin() - th.sin()),
                    0.0,
                    0.0,
                    1.0,
                )
            }
        }
    }
}

/// Range and bearing of `object` seen from `pose`.
pub fn range_bearing(pose: &Vector3<f64>, object: &Vector2<f64>) -> Result<Vector2<f64>> {
    let d = object - pose.xy();
    let r = d.norm();
    if r <= 1e-9 {
        return Err(Error::DegenerateMeasurement(format!(
            "object at ({}, {}) coincides with the robot position",
            object.x, object.y
        )));
    }
    Ok(Vector2::new(r, wrap_angle(d.y.atan2(d.x) - pose.z)))
}

/// Jacobian of [`range_bearing`] with respect to the pose.
pub fn range_bearing_jacobian(
    pose: &Vector3<f64>,
    object: &Vector2<f64>,
) -> Result<Matrix2x3<f64>> {
    let d = object - pose.xy();
    let q = d.norm_squared();
    let r = q.sqrt();
    if r <= 1e-9 {
        return Err(Error::DegenerateMeasurement(
            "object coincides with the robot position".into(),
        ));
    }
    Ok(Matrix2x3::new(
        -d.x / r,
        -d.y / r,
        0.0,
        d.y / q,
        -d.x / q,
        -1.0,
    ))
}

fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn checked(mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<PoseBelief> {
    let cov = symmetrize3(&covariance);
    let min = cov.symmetric_eigenvalues().min();
    if min < -1e-10 * cov.amax().max(1.0) {
        return Err(Error::InternalConsistency(format!(
            "posterior covariance lost positive semi-definiteness (min eigenvalue {min:e})"
        )));
    }
    Ok(PoseBelief {
        mean: Vector3::new(mean.x, mean.y, wrap_angle(mean.z)),
        covariance: cov,
    })
}

/// Prediction `μ̄ = f(μ, u)`, `Σ̄ = F Σ Fᵀ + R`.
pub fn ekf_predict(
    belief: &PoseBelief,
    control: &Control,
    dt: f64,
    noise: &Matrix3<f64>,
) -> Result<PoseBelief> {
    let f = motion_jacobian(&belief.mean, control, dt);
    let mean = propagate(&belief.mean, control, dt);
    checked(mean, f * belief.covariance * f.transpose() + noise)
}

fn innovation(z: &Vector2<f64>, predicted: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(z.x - predicted.x, wrap_angle(z.y - predicted.y))
}

/// Standard EKF range-bearing update against a known landmark position.
pub fn ekf_update_standard(
    belief: &PoseBelief,
    z: &Vector2<f64>,
    landmark: &Vector2<f64>,
    q: &Matrix2<f64>,
) -> Result<PoseBelief> {
    let h = range_bearing_jacobian(&belief.mean, landmark)?;
    let nu = innovation(z, &range_bearing(&belief.mean, landmark)?);
    let s = h * belief.covariance * h.transpose() + q;
    let s_inv = s
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
    let k = belief.covariance * h.transpose() * s_inv;
    let mean = belief.mean + k * nu;
    let cov = (Matrix3::identity() - k * h) * belief.covariance;
    checked(mean, cov)
}

/// Direct pose measurement (`H = I`), used for motion-capture style fixes.
pub fn ekf_update_pose(
    belief: &PoseBelief,
    z: &Vector3<f64>,
    q: &Matrix3<f64>,
) -> Result<PoseBelief> {
    let s = belief.covariance + q;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
    let k = belief.covariance * s_inv;
    let nu = Vector3::new(
        z.x - belief.mean.x,
        z.y - belief.mean.y,
        wrap_angle(z.z - belief.mean.z),
    );
    checked(
        belief.mean + k * nu,
        (Matrix3::identity() - k) * belief.covariance,
    )
}

/// Posterior covariance from the information form
/// `Σ⁻¹ = HᵀQ⁻¹H + Σ_O⁻¹ + Σ̄⁻¹`.
pub fn object_covariance_information(
    prior: &Matrix3<f64>,
    h: &Matrix2x3<f64>,
    q: &Matrix2<f64>,
    object: &Matrix3<f64>,
) -> Result<Matrix3<f64>> {
    let inv =
        |m: &Matrix3<f64>, name: &str| m.try_inverse().ok_or_else(|| Error::Singular(name.into()));
    let q_inv = q
        .try_inverse()
        .ok_or_else(|| Error::Singular("measurement covariance".into()))?;
    let info = h.transpose() * q_inv * h
        + inv(object, "object covariance")?
        + inv(prior, "predicted covariance")?;
    inv(&info, "posterior information").map(|m| symmetrize3(&m))
}

/// Gain form: `Σ = (I − K H) Σ̄ Σ̃ Σ_O` with `Σ̃ = (Σ̄ + Σ_O)⁻¹` and
/// `K = Σ̄Σ̃Σ_O Hᵀ (H Σ̄Σ̃Σ_O Hᵀ + Q)⁻¹`. Returns `(Σ, K)`.
pub fn object_covariance_gain(
    prior: &Matrix3<f64>,
    h: &Matrix2x3<f64>,
    q: &Matrix2<f64>,
    object: &Matrix3<f64>,
) -> Result<(Matrix3<f64>, nalgebra::Matrix3x2<f64>)> {
    let tilde = (prior + object)
        .try_inverse()
        .ok_or_else(|| Error::Singular("sum of predicted and object covariances".into()))?;
    let p = prior * tilde * object;
    let s = h * p * h.transpose() + q;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
    let k = p * h.transpose() * s_inv;
    Ok((symmetrize3(&((Matrix3::identity() - k * h) * p)), k))
}

/// Range-bearing update that also conditions on the viewpoint belief of the
/// observed object. Both covariance forms are evaluated and must agree.
pub fn ekf_update_with_object(
    belief: &PoseBelief,
    z: &Vector2<f64>,
    object: &ObjectBelief,
    landmark: &Vector2<f64>,
    q: &Matrix2<f64>,
) -> Result<PoseBelief> {
    let h = range_bearing_jacobian(&belief.mean, landmark)?;
    let nu = innovation(z, &range_bearing(&belief.mean, landmark)?);
    let info = object_covariance_information(&belief.covariance, &h, q, &object.covariance)?;
    let (cov, k) = object_covariance_gain(&belief.covariance, &h, q, &object.covariance)?;
    let diff = (info - cov).norm();
    if diff > FORM_AGREEMENT_TOL * cov.norm() {
        return Err(Error::InternalConsistency(format!(
            "information and gain covariance forms differ by {diff:e}"
        )));
    }
    let o_inv = object
        .covariance
        .try_inverse()
        .ok_or_else(|| Error::Singular("object covariance".into()))?;
    let offset = object.mean - belief.mean;
    let offset = Vector3::new(offset.x, offset.y, wrap_angle(offset.z));
    let mean = belief.mean + k * nu + cov * o_inv * offset;
    checked(mean, cov)
}
