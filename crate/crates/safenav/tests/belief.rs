use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safenav::belief::{
    ekf_predict, ekf_update_standard, ekf_update_with_object, motion_jacobian,
    object_covariance_gain, object_covariance_information, propagate, range_bearing,
    range_bearing_jacobian, wrap_angle, Control, ObjectBelief, PoseBelief,
};

fn random_spd3(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let d = Matrix3::from_diagonal(&Vector3::from_fn(|_, _| rng.random_range(lo..hi)));
    let m = q * d * q.transpose();
    (m + m.transpose()) * 0.5
}

fn random_pose(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-3.0..3.0),
    )
}

fn random_control(rng: &mut ChaCha8Rng) -> Control {
    if rng.random_bool(0.5) {
        Control::Odometry {
            rot1: rng.random_range(-1.0..1.0),
            trans: rng.random_range(0.0..2.0),
            rot2: rng.random_range(-1.0..1.0),
        }
    } else {
        Control::Velocity {
            v: rng.random_range(0.0..1.5),
            omega: rng.random_range(-2.0..2.0),
        }
    }
}

fn fd_motion(pose: &Vector3<f64>, u: &Control, dt: f64) -> Matrix3<f64> {
    let h = 1e-6;
    let mut j = Matrix3::zeros();
    for c in 0..3 {
        let mut e = Vector3::zeros();
        e[c] = h;
        let d = propagate(&(pose + e), u, dt) - propagate(&(pose - e), u, dt);
        let d = Vector3::new(d.x, d.y, wrap_angle(d.z));
        j.set_column(c, &(d / (2.0 * h)));
    }
    j
}

#[test]
fn motion_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let pose = random_pose(&mut rng);
        let u = random_control(&mut rng);
        let j = motion_jacobian(&pose, &u, 0.1);
        assert!((j - fd_motion(&pose, &u, 0.1)).amax() < 1e-6, "{u:?}");
    }
}

#[test]
fn observation_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let pose = random_pose(&mut rng);
        let lm = pose.xy() + Vector2::new(rng.random_range(0.5..4.0), rng.random_range(-4.0..4.0));
        let j = range_bearing_jacobian(&pose, &lm).unwrap();
        let h = 1e-6;
        let mut fd = Matrix2x3::zeros();
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            let d =
                range_bearing(&(pose + e), &lm).unwrap() - range_bearing(&(pose - e), &lm).unwrap();
            fd.set_column(c, &(Vector2::new(d.x, wrap_angle(d.y)) / (2.0 * h)));
        }
        assert!((j - fd).amax() < 1e-6);
    }
}

#[test]
fn gain_form_equals_information_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let prior = random_spd3(&mut rng, 0.01, 1.0);
        let obj = random_spd3(&mut rng, 0.01, 2.0);
        let pose = random_pose(&mut rng);
        let lm = pose.xy() + Vector2::new(rng.random_range(1.0..5.0), rng.random_range(-3.0..3.0));
        let h = range_bearing_jacobian(&pose, &lm).unwrap();
        let q = Matrix2::from_diagonal(&Vector2::new(
            rng.random_range(0.001..0.1),
            rng.random_range(0.0005..0.05),
        ));
        let a = object_covariance_information(&prior, &h, &q, &obj).unwrap();
        let (b, _) = object_covariance_gain(&prior, &h, &q, &obj).unwrap();
        assert!((a - b).norm() <= 1e-8 * b.norm());
    }
}

fn posterior_gap(a: &PoseBelief, b: &PoseBelief) -> f64 {
    let dm = a.mean - b.mean;
    Vector3::new(dm.x, dm.y, wrap_angle(dm.z)).norm() + (a.covariance - b.covariance).norm()
}

#[test]
fn huge_object_uncertainty_reduces_to_standard_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let prior =
            PoseBelief::new(random_pose(&mut rng), random_spd3(&mut rng, 0.01, 0.5)).unwrap();
        let lm =
            prior.mean.xy() + Vector2::new(rng.random_range(1.0..5.0), rng.random_range(-3.0..3.0));
        let q = Matrix2::from_diagonal(&Vector2::new(0.02, 0.005));
        let z = range_bearing(&prior.mean, &lm).unwrap()
            + Vector2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.05..0.05));
        let std = ekf_update_standard(&prior, &z, &lm, &q).unwrap();
        let shape = random_spd3(&mut rng, 0.5, 1.5);
        let viewpoint = prior.mean
            + Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                0.3,
            );
        let mut last = f64::INFINITY;
        for e in 2..=8 {
            let obj = ObjectBelief::new(viewpoint, shape * 10f64.powi(e)).unwrap();
            let post = ekf_update_with_object(&prior, &z, &obj, &lm, &q).unwrap();
            let gap = posterior_gap(&post, &std);
            assert!(gap < last, "scale 1e{e}: {gap} !< {last}");
            last = gap;
        }
        assert!(last < 1e-5, "{last}");
    }
}

#[test]
fn object_update_never_loosens_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let prior =
            PoseBelief::new(random_pose(&mut rng), random_spd3(&mut rng, 0.01, 0.5)).unwrap();
        let lm =
            prior.mean.xy() + Vector2::new(rng.random_range(1.0..5.0), rng.random_range(-3.0..3.0));
        let q = Matrix2::from_diagonal(&Vector2::new(0.02, 0.005));
        let z = range_bearing(&prior.mean, &lm).unwrap();
        let obj = ObjectBelief::new(prior.mean, random_spd3(&mut rng, 0.01, 1.0)).unwrap();
        let std = ekf_update_standard(&prior, &z, &lm, &q).unwrap();
        let with = ekf_update_with_object(&prior, &z, &obj, &lm, &q).unwrap();
        let diff = std.covariance - with.covariance;
        assert!(diff.symmetric_eigenvalues().min() >= -1e-10);
    }
}

#[test]
fn predict_and_update_keep_covariance_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut b = PoseBelief::new(
        Vector3::zeros(),
        Matrix3::from_diagonal(&Vector3::new(0.1, 0.1, 0.02)),
    )
    .unwrap();
    let r = Matrix3::from_diagonal(&Vector3::new(1e-3, 1e-3, 1e-4));
    let q = Matrix2::from_diagonal(&Vector2::new(0.01, 0.001));
    let landmarks = [
        Vector2::new(3.0, 4.0),
        Vector2::new(-2.0, 6.0),
        Vector2::new(5.0, -1.0),
    ];
    for step in 0..300 {
        b = ekf_predict(&b, &random_control(&mut rng), 0.1, &r).unwrap();
        let lm = landmarks[step % 3];
        if (lm - b.mean.xy()).norm() > 0.5 {
            let z = range_bearing(&b.mean, &lm).unwrap() + Vector2::new(0.05, -0.01);
            b = if step % 2 == 0 {
                ekf_update_standard(&b, &z, &lm, &q).unwrap()
            } else {
                let obj = ObjectBelief::from_position(
                    b.mean.xy() + Vector2::new(0.1, 0.0),
                    Matrix2::identity() * 0.2,
                    b.mean.z,
                )
                .unwrap();
                ekf_update_with_object(&b, &z, &obj, &lm, &q).unwrap()
            };
        }
        assert!((b.covariance - b.covariance.transpose()).amax() == 0.0);
        assert!(b.covariance.symmetric_eigenvalues().min() >= -1e-10);
    }
}
