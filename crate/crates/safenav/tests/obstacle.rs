use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safenav::belief::PoseBelief;
use safenav::collision::PositionBelief;
use safenav::obstacle::{
    cluster_scan, estimate_location, estimate_velocities, predict_obstacle, predict_obstacle_with,
    ObstacleTracker, PredictionConfig, Ray, Scan, ScanNoise, SecondOrder,
};

const MAX_RANGE: f64 = 3.5;

fn at(x: f64, y: f64, var: f64) -> PositionBelief {
    PositionBelief {
        mean: Vector2::new(x, y),
        covariance: Matrix2::identity() * var,
    }
}

fn trace_series(steps: &[PositionBelief]) -> Vec<f64> {
    steps.iter().map(|b| b.covariance.trace()).collect()
}

fn all_configs() -> Vec<PredictionConfig> {
    let mut out = Vec::new();
    for second_order in [
        SecondOrder::Always,
        SecondOrder::Significant(2.0),
        SecondOrder::Never,
    ] {
        for propagate_estimate_covariance in [false, true] {
            out.push(PredictionConfig {
                second_order,
                propagate_estimate_covariance,
            });
        }
    }
    out
}

/// One-ray cluster aimed at the obstacle centre, flanked by empty rays.
fn single_ray_scan<R: Rng>(
    pos: &Vector2<f64>,
    radius: f64,
    range_sd: f64,
    bearing_sd: f64,
    rng: &mut R,
) -> Scan {
    let b = pos.y.atan2(pos.x);
    let rn = Normal::new(0.0, range_sd).unwrap();
    let bn = Normal::new(0.0, bearing_sd).unwrap();
    Scan {
        rays: vec![
            Ray {
                bearing: b - 0.5,
                range: MAX_RANGE,
            },
            Ray {
                bearing: b + bn.sample(rng),
                range: pos.norm() - radius + rn.sample(rng),
            },
            Ray {
                bearing: b + 0.5,
                range: MAX_RANGE,
            },
        ],
        max_range: MAX_RANGE,
        timestamp: 0.0,
    }
}

#[test]
fn tracker_is_consistent_under_range_noise() {
    let cfg = PredictionConfig {
        second_order: SecondOrder::Significant(2.0),
        propagate_estimate_covariance: true,
    };
    let (mut inside, mut total) = (0usize, 0usize);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let robot = PoseBelief::new(Vector3::zeros(), Matrix3::identity() * 1e-6).unwrap();
        let mut pos = Vector2::new(rng.random_range(1.5..2.5), rng.random_range(-1.0..1.0));
        let vel = Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let dt = 0.1;
        let noise = ScanNoise {
            range_var: 0.01,
            bearing_var: 1e-4,
        };
        let mut tracker = ObstacleTracker::new(0.22, Matrix2::identity() * 0.1, noise, dt);
        tracker.prediction = cfg;
        for _ in 0..20 {
            let scan = single_ray_scan(&pos, 0.22, 0.1, 0.01, &mut rng);
            let clusters = cluster_scan(&scan);
            assert_eq!(clusters.len(), 1);
            let est = tracker.update(&robot, &clusters[0]).unwrap();
            let e = pos - est.mean;
            let d2 = (e.transpose() * est.covariance.try_inverse().unwrap() * e)[(0, 0)];
            inside += usize::from(d2 <= 9.0);
            total += 1;
            pos += vel * dt;
        }
    }
    let rate = inside as f64 / total as f64;
    assert!(rate >= 0.97, "{inside}/{total}");
}

#[test]
fn location_matches_scalar_fusion() {
    let robot = PoseBelief::new(Vector3::zeros(), Matrix3::zeros()).unwrap();
    let cluster = Scan {
        rays: vec![Ray {
            bearing: 0.0,
            range: 1.0,
        }],
        max_range: MAX_RANGE,
        timestamp: 0.0,
    };
    let noise = ScanNoise {
        range_var: 0.01,
        bearing_var: 1e-4,
    };
    let prior = at(1.3, 0.0, 0.1);
    let post = estimate_location(&robot, &cluster, &prior, 0.22, &noise).unwrap();
    // Along the ray only range noise acts: precision-weighted average.
    let want = (1.3 / 0.1 + 1.22 / 0.01) / (1.0 / 0.1 + 1.0 / 0.01);
    assert!(
        (post.mean.x - want).abs() < 1e-12,
        "{} vs {want}",
        post.mean.x
    );
    assert!(post.mean.x > 1.22 && post.mean.x < 1.3);
    assert!(post.mean.y.abs() < 1e-12);
    assert!((post.covariance[(0, 0)] - 1.0 / (1.0 / 0.1 + 1.0 / 0.01)).abs() < 1e-12);
}

#[test]
fn uninformative_prior_returns_back_projection() {
    let robot = PoseBelief::new(Vector3::new(1.0, -1.0, 0.4), Matrix3::identity() * 1e-4).unwrap();
    let cluster = Scan {
        rays: vec![
            Ray {
                bearing: -0.1,
                range: 1.5,
            },
            Ray {
                bearing: 0.0,
                range: 1.4,
            },
        ],
        max_range: MAX_RANGE,
        timestamp: 0.0,
    };
    let prior = at(0.0, 0.0, 1e8);
    let post = estimate_location(&robot, &cluster, &prior, 0.3, &ScanNoise::default()).unwrap();
    let want = Vector2::new(1.0, -1.0) + 1.7 * Vector2::new(0.4f64.cos(), 0.4f64.sin());
    assert!((post.mean - want).norm() < 1e-3);
}

#[test]
fn velocity_change_variance_oracle() {
    let p = [at(0.0, 0.0, 0.01), at(0.5, 0.0, 0.01), at(1.1, 0.0, 0.01)];
    let t = estimate_velocities(&p, 0.5).unwrap();
    // Each velocity is a difference of two estimates; the change adds two.
    let var_v = (0.01 + 0.01) / (0.5 * 0.5);
    assert!((t.ax_max_cov - 2.0 * var_v).abs() < 1e-12);
    assert!((t.ay_max_cov - 2.0 * var_v).abs() < 1e-12);
    assert_eq!(t.vx.len(), p.len() - 1);
    assert!((t.vx[0] - 1.0).abs() < 1e-12 && (t.vx[1] - 1.2).abs() < 1e-12);
}

#[test]
fn per_step_noise_example() {
    let mut t = estimate_velocities(&[at(0.0, 0.0, 0.0), at(0.0, 0.0, 0.0)], 0.5).unwrap();
    t.ax_max_cov = 0.04;
    t.ay_max_cov = 0.0;
    let p = predict_obstacle(&t, 3, 0.5).unwrap();
    for (l, b) in p.steps.iter().enumerate() {
        assert!((b.covariance[(0, 0)] - 6.25e-4 * (l + 1) as f64).abs() < 1e-15);
        assert_eq!(b.covariance[(1, 1)], 0.0);
    }
}

#[test]
fn predictions_follow_constant_velocity_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let p0 = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let v = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let dt = rng.random_range(0.05..0.5);
        let n = rng.random_range(2..7);
        let positions: Vec<_> = (0..n)
            .map(|i| {
                let p = p0 + v * (i as f64 * dt);
                at(p.x, p.y, 0.01)
            })
            .collect();
        let track = estimate_velocities(&positions, dt).unwrap();
        let last = p0 + v * ((n - 1) as f64 * dt);
        for cfg in all_configs() {
            let pred = predict_obstacle_with(&track, 6, dt, &cfg).unwrap();
            for (l, b) in pred.steps.iter().enumerate() {
                let truth = last + v * ((l + 1) as f64 * dt);
                assert!((b.mean - truth).norm() < 1e-9, "{cfg:?} step {l}");
            }
        }
    }
}

#[test]
fn static_track_keeps_its_mean() {
    let track = estimate_velocities(&[at(1.0, 2.0, 0.02); 4], 0.2).unwrap();
    assert!(track.vx.iter().chain(&track.vy).all(|v| *v == 0.0));
    for cfg in all_configs() {
        let pred = predict_obstacle_with(&track, 5, 0.2, &cfg).unwrap();
        assert!(pred.steps.iter().all(|b| b.mean == Vector2::new(1.0, 2.0)));
    }
}

#[test]
fn noise_free_track_has_constant_covariance() {
    let p = [at(0.0, 0.0, 0.0), at(0.1, 0.0, 0.0), at(0.2, 0.1, 0.0)];
    let track = estimate_velocities(&p, 0.1).unwrap();
    for cfg in all_configs() {
        let tr = trace_series(&predict_obstacle_with(&track, 7, 0.1, &cfg).unwrap().steps);
        assert!(tr.iter().all(|t| *t == tr[0]), "{cfg:?}: {tr:?}");
    }
}

#[test]
fn significant_gate_drops_noise_level_acceleration() {
    // Second differences well inside their own noise.
    let p = [at(0.0, 0.0, 0.01), at(0.1, 0.0, 0.01), at(0.21, 0.0, 0.01)];
    let track = estimate_velocities(&p, 0.1).unwrap();
    let gated = PredictionConfig {
        second_order: SecondOrder::Significant(2.0),
        propagate_estimate_covariance: false,
    };
    let never = PredictionConfig {
        second_order: SecondOrder::Never,
        ..gated
    };
    let a = predict_obstacle_with(&track, 4, 0.1, &gated).unwrap();
    let b = predict_obstacle_with(&track, 4, 0.1, &never).unwrap();
    assert_eq!(a, b);
    let always = predict_obstacle(&track, 4, 0.1).unwrap();
    assert!((always.steps[3].mean.x - b.steps[3].mean.x).abs() > 1e-3);

    // A large, clean acceleration passes the gate.
    let p = [at(0.0, 0.0, 1e-8), at(0.1, 0.0, 1e-8), at(0.4, 0.0, 1e-8)];
    let track = estimate_velocities(&p, 0.1).unwrap();
    let a = predict_obstacle_with(&track, 4, 0.1, &gated).unwrap();
    let always = predict_obstacle(&track, 4, 0.1).unwrap();
    assert_eq!(a, always);
}

#[test]
fn propagated_covariance_matches_linear_combination() {
    // Independent estimates: Var(s_n + τ(s_n − s_{n−1})) = (1+τ)²C_n + τ²C_{n−1}.
    let p = [at(0.0, 0.0, 0.02), at(0.3, 0.0, 0.01)];
    let track = estimate_velocities(&p, 0.5).unwrap();
    let cfg = PredictionConfig {
        second_order: SecondOrder::Never,
        propagate_estimate_covariance: true,
    };
    let pred = predict_obstacle_with(&track, 3, 0.5, &cfg).unwrap();
    let q = track.process_noise(0.5)[(0, 0)];
    for (l, b) in pred.steps.iter().enumerate() {
        let tau = (l + 1) as f64;
        let want = (1.0 + tau).powi(2) * 0.01 + tau * tau * 0.02 + q * tau;
        assert!(
            (b.covariance[(0, 0)] - want).abs() < 1e-12,
            "{} vs {want}",
            b.covariance[(0, 0)]
        );
    }
}

#[test]
fn prediction_config_json() {
    let c: PredictionConfig =
        serde_json::from_str(r#"{ "second_order": { "significant": 1.5 } }"#).unwrap();
    assert_eq!(c.second_order, SecondOrder::Significant(1.5));
    assert!(!c.propagate_estimate_covariance);
    let c: PredictionConfig = serde_json::from_str(r#"{ "second_order": "never" }"#).unwrap();
    assert_eq!(c.second_order, SecondOrder::Never);
    assert_eq!(
        serde_json::from_str::<PredictionConfig>("{}").unwrap(),
        PredictionConfig::default()
    );
    assert!(serde_json::from_str::<PredictionConfig>(r#"{ "typo": 1 }"#).is_err());
}

fn scan_strategy() -> impl Strategy<Value = Scan> {
    prop::collection::vec(
        prop_oneof![Just(None), (0.05f64..MAX_RANGE - 0.01).prop_map(Some)],
        0..60,
    )
    .prop_map(|ranges| Scan {
        rays: ranges
            .iter()
            .enumerate()
            .map(|(i, r)| Ray {
                bearing: -3.0 + 0.1 * i as f64,
                range: r.unwrap_or(MAX_RANGE),
            })
            .collect(),
        max_range: MAX_RANGE,
        timestamp: 0.0,
    })
}

proptest! {
    #[test]
    fn clusters_partition_the_short_rays(scan in scan_strategy()) {
        let clusters = cluster_scan(&scan);
        let joined: Vec<Ray> = clusters.iter().flat_map(|c| c.rays.iter().copied()).collect();
        let short: Vec<Ray> = scan.rays.iter().copied().filter(|r| r.range < MAX_RANGE - 1e-6).collect();
        prop_assert_eq!(&joined, &short);
        for c in &clusters {
            prop_assert!(!c.rays.is_empty());
            prop_assert!(c.rays.windows(2).all(|w| w[0].bearing < w[1].bearing));
        }
        for w in clusters.windows(2) {
            let end = w[0].rays.last().unwrap().bearing;
            let start = w[1].rays[0].bearing;
            prop_assert!(end < start);
            // Separated by at least one empty ray.
            prop_assert!(scan.rays.iter().any(|r| r.bearing > end && r.bearing < start && r.range >= MAX_RANGE - 1e-6));
        }
    }

    #[test]
    fn prediction_trace_strictly_increases_with_motion_noise(
        xs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 1e-4f64..0.05), 2..6),
        dt in 0.05f64..1.0,
        idx in 0usize..6,
    ) {
        let positions: Vec<_> = xs.iter().map(|(x, y, v)| at(*x, *y, *v)).collect();
        let track = estimate_velocities(&positions, dt).unwrap();
        let cfg = all_configs()[idx];
        let tr = trace_series(&predict_obstacle_with(&track, 7, dt, &cfg).unwrap().steps);
        prop_assert!(tr.windows(2).all(|w| w[1] > w[0]), "{:?}", tr);
    }
}
