//! JSON scenario format. Every optional field has a default, and
//! validation reports all failing fields at once.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::belief::{Control, FREE_HEADING_VARIANCE};
use crate::collision::{Body, ConvexPolygon, Point};
use crate::error::{Error, Result};
use crate::obstacle::{PredictionConfig, SecondOrder};
use crate::planner::{ActionSet, Landmark, PlanningModel, Weights};

fn d_dt() -> f64 {
    0.1
}
fn d_max_steps() -> usize {
    300
}
fn d_delta() -> f64 {
    1e-3
}
fn d_epsilon() -> f64 {
    0.99
}
fn d_horizon() -> usize {
    7
}
fn d_pose_fix_probability() -> f64 {
    0.3
}
fn d_goal_tolerance() -> f64 {
    0.1
}
fn d_obstacle_radius() -> f64 {
    0.22
}
fn d_obstacle_prior_variance() -> f64 {
    0.1
}
fn d_initial_covariance() -> [f64; 3] {
    [0.1, 0.1, 0.02]
}
fn d_radius() -> Option<f64> {
    Some(0.22)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Diagonal of the motion noise `R` per step.
    #[serde(default = "NoiseConfig::d_motion")]
    pub motion: [f64; 3],
    /// Range and bearing variances of landmark measurements.
    #[serde(default = "NoiseConfig::d_measurement")]
    pub measurement: [f64; 2],
    /// Diagonal of the pose-fix noise.
    #[serde(default = "NoiseConfig::d_pose_fix")]
    pub pose_fix: [f64; 3],
    /// Standard deviation of scan ranges.
    #[serde(default = "NoiseConfig::d_scan_range_sd")]
    pub scan_range_sd: f64,
    /// Bearing variance assumed by the obstacle estimator.
    #[serde(default = "NoiseConfig::d_scan_bearing_var")]
    pub scan_bearing_var: f64,
}

impl NoiseConfig {
    fn d_motion() -> [f64; 3] {
        [1e-4, 1e-4, 1e-5]
    }
    fn d_measurement() -> [f64; 2] {
        [0.01, 1e-3]
    }
    fn d_pose_fix() -> [f64; 3] {
        [0.01, 0.01, 0.001]
    }
    fn d_scan_range_sd() -> f64 {
        0.01
    }
    fn d_scan_bearing_var() -> f64 {
        1e-4
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            motion: Self::d_motion(),
            measurement: Self::d_measurement(),
            pose_fix: Self::d_pose_fix(),
            scan_range_sd: Self::d_scan_range_sd(),
            scan_bearing_var: Self::d_scan_bearing_var(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default = "SensorConfig::d_rays")]
    pub rays: usize,
    #[serde(default = "SensorConfig::d_max_range")]
    pub max_range: f64,
    /// Landmarks farther than this are not observed.
    #[serde(default = "SensorConfig::d_landmark_range")]
    pub landmark_range: f64,
}

impl SensorConfig {
    fn d_rays() -> usize {
        360
    }
    fn d_max_range() -> f64 {
        3.5
    }
    fn d_landmark_range() -> f64 {
        5.0
    }
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            rays: Self::d_rays(),
            max_range: Self::d_max_range(),
            landmark_range: Self::d_landmark_range(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// Diagonal of `M_u`.
    #[serde(default = "WeightsConfig::d_control")]
    pub control: Vec<f64>,
    /// Diagonal of `M_g`.
    #[serde(default = "WeightsConfig::d_goal")]
    pub goal: [f64; 2],
    /// Diagonal of `M_Σ`.
    #[serde(default = "WeightsConfig::d_covariance")]
    pub covariance: [f64; 3],
    #[serde(default = "WeightsConfig::d_collision")]
    pub collision: f64,
    #[serde(default = "WeightsConfig::d_penalty")]
    pub penalty: f64,
    /// Per-step share of the goal distance.
    #[serde(default = "WeightsConfig::d_stage_goal")]
    pub stage_goal: f64,
}

impl WeightsConfig {
    fn d_control() -> Vec<f64> {
        vec![0.01, 0.01]
    }
    fn d_goal() -> [f64; 2] {
        [1.0, 1.0]
    }
    fn d_covariance() -> [f64; 3] {
        [0.3, 0.3, 0.0]
    }
    fn d_collision() -> f64 {
        100.0
    }
    fn d_penalty() -> f64 {
        1e6
    }
    fn d_stage_goal() -> f64 {
        0.1
    }
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            control: Self::d_control(),
            goal: Self::d_goal(),
            covariance: Self::d_covariance(),
            collision: Self::d_collision(),
            penalty: Self::d_penalty(),
            stage_goal: Self::d_stage_goal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionsConfig {
    #[serde(default = "ActionsConfig::d_v_max")]
    pub v_max: f64,
    #[serde(default = "ActionsConfig::d_omega_max")]
    pub omega_max: f64,
    /// Explicit `[v, ω]` pairs; replaces the nine-action grid when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<[f64; 2]>>,
}

impl ActionsConfig {
    fn d_v_max() -> f64 {
        0.5
    }
    fn d_omega_max() -> f64 {
        1.0
    }
}

impl Default for ActionsConfig {
    fn default() -> Self {
        ActionsConfig {
            v_max: Self::d_v_max(),
            omega_max: Self::d_omega_max(),
            controls: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkConfig {
    pub position: [f64; 2],
    /// Position covariance of the object; its heading is left free.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_covariance: Option<[[f64; 2]; 2]>,
    /// Mean viewpoint pose `μ_O`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewpoint: Option<[f64; 3]>,
    /// Where the landmark really is; defaults to `position`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_position: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    Planner,
    Scripted {
        #[serde(default)]
        waypoints: Vec<[f64; 2]>,
        #[serde(default)]
        speed: f64,
        /// Constant velocity used when no waypoints are given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<[f64; 2]>,
        #[serde(default)]
        loop_waypoints: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub name: String,
    pub pose: [f64; 3],
    /// Diagonal of the initial pose covariance.
    #[serde(default = "d_initial_covariance")]
    pub covariance: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 2]>,
    #[serde(default = "d_radius", skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Convex footprint in the body frame; takes precedence over `radius`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    pub controller: ControllerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub landmarks: Vec<LandmarkConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub actions: ActionsConfig,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "d_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-step probability of a pose fix for each planner agent.
    #[serde(default = "d_pose_fix_probability")]
    pub pose_fix_probability: f64,
    #[serde(default = "d_goal_tolerance")]
    pub goal_tolerance: f64,
    /// Radius the estimator assumes for every detected obstacle.
    #[serde(default = "d_obstacle_radius")]
    pub obstacle_radius: f64,
    /// Prior variance of each obstacle position estimate.
    #[serde(default = "d_obstacle_prior_variance")]
    pub obstacle_prior_variance: f64,
    /// Whether planners use landmark object uncertainty.
    #[serde(default = "d_true")]
    pub use_object_uncertainty: bool,
    /// Obstacle prediction options for planner agents.
    #[serde(default)]
    pub prediction: PredictionConfig,
}

fn d_true() -> bool {
    true
}

fn finite_pos(bad: &mut Vec<String>, field: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        bad.push(format!("{field}: must be positive, got {v}"));
    }
}

fn finite_nonneg(bad: &mut Vec<String>, field: &str, vs: &[f64]) {
    if vs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        bad.push(format!(
            "{field}: entries must be finite and non-negative, got {vs:?}"
        ));
    }
}

fn finite(bad: &mut Vec<String>, field: &str, vs: &[f64]) {
    if vs.iter().any(|v| !v.is_finite()) {
        bad.push(format!("{field}: entries must be finite, got {vs:?}"));
    }
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!(
                "scenario (line {}, column {}): {e}",
                e.line(),
                e.column()
            ))
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Full document with every default written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.agents.is_empty() {
            bad.push("agents: at least one agent is required".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bad.push(format!("epsilon: must lie in (0, 1), got {}", self.epsilon));
        }
        finite_pos(&mut bad, "delta", self.delta);
        finite_pos(&mut bad, "dt", self.dt);
        finite_pos(&mut bad, "goal_tolerance", self.goal_tolerance);
        finite_pos(&mut bad, "obstacle_radius", self.obstacle_radius);
        finite_pos(
            &mut bad,
            "obstacle_prior_variance",
            self.obstacle_prior_variance,
        );
        if let SecondOrder::Significant(k) = self.prediction.second_order {
            if !(k.is_finite() && k >= 0.0) {
                bad.push(format!(
                    "prediction.second_order.significant: must be finite and non-negative, got {k}"
                ));
            }
        }
        if self.horizon == 0 {
            bad.push("horizon: must be at least 1".into());
        }
        if self.max_steps == 0 {
            bad.push("max_steps: must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.pose_fix_probability) {
            bad.push(format!(
                "pose_fix_probability: must lie in [0, 1], got {}",
                self.pose_fix_probability
            ));
        }
        finite_nonneg(&mut bad, "noise.motion", &self.noise.motion);
        finite_pos(&mut bad, "noise.measurement[0]", self.noise.measurement[0]);
        finite_pos(&mut bad, "noise.measurement[1]", self.noise.measurement[1]);
        for (i, v) in self.noise.pose_fix.iter().enumerate() {
            finite_pos(&mut bad, &format!("noise.pose_fix[{i}]"), *v);
        }
        finite_nonneg(&mut bad, "noise.scan_range_sd", &[self.noise.scan_range_sd]);
        finite_pos(
            &mut bad,
            "noise.scan_bearing_var",
            self.noise.scan_bearing_var,
        );
        if self.sensor.rays < 3 {
            bad.push("sensor.rays: need at least 3 rays".into());
        }
        finite_pos(&mut bad, "sensor.max_range", self.sensor.max_range);
        finite_pos(
            &mut bad,
            "sensor.landmark_range",
            self.sensor.landmark_range,
        );
        finite_nonneg(&mut bad, "weights.control", &self.weights.control);
        finite_nonneg(&mut bad, "weights.goal", &self.weights.goal);
        finite(&mut bad, "weights.covariance", &self.weights.covariance);
        finite_nonneg(&mut bad, "weights.collision", &[self.weights.collision]);
        if let Err(Error::Validation(v)) = self.weights() {
            bad.extend(v);
        }
        finite_pos(&mut bad, "actions.v_max", self.actions.v_max);
        finite_pos(&mut bad, "actions.omega_max", self.actions.omega_max);
        match &self.actions.controls {
            Some(c) if c.is_empty() => bad.push("actions.controls: must not be empty".into()),
            Some(c) => {
                finite(
                    &mut bad,
                    "actions.controls",
                    &c.iter().flatten().copied().collect::<Vec<_>>(),
                );
                if self.weights.control.len() != 2 {
                    bad.push("weights.control: needs 2 entries for [v, omega] controls".into());
                }
            }
            None => {
                if self.weights.control.len() != 2 {
                    bad.push("weights.control: needs 2 entries for [v, omega] controls".into());
                }
            }
        }
        for (i, lm) in self.landmarks.iter().enumerate() {
            let f = |s: &str| format!("landmarks[{i}].{s}");
            finite(&mut bad, &f("position"), &lm.position);
            if let Some(c) = lm.object_covariance {
                let m = Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]);
                let sym = (m - m.transpose()).amax() <= 1e-12;
                if !sym
                    || !m.iter().all(|v| v.is_finite())
                    || m.symmetric_eigenvalues().min() <= 0.0
                {
                    bad.push(format!(
                        "{}: must be symmetric positive definite",
                        f("object_covariance")
                    ));
                }
            }
            if let Some(v) = lm.viewpoint {
                finite(&mut bad, &f("viewpoint"), &v);
                if lm.object_covariance.is_none() {
                    bad.push(format!("{}: requires object_covariance", f("viewpoint")));
                }
            }
            if let Some(p) = lm.true_position {
                finite(&mut bad, &f("true_position"), &p);
            }
        }
        let mut planners = 0;
        for (i, a) in self.agents.iter().enumerate() {
            let f = |s: &str| format!("agents[{i}].{s}");
            finite(&mut bad, &f("pose"), &a.pose);
            finite_nonneg(&mut bad, &f("covariance"), &a.covariance);
            if let Err(e) = a.body() {
                bad.push(format!("{}: {e}", f("body")));
            }
            match &a.controller {
                ControllerConfig::Planner => {
                    planners += 1;
                    match a.goal {
                        None => bad.push(format!("{}: required for planner agents", f("goal"))),
                        Some(g) => finite(&mut bad, &f("goal"), &g),
                    }
                    if a.covariance.iter().any(|v| *v <= 0.0) {
                        bad.push(format!(
                            "{}: planner agents need a positive initial covariance",
                            f("covariance")
                        ));
                    }
                }
                ControllerConfig::Scripted {
                    waypoints,
                    speed,
                    velocity,
                    ..
                } => {
                    finite(
                        &mut bad,
                        &f("controller.waypoints"),
                        &waypoints.iter().flatten().copied().collect::<Vec<_>>(),
                    );
                    if !waypoints.is_empty() && !(speed.is_finite() && *speed >= 0.0) {
                        bad.push(format!("{}: must be non-negative", f("controller.speed")));
                    }
                    if let Some(v) = velocity {
                        finite(&mut bad, &f("controller.velocity"), v);
                        if !waypoints.is_empty() {
                            bad.push(format!(
                                "{}: give either waypoints or velocity",
                                f("controller")
                            ));
                        }
                    }
                }
            }
        }
        if !self.agents.is_empty() && planners == 0 {
            bad.push("agents: at least one agent must use the planner controller".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn weights(&self) -> Result<Weights> {
        let w = Weights {
            control: DMatrix::from_diagonal(&DVector::from_vec(self.weights.control.clone())),
            goal: Matrix2::from_diagonal(&Vector2::from(self.weights.goal)),
            covariance: Matrix3::from_diagonal(&Vector3::from(self.weights.covariance)),
            collision: self.weights.collision,
            penalty: self.weights.penalty,
            prob_threshold: 1.0 - self.epsilon,
            stage_goal: self.weights.stage_goal,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn action_set(&self) -> Result<ActionSet> {
        match &self.actions.controls {
            Some(c) => ActionSet::new(
                c.iter()
                    .map(|[v, omega]| Control::Velocity {
                        v: *v,
                        omega: *omega,
                    })
                    .collect(),
            ),
            None => ActionSet::unicycle_grid(self.actions.v_max, self.actions.omega_max),
        }
    }

    /// Map landmarks as the planner sees them.
    pub fn planner_landmarks(&self) -> Vec<Landmark> {
        self.landmarks
            .iter()
            .map(|lm| Landmark {
                position: Vector2::from(lm.position),
                object_covariance: lm.object_covariance.map(|c| {
                    let mut m = Matrix3::zeros();
                    m[(0, 0)] = c[0][0];
                    m[(0, 1)] = c[0][1];
                    m[(1, 0)] = c[1][0];
                    m[(1, 1)] = c[1][1];
                    m[(2, 2)] = FREE_HEADING_VARIANCE;
                    m
                }),
                viewpoint: lm.viewpoint.map(Vector3::from),
            })
            .collect()
    }
}

impl Scenario {
    /// Planner model for the first planner agent.
    pub fn planning_model(&self) -> Result<PlanningModel> {
        let robot_body = self
            .agents
            .iter()
            .find(|a| a.is_planner())
            .map(|a| a.body())
            .transpose()?
            .ok_or_else(|| Error::Validation(vec!["agents: no planner agent".into()]))?;
        let mut model = PlanningModel::new(self.dt, robot_body);
        model.motion_noise = Matrix3::from_diagonal(&Vector3::from(self.noise.motion));
        model.measurement_noise = Matrix2::from_diagonal(&Vector2::from(self.noise.measurement));
        model.landmarks = self.planner_landmarks();
        model.sensor_range = self.sensor.landmark_range;
        model.use_object_uncertainty = self.use_object_uncertainty;
        model.delta = self.delta;
        Ok(model)
    }
}

impl AgentConfig {
    pub fn body(&self) -> Result<Body> {
        match (&self.polygon, self.radius) {
            (Some(p), _) => Ok(Body::Polygon(ConvexPolygon::new(
                p.iter().map(|v| Point::new(v[0], v[1])).collect(),
            )?)),
            (None, Some(r)) => Body::sphere(r),
            (None, None) => Err(Error::InvalidInput(
                "agent needs a radius or a polygon".into(),
            )),
        }
    }

    pub fn is_planner(&self) -> bool {
        matches!(self.controller, ControllerConfig::Planner)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_json(&std::fs::read_to_string(path)?)
}
