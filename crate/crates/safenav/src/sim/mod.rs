//! Closed-loop simulation: planner agents localize, track every other agent
//! from scans, plan, and move; scripted agents follow fixed profiles.

mod converge;
mod scanlog;
mod scenario;
pub mod sensors;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use converge::{
    converge_sweep, worst_case_terms, write_converge_csv, ConvergeConfig, ConvergeRow, Layout,
};
pub use scanlog::{
    estimate_scan_log, read_scan_log, write_estimates_csv, EstimateRow, ScanLogConfig,
    ESTIMATE_HEADER,
};
pub use scenario::{
    load_scenario, ActionsConfig, AgentConfig, ControllerConfig, LandmarkConfig, NoiseConfig,
    Scenario, SensorConfig, WeightsConfig,
};

use crate::belief::{
    ekf_predict, ekf_update_pose, ekf_update_standard, ekf_update_with_object, propagate,
    range_bearing, wrap_angle, Control, ObjectBelief, PoseBelief,
};
use crate::collision::{Body, PositionBelief};
use crate::error::{Error, Result};
use crate::obstacle::{
    cluster_scan, predict_obstacle_with, pseudo_measurement, ObstacleTracker, Scan, ScanNoise,
};
use crate::planner::{plan, ActionSet, PlanResult, PlanningModel, PredictedObstacle, Weights};
use sensors::{simulate_scan, PlacedBody};

/// Clusters farther than this from every track start a new track.
pub const ASSOCIATION_GATE: f64 = 1.0;
/// Tracks are dropped after this many scans without a matching cluster.
pub const MAX_MISSES: usize = 5;
/// Sub-samples per step at which true distances are audited.
pub const AUDIT_SUBSTEPS: usize = 10;

/// Column names of the trajectory CSV, in order.
pub const LOG_HEADER: [&str; 31] = [
    "step",
    "time",
    "agent",
    "true_x",
    "true_y",
    "true_theta",
    "est_x",
    "est_y",
    "est_theta",
    "cov_xx",
    "cov_xy",
    "cov_yy",
    "cov_tt",
    "min_distance",
    "collision",
    "v",
    "omega",
    "feasible",
    "probability",
    "probability_bound",
    "plan_x",
    "plan_y",
    "plan_cxx",
    "plan_cxy",
    "plan_cyy",
    "obs_x",
    "obs_y",
    "obs_cxx",
    "obs_cxy",
    "obs_cyy",
    "tracks",
];

/// One log line: the state of one agent after one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub time: f64,
    pub agent: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub true_theta: f64,
    pub est_x: Option<f64>,
    pub est_y: Option<f64>,
    pub est_theta: Option<f64>,
    pub cov_xx: Option<f64>,
    pub cov_xy: Option<f64>,
    pub cov_yy: Option<f64>,
    pub cov_tt: Option<f64>,
    /// Smallest true centre distance to any other agent during the step.
    pub min_distance: Option<f64>,
    /// True centre distance below the sum of circumradii.
    pub collision: bool,
    pub v: Option<f64>,
    pub omega: Option<f64>,
    pub feasible: Option<bool>,
    /// Largest planned first-step collision probability over tracks.
    pub probability: Option<f64>,
    pub probability_bound: Option<f64>,
    /// Beliefs behind `probability`, for offline recomputation.
    pub plan_x: Option<f64>,
    pub plan_y: Option<f64>,
    pub plan_cxx: Option<f64>,
    pub plan_cxy: Option<f64>,
    pub plan_cyy: Option<f64>,
    pub obs_x: Option<f64>,
    pub obs_y: Option<f64>,
    pub obs_cxx: Option<f64>,
    pub obs_cxy: Option<f64>,
    pub obs_cyy: Option<f64>,
    pub tracks: Option<usize>,
}

/// Per-agent outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub agent: usize,
    pub name: String,
    pub min_distance: Option<f64>,
    pub collision_steps: usize,
    pub infeasible_steps: usize,
    pub reached_goal: bool,
    pub final_goal_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub summary: Vec<AgentSummary>,
    pub steps: usize,
}

impl TrajectoryLog {
    pub fn collision_steps(&self) -> usize {
        self.summary.iter().map(|s| s.collision_steps).sum()
    }

    pub fn min_distance(&self) -> Option<f64> {
        self.summary
            .iter()
            .filter_map(|s| s.min_distance)
            .reduce(f64::min)
    }

    pub fn render_summary(&self) -> String {
        let mut out = format!("steps: {}\n", self.steps);
        for s in &self.summary {
            let opt = |v: Option<f64>| v.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "agent {} {}: min_distance {} collisions {} infeasible {} reached_goal {} goal_distance {}\n",
                s.agent,
                if s.name.is_empty() { "-" } else { &s.name },
                opt(s.min_distance),
                s.collision_steps,
                s.infeasible_steps,
                s.reached_goal,
                opt(s.final_goal_distance)
            ));
        }
        out
    }
}

struct Tracks {
    trackers: Vec<ObstacleTracker>,
    misses: Vec<usize>,
}

struct Agent {
    body: Body,
    true_pose: Vector3<f64>,
    belief: Option<PoseBelief>,
    tracks: Tracks,
    waypoint: usize,
    done: bool,
    summary: AgentSummary,
}

fn gaussian3<R: Rng>(rng: &mut R, diag: &[f64; 3]) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let e: f64 = rng.sample(StandardNormal);
        e * diag[i].max(0.0).sqrt()
    })
}

fn gaussian2<R: Rng>(rng: &mut R, diag: &[f64; 2]) -> Vector2<f64> {
    Vector2::from_fn(|i, _| {
        let e: f64 = rng.sample(StandardNormal);
        e * diag[i].max(0.0).sqrt()
    })
}

/// Joins the first and last clusters when the returns wrap across ±π.
fn wrapped_clusters(scan: &Scan) -> Vec<Scan> {
    let mut clusters = cluster_scan(scan);
    let full_circle = scan.rays.len() >= 2;
    let first_hit = scan
        .rays
        .first()
        .is_some_and(|r| r.range < scan.max_range - crate::obstacle::MAX_RANGE_MARGIN);
    let last_hit = scan
        .rays
        .last()
        .is_some_and(|r| r.range < scan.max_range - crate::obstacle::MAX_RANGE_MARGIN);
    if full_circle && first_hit && last_hit && clusters.len() >= 2 {
        let first = clusters.remove(0);
        let last = clusters.last_mut().expect("at least one cluster left");
        last.rays.extend(first.rays.into_iter().map(|mut r| {
            r.bearing += 2.0 * std::f64::consts::PI;
            r
        }));
    }
    clusters
}

struct Runner<'a> {
    scenario: &'a Scenario,
    weights: Weights,
    actions: ActionSet,
    model: PlanningModel,
    scan_noise: ScanNoise,
    rng: ChaCha8Rng,
}

impl Runner<'_> {
    /// Updates this agent's tracks from one scan.
    fn sense(&mut self, agent: &mut Agent, others: &[PlacedBody], time: f64) -> Result<()> {
        let belief = agent.belief.expect("planner agents carry a belief");
        let s = self.scenario;
        let scan = simulate_scan(
            &agent.true_pose,
            others,
            s.sensor.rays,
            s.sensor.max_range,
            s.noise.scan_range_sd,
            time,
            &mut self.rng,
        );
        let clusters = wrapped_clusters(&scan);
        let measured: Vec<Vector2<f64>> = clusters
            .iter()
            .map(|c| {
                pseudo_measurement(&belief, c, s.obstacle_radius, &self.scan_noise).map(|m| m.mean)
            })
            .collect::<Result<_>>()?;
        let tracks = &mut agent.tracks;
        let predicted: Vec<Option<Vector2<f64>>> =
            tracks.trackers.iter().map(|t| t.predicted_mean()).collect();
        let mut pairs = Vec::new();
        for (ci, m) in measured.iter().enumerate() {
            for (ti, p) in predicted.iter().enumerate() {
                if let Some(p) = p {
                    let d = (m - p).norm();
                    if d < ASSOCIATION_GATE {
                        pairs.push((d, ci, ti));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut cluster_used = vec![false; clusters.len()];
        let mut track_used = vec![false; tracks.trackers.len()];
        for (_, ci, ti) in pairs {
            if cluster_used[ci] || track_used[ti] {
                continue;
            }
            cluster_used[ci] = true;
            track_used[ti] = true;
            tracks.trackers[ti].update(&belief, &clusters[ci])?;
            tracks.misses[ti] = 0;
        }
        for (ti, used) in track_used.iter().enumerate() {
            if !used {
                tracks.trackers[ti].coast();
                tracks.misses[ti] += 1;
            }
        }
        let mut keep = tracks.misses.iter().map(|m| *m <= MAX_MISSES);
        tracks.trackers.retain(|_| keep.next().unwrap_or(true));
        tracks.misses.retain(|m| *m <= MAX_MISSES);
        for (ci, used) in cluster_used.iter().enumerate() {
            if !used {
                let mut t = ObstacleTracker::new(
                    s.obstacle_radius,
                    Matrix2::identity() * s.obstacle_prior_variance,
                    self.scan_noise,
                    s.dt,
                );
                t.prediction = s.prediction;
                t.update(&belief, &clusters[ci])?;
                tracks.trackers.push(t);
                tracks.misses.push(0);
            }
        }
        Ok(())
    }

    fn predictions(&self, tracks: &Tracks) -> Result<Vec<PredictedObstacle>> {
        let body = Body::sphere(self.scenario.obstacle_radius)?;
        let horizon = self.scenario.horizon;
        tracks
            .trackers
            .iter()
            .filter(|t| !t.history.is_empty())
            .map(|t| {
                let steps = if t.history.len() >= 2 {
                    predict_obstacle_with(
                        &t.track()?,
                        horizon,
                        self.scenario.dt,
                        &self.scenario.prediction,
                    )?
                    .steps
                } else {
                    vec![t.history[0]; horizon]
                };
                Ok(PredictedObstacle {
                    body: body.clone(),
                    steps,
                })
            })
            .collect()
    }

    /// Moves a planner agent and runs its filter.
    fn execute(&mut self, agent: &mut Agent, control: &Control) -> Result<()> {
        let s = self.scenario;
        let belief = agent.belief.expect("planner agents carry a belief");
        let noise = gaussian3(&mut self.rng, &s.noise.motion);
        let mut truth = propagate(&agent.true_pose, control, s.dt) + noise;
        truth.z = wrap_angle(truth.z);
        agent.true_pose = truth;
        let mut b = ekf_predict(&belief, control, s.dt, &self.model.motion_noise)?;
        if self.rng.random_bool(s.pose_fix_probability) {
            let mut z = truth + gaussian3(&mut self.rng, &s.noise.pose_fix);
            z.z = wrap_angle(z.z);
            b = ekf_update_pose(
                &b,
                &z,
                &Matrix3::from_diagonal(&Vector3::from(s.noise.pose_fix)),
            )?;
        }
        for (lm_cfg, lm) in s.landmarks.iter().zip(&self.model.landmarks) {
            let actual = Vector2::from(lm_cfg.true_position.unwrap_or(lm_cfg.position));
            let dist = (actual - truth.xy()).norm();
            if dist > s.sensor.landmark_range
                || dist < 1e-6
                || (lm.position - b.mean.xy()).norm() < 1e-6
            {
                continue;
            }
            let z =
                range_bearing(&truth, &actual)? + gaussian2(&mut self.rng, &s.noise.measurement);
            b = match (&lm.object_covariance, s.use_object_uncertainty) {
                (Some(cov), true) => {
                    let obj = ObjectBelief::new(lm.viewpoint.unwrap_or(b.mean), *cov)?;
                    ekf_update_with_object(
                        &b,
                        &z,
                        &obj,
                        &lm.position,
                        &self.model.measurement_noise,
                    )?
                }
                _ => ekf_update_standard(&b, &z, &lm.position, &self.model.measurement_noise)?,
            };
        }
        agent.belief = Some(b);
        Ok(())
    }

    /// Velocity of a scripted agent for this step.
    fn scripted_velocity(&self, cfg: &AgentConfig, agent: &mut Agent) -> Vector2<f64> {
        let ControllerConfig::Scripted {
            waypoints,
            speed,
            velocity,
            loop_waypoints,
        } = &cfg.controller
        else {
            return Vector2::zeros();
        };
        if waypoints.is_empty() {
            return velocity.map(Vector2::from).unwrap_or_else(Vector2::zeros);
        }
        let pos = agent.true_pose.xy();
        loop {
            if agent.waypoint >= waypoints.len() {
                if *loop_waypoints {
                    agent.waypoint = 0;
                } else {
                    return Vector2::zeros();
                }
            }
            let target = Vector2::from(waypoints[agent.waypoint]);
            let d = target - pos;
            if d.norm() < 1e-9 {
                agent.waypoint += 1;
                if agent.waypoint >= waypoints.len() && !*loop_waypoints {
                    return Vector2::zeros();
                }
                continue;
            }
            let step = speed * self.scenario.dt;
            if d.norm() <= step {
                agent.waypoint += 1;
                return d / self.scenario.dt;
            }
            return d / d.norm() * *speed;
        }
    }
}

/// Plan of the first planner agent from its initial belief, before any
/// scan has been taken.
pub fn initial_plan(scenario: &Scenario) -> Result<PlanResult> {
    scenario.validate()?;
    let agent = scenario
        .agents
        .iter()
        .find(|a| a.is_planner())
        .ok_or_else(|| Error::Validation(vec!["agents: no planner agent".into()]))?;
    let belief = PoseBelief::new(
        Vector3::from(agent.pose),
        Matrix3::from_diagonal(&Vector3::from(agent.covariance)),
    )?;
    let goal = Vector2::from(agent.goal.expect("validated planner goal"));
    plan(
        &belief,
        &goal,
        &[],
        &scenario.action_set()?,
        scenario.horizon,
        &scenario.weights()?,
        &scenario.planning_model()?,
    )
}

/// Runs a scenario in closed loop. Deterministic in `seed`.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<TrajectoryLog> {
    scenario.validate()?;
    let s = scenario;
    let model = s.planning_model()?;
    let mut runner = Runner {
        scenario: s,
        weights: s.weights()?,
        actions: s.action_set()?,
        model,
        scan_noise: ScanNoise {
            range_var: s.noise.scan_range_sd.powi(2).max(1e-6),
            bearing_var: s.noise.scan_bearing_var,
        },
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    let mut agents: Vec<Agent> = Vec::with_capacity(s.agents.len());
    for (i, cfg) in s.agents.iter().enumerate() {
        let mean = Vector3::from(cfg.pose);
        let (belief, true_pose) = if cfg.is_planner() {
            let b = PoseBelief::new(mean, Matrix3::from_diagonal(&Vector3::from(cfg.covariance)))?;
            let mut truth = mean + gaussian3(&mut runner.rng, &cfg.covariance);
            truth.z = wrap_angle(truth.z);
            (Some(b), truth)
        } else {
            (None, mean)
        };
        agents.push(Agent {
            body: cfg.body()?,
            true_pose,
            belief,
            tracks: Tracks {
                trackers: Vec::new(),
                misses: Vec::new(),
            },
            waypoint: 0,
            done: false,
            summary: AgentSummary {
                agent: i,
                name: cfg.name.clone(),
                min_distance: None,
                collision_steps: 0,
                infeasible_steps: 0,
                reached_goal: false,
                final_goal_distance: None,
            },
        });
    }

    let mut rows = Vec::new();
    let mut steps = 0;
    for k in 0..s.max_steps {
        if agents
            .iter()
            .zip(&s.agents)
            .all(|(a, c)| !c.is_planner() || a.done)
        {
            break;
        }
        steps = k + 1;
        let time = k as f64 * s.dt;
        let placed: Vec<PlacedBody> = agents
            .iter()
            .map(|a| PlacedBody {
                pose: a.true_pose,
                body: a.body.clone(),
            })
            .collect();
        let mut decisions: Vec<Decision> = Vec::with_capacity(agents.len());
        for (i, cfg) in s.agents.iter().enumerate() {
            let agent = &mut agents[i];
            if !cfg.is_planner() {
                let v = runner.scripted_velocity(cfg, agent);
                decisions.push(Decision::Scripted(v));
                continue;
            }
            let others: Vec<PlacedBody> = placed
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect();
            runner.sense(agent, &others, time)?;
            let belief = agent.belief.expect("planner agents carry a belief");
            let goal = Vector2::from(cfg.goal.expect("validated"));
            if (belief.mean.xy() - goal).norm() <= s.goal_tolerance {
                agent.done = true;
            }
            if agent.done {
                decisions.push(Decision::Halt);
                continue;
            }
            let predictions = runner.predictions(&agent.tracks)?;
            let result = plan(
                &belief,
                &goal,
                &predictions,
                &runner.actions,
                s.horizon,
                &runner.weights,
                &runner.model,
            )?;
            let first = result.beliefs[0].position();
            let worst = result.probabilities[0].iter().enumerate().max_by(|a, b| {
                (a.1.value + a.1.error_bound).total_cmp(&(b.1.value + b.1.error_bound))
            });
            let planned = worst.map(|(j, p)| PlannedStep {
                probability: p.value,
                bound: p.error_bound,
                robot: first,
                obstacle: predictions[j].steps[0],
            });
            let control = if result.feasible {
                result.controls[0]
            } else {
                agent.summary.infeasible_steps += 1;
                result.controls[0].zero()
            };
            decisions.push(Decision::Planned {
                control,
                feasible: result.feasible,
                step: planned,
                tracks: agent.tracks.trackers.len(),
            });
        }

        let starts: Vec<Vector3<f64>> = agents.iter().map(|a| a.true_pose).collect();
        let mut paths: Vec<Path2> = Vec::with_capacity(agents.len());
        for (i, d) in decisions.iter().enumerate() {
            let control = match d {
                Decision::Scripted(v) => {
                    let a = &mut agents[i];
                    a.true_pose.x += v.x * s.dt;
                    a.true_pose.y += v.y * s.dt;
                    if v.norm() > 0.0 {
                        a.true_pose.z = v.y.atan2(v.x);
                    }
                    None
                }
                Decision::Halt => Some(Control::Velocity { v: 0.0, omega: 0.0 }),
                Decision::Planned { control, .. } => Some(*control),
            };
            if let Some(u) = control {
                runner.execute(&mut agents[i], &u)?;
            }
            paths.push(Path2 {
                start: starts[i],
                end: agents[i].true_pose,
                control,
            });
        }

        for i in 0..agents.len() {
            let mut min_d: Option<f64> = None;
            let mut collision = false;
            for j in 0..agents.len() {
                if i == j {
                    continue;
                }
                let d = (1..=AUDIT_SUBSTEPS)
                    .map(|f| {
                        let f = f as f64 / AUDIT_SUBSTEPS as f64;
                        (paths[i].at(f, s.dt) - paths[j].at(f, s.dt)).norm()
                    })
                    .fold(f64::INFINITY, f64::min);
                min_d = Some(min_d.map_or(d, |m: f64| m.min(d)));
                if d < agents[i].body.circumradius() + agents[j].body.circumradius() {
                    collision = true;
                }
            }
            let a = &mut agents[i];
            if let Some(d) = min_d {
                a.summary.min_distance = Some(a.summary.min_distance.map_or(d, |m| m.min(d)));
            }
            if collision {
                a.summary.collision_steps += 1;
            }
            rows.push(log_row(
                k,
                (k + 1) as f64 * s.dt,
                i,
                a,
                min_d,
                collision,
                &decisions[i],
            ));
        }
    }

    let mut summary = Vec::with_capacity(agents.len());
    for (a, cfg) in agents.into_iter().zip(&s.agents) {
        let mut sm = a.summary;
        if let Some(g) = cfg.goal {
            let d = (a.true_pose.xy() - Vector2::from(g)).norm();
            sm.final_goal_distance = Some(d);
            sm.reached_goal = a.done;
        }
        summary.push(sm);
    }
    Ok(TrajectoryLog {
        rows,
        summary,
        steps,
    })
}

/// True motion of one agent over one step, for the collision audit.
struct Path2 {
    start: Vector3<f64>,
    end: Vector3<f64>,
    control: Option<Control>,
}

impl Path2 {
    /// Position at fraction `f` of the step: the noise-free motion plus a
    /// linear share of the realized noise.
    fn at(&self, f: f64, dt: f64) -> Vector2<f64> {
        match &self.control {
            None => self.start.xy() + (self.end.xy() - self.start.xy()) * f,
            Some(u) => {
                let full = propagate(&self.start, u, dt);
                let part = propagate(&self.start, u, f * dt);
                part.xy() + (self.end.xy() - full.xy()) * f
            }
        }
    }
}

struct PlannedStep {
    probability: f64,
    bound: f64,
    robot: PositionBelief,
    obstacle: PositionBelief,
}

enum Decision {
    Scripted(Vector2<f64>),
    Halt,
    Planned {
        control: Control,
        feasible: bool,
        step: Option<PlannedStep>,
        tracks: usize,
    },
}

fn log_row(
    step: usize,
    time: f64,
    agent: usize,
    a: &Agent,
    min_distance: Option<f64>,
    collision: bool,
    d: &Decision,
) -> LogRow {
    let b = a.belief;
    let (v, omega, feasible, planned, tracks) = match d {
        Decision::Scripted(vel) => (Some(vel.norm()), None, None, None, None),
        Decision::Halt => (
            Some(0.0),
            Some(0.0),
            None,
            None,
            Some(a.tracks.trackers.len()),
        ),
        Decision::Planned {
            control,
            feasible,
            step,
            tracks,
        } => {
            let (v, w) = match *control {
                Control::Velocity { v, omega } => (v, omega),
                Control::Odometry { trans, rot1, .. } => (trans, rot1),
            };
            (
                Some(v),
                Some(w),
                Some(*feasible),
                step.as_ref(),
                Some(*tracks),
            )
        }
    };
    LogRow {
        step,
        time,
        agent,
        true_x: a.true_pose.x,
        true_y: a.true_pose.y,
        true_theta: a.true_pose.z,
        est_x: b.map(|b| b.mean.x),
        est_y: b.map(|b| b.mean.y),
        est_theta: b.map(|b| b.mean.z),
        cov_xx: b.map(|b| b.covariance[(0, 0)]),
        cov_xy: b.map(|b| b.covariance[(0, 1)]),
        cov_yy: b.map(|b| b.covariance[(1, 1)]),
        cov_tt: b.map(|b| b.covariance[(2, 2)]),
        min_distance,
        collision,
        v,
        omega,
        feasible,
        probability: planned.map(|p| p.probability),
        probability_bound: planned.map(|p| p.bound),
        plan_x: planned.map(|p| p.robot.mean.x),
        plan_y: planned.map(|p| p.robot.mean.y),
        plan_cxx: planned.map(|p| p.robot.covariance[(0, 0)]),
        plan_cxy: planned.map(|p| p.robot.covariance[(0, 1)]),
        plan_cyy: planned.map(|p| p.robot.covariance[(1, 1)]),
        obs_x: planned.map(|p| p.obstacle.mean.x),
        obs_y: planned.map(|p| p.obstacle.mean.y),
        obs_cxx: planned.map(|p| p.obstacle.covariance[(0, 0)]),
        obs_cxy: planned.map(|p| p.obstacle.covariance[(0, 1)]),
        obs_cyy: planned.map(|p| p.obstacle.covariance[(1, 1)]),
        tracks,
    }
}

/// Writes the log as CSV with a fixed header (the `LogRow` field names).
pub fn write_log_to<W: Write>(log: &TrajectoryLog, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(LOG_HEADER)?;
    for r in &log.rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_log(log: &TrajectoryLog, path: &Path) -> Result<()> {
    write_log_to(log, std::fs::File::create(path)?)
}

/// Reads rows back from a CSV log.
pub fn read_log_rows<R: Read>(r: R) -> Result<Vec<LogRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
