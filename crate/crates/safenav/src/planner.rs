//! Receding-horizon action selection over predicted beliefs with certified
//! collision-probability costs.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::belief::{
    ekf_predict, ekf_update_standard, ekf_update_with_object, range_bearing, Control, ObjectBelief,
    PoseBelief,
};
use crate::collision::{disk_probability, effective_radius, Body, PositionBelief};
use crate::error::{Error, Result};
use crate::quadform::{SeriesConfig, SeriesResult};

/// Node expansions allowed before falling back to greedy selection.
pub const NODE_BUDGET: usize = 100_000;
/// Smallest accepted collision penalty.
pub const MIN_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `M_u`, sized to the control vector.
    pub control: DMatrix<f64>,
    /// `M_g` on the position components.
    pub goal: Matrix2<f64>,
    /// `M_Σ`; the covariance term is `tr(M_Σᵀ Σ M_Σ)`.
    pub covariance: Matrix3<f64>,
    /// `M_C`.
    pub collision: f64,
    /// `M`, charged when a step is not certified below the threshold.
    pub penalty: f64,
    pub prob_threshold: f64,
    /// Fraction of the goal distance also charged at every look-ahead step.
    /// With the goal in the terminal cost alone, a plan that waits and then
    /// moves is never worse than one that moves first, and the robot can
    /// stall short of the goal. `0` gives the terminal-only objective.
    pub stage_goal: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            control: DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.01])),
            goal: Matrix2::identity(),
            covariance: Matrix3::from_diagonal(&Vector3::new(0.3, 0.3, 0.0)),
            collision: 100.0,
            penalty: 1e6,
            prob_threshold: 0.01,
            stage_goal: 0.1,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let psd = |m: DMatrix<f64>| {
            let s = (&m + m.transpose()) * 0.5;
            (&m - &s).amax() <= 1e-12 * (1.0 + m.amax())
                && s.symmetric_eigenvalues().min() >= -1e-12
        };
        if !self.control.is_square() || !psd(self.control.clone()) {
            bad.push("weights.control must be a symmetric PSD matrix".to_string());
        }
        if !psd(DMatrix::from_column_slice(2, 2, self.goal.as_slice())) {
            bad.push("weights.goal must be symmetric PSD".to_string());
        }
        if !self.covariance.iter().all(|v| v.is_finite()) {
            bad.push("weights.covariance must be finite".to_string());
        }
        if !(self.collision >= 0.0) {
            bad.push("weights.collision must be non-negative".to_string());
        }
        if !(self.penalty >= MIN_PENALTY) {
            bad.push(format!("weights.penalty must be at least {MIN_PENALTY:e}"));
        }
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            bad.push("weights.prob_threshold must lie in (0, 1)".to_string());
        }
        if !(self.stage_goal >= 0.0 && self.stage_goal.is_finite()) {
            bad.push("weights.stage_goal must be finite and non-negative".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// Every weight (including the penalty) multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Weights {
        Weights {
            control: &self.control * c,
            goal: self.goal * c,
            // The covariance term is quadratic in M_Σ.
            covariance: self.covariance * c.sqrt(),
            collision: self.collision * c,
            penalty: self.penalty * c,
            prob_threshold: self.prob_threshold,
            stage_goal: self.stage_goal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    controls: Vec<Control>,
}

impl ActionSet {
    pub fn new(controls: Vec<Control>) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::InvalidInput("action set is empty".into()));
        }
        Ok(ActionSet { controls })
    }

    /// `{0, v/2, v} × {−ω, 0, ω}`.
    pub fn unicycle_grid(v_max: f64, omega_max: f64) -> Result<Self> {
        if !(v_max > 0.0 && omega_max > 0.0) {
            return Err(Error::InvalidInput(
                "v_max and omega_max must be positive".into(),
            ));
        }
        let mut controls = Vec::with_capacity(9);
        for v in [0.0, 0.5 * v_max, v_max] {
            for omega in [-omega_max, 0.0, omega_max] {
                controls.push(Control::Velocity { v, omega });
            }
        }
        Ok(ActionSet { controls })
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }
}

/// A mapped landmark, optionally with object uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub position: Vector2<f64>,
    /// `Σ_O` over the viewpoint pose.
    pub object_covariance: Option<Matrix3<f64>>,
    /// `μ_O`; when absent the viewpoint is centred on the predicted pose,
    /// so only the covariance part of the update applies.
    pub viewpoint: Option<Vector3<f64>>,
}

impl Landmark {
    pub fn known(x: f64, y: f64) -> Self {
        Landmark {
            position: Vector2::new(x, y),
            object_covariance: None,
            viewpoint: None,
        }
    }
}

/// Search used when exhaustive enumeration exceeds the node budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    /// Each step re-selects the action whose constant continuation to the
    /// horizon is cheapest.
    Hold,
    /// Best sequence of the form "a for m steps, then b", which includes
    /// every held action and lets the robot brake or straighten out.
    #[default]
    TwoSegment,
}

/// Everything the planner needs to roll beliefs forward.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningModel {
    pub dt: f64,
    pub motion_noise: Matrix3<f64>,
    pub measurement_noise: Matrix2<f64>,
    pub landmarks: Vec<Landmark>,
    pub sensor_range: f64,
    pub robot_body: Body,
    pub use_object_uncertainty: bool,
    pub delta: f64,
    pub node_budget: usize,
    pub fallback: Fallback,
}

impl PlanningModel {
    pub fn new(dt: f64, robot_body: Body) -> Self {
        PlanningModel {
            dt,
            motion_noise: Matrix3::from_diagonal(&Vector3::new(1e-4, 1e-4, 1e-5)),
            measurement_noise: Matrix2::from_diagonal(&Vector2::new(0.01, 1e-3)),
            landmarks: Vec::new(),
            sensor_range: 5.0,
            robot_body,
            use_object_uncertainty: true,
            delta: crate::quadform::DEFAULT_DELTA,
            node_budget: NODE_BUDGET,
            fallback: Fallback::default(),
        }
    }

    /// Maximum-likelihood measurement update: every landmark in range is
    /// observed with zero innovation.
    pub fn ml_update(&self, predicted: &PoseBelief) -> Result<PoseBelief> {
        let mut b = *predicted;
        for lm in &self.landmarks {
            let dist = (lm.position - b.mean.xy()).norm();
            if dist > self.sensor_range || dist < 1e-6 {
                continue;
            }
            let z = range_bearing(&b.mean, &lm.position)?;
            b = match (&lm.object_covariance, self.use_object_uncertainty) {
                (Some(cov), true) => {
                    let obj = ObjectBelief::new(lm.viewpoint.unwrap_or(b.mean), *cov)?;
                    ekf_update_with_object(&b, &z, &obj, &lm.position, &self.measurement_noise)?
                }
                _ => ekf_update_standard(&b, &z, &lm.position, &self.measurement_noise)?,
            };
        }
        Ok(b)
    }

    /// Predict then ML-update.
    pub fn step(&self, belief: &PoseBelief, control: &Control) -> Result<PoseBelief> {
        let predicted = ekf_predict(belief, control, self.dt, &self.motion_noise)?;
        self.ml_update(&predicted)
    }
}

/// Obstacle belief at one step together with its footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleAtStep {
    pub belief: PositionBelief,
    pub body: Body,
}

/// Predicted beliefs of one obstacle for steps `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedObstacle {
    pub body: Body,
    pub steps: Vec<PositionBelief>,
}

impl PredictedObstacle {
    /// Belief at step `l` (1-based); the last prediction is held beyond
    /// the available horizon.
    pub fn at(&self, l: usize) -> Option<ObstacleAtStep> {
        let b = self.steps.get(l.saturating_sub(1)).or(self.steps.last())?;
        Some(ObstacleAtStep {
            belief: *b,
            body: self.body.clone(),
        })
    }
}

/// Collision probability between a robot position belief and an obstacle,
/// skipping the series when a half-plane Gaussian tail already certifies
/// the probability below `delta`.
pub fn certified_probability(
    robot: &PositionBelief,
    robot_body: &Body,
    obstacle: &ObstacleAtStep,
    cfg: &SeriesConfig,
) -> Result<SeriesResult> {
    let radius = effective_radius(robot_body, &obstacle.body)?;
    let mean = robot.mean - obstacle.belief.mean;
    let cov = robot.covariance + obstacle.belief.covariance;
    let dist = mean.norm();
    // Upper bound from the half-plane containing the disc.
    let mut tail = 1.0;
    if dist > radius {
        let a = mean / dist;
        let sd = (a.transpose() * cov * a)[(0, 0)].sqrt();
        if sd > 0.0 {
            tail = Normal::standard().cdf((radius - dist) / sd);
        } else {
            tail = 0.0;
        }
    }
    let interval = |tail: f64| SeriesResult {
        value: 0.0,
        terms_used: 0,
        error_bound: tail,
        rho: 0.0,
    };
    if tail <= cfg.delta {
        return Ok(interval(tail));
    }
    match disk_probability(&mean, &cov, radius, cfg) {
        // Badly conditioned covariances can exhaust the term budget; the
        // half-plane interval [0, tail] is still certified.
        Err(Error::ConvergenceFailure { .. }) => Ok(interval(tail)),
        r => r,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    pub total: f64,
    pub probabilities: Vec<SeriesResult>,
    pub penalized: bool,
}

fn control_cost(control: &Control, weights: &Weights) -> Result<f64> {
    let u = DVector::from_vec(control.as_vec());
    if weights.control.nrows() != u.len() {
        return Err(Error::InvalidInput(format!(
            "control weight is {}x{} but the control has {} components",
            weights.control.nrows(),
            weights.control.ncols(),
            u.len()
        )));
    }
    Ok((u.transpose() * &weights.control * &u)[(0, 0)])
}

fn covariance_cost(belief: &PoseBelief, weights: &Weights) -> f64 {
    (weights.covariance.transpose() * belief.covariance * weights.covariance).trace()
}

/// `‖u‖²_{M_u} + tr(M_Σᵀ Σ M_Σ) + Σ_j M_C·P_j`, with `P_j` replaced by the
/// penalty whenever `P_j + bound` exceeds the threshold. A polygonal
/// `robot_body` is given in the robot frame and turned to the mean heading.
pub fn stage_cost(
    belief: &PoseBelief,
    control: &Control,
    robot_body: &Body,
    obstacles: &[ObstacleAtStep],
    weights: &Weights,
    cfg: &SeriesConfig,
) -> Result<StageCost> {
    let mut total = control_cost(control, weights)? + covariance_cost(belief, weights);
    let position = belief.position();
    let body = robot_body.rotated(belief.mean.z);
    let mut probabilities = Vec::with_capacity(obstacles.len());
    let mut penalized = false;
    for obs in obstacles {
        let p = certified_probability(&position, &body, obs, cfg)?;
        if p.value + p.error_bound > weights.prob_threshold {
            total += weights.penalty;
            penalized = true;
        } else {
            total += weights.collision * p.value;
        }
        probabilities.push(p);
    }
    Ok(StageCost {
        total,
        probabilities,
        penalized,
    })
}

/// `‖μ_xy − g‖²_{M_g} + tr(M_Σᵀ Σ M_Σ)`.
pub fn terminal_cost(belief: &PoseBelief, goal: &Vector2<f64>, weights: &Weights) -> f64 {
    goal_distance(belief, goal, weights) + covariance_cost(belief, weights)
}

/// `‖μ − g‖²_{M_g}` on the position components.
pub fn goal_distance(belief: &PoseBelief, goal: &Vector2<f64>, weights: &Weights) -> f64 {
    let e = belief.mean.xy() - goal;
    (e.transpose() * weights.goal * e)[(0, 0)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub controls: Vec<Control>,
    pub beliefs: Vec<PoseBelief>,
    /// Per step, one entry per obstacle.
    pub probabilities: Vec<Vec<SeriesResult>>,
    pub cost: f64,
    pub feasible: bool,
    /// False when the greedy fallback was used.
    pub exhaustive: bool,
}

struct Rollout {
    beliefs: Vec<PoseBelief>,
    probabilities: Vec<Vec<SeriesResult>>,
    stage_total: f64,
    penalized: bool,
}

struct Ctx<'a> {
    goal: Vector2<f64>,
    obstacles: &'a [PredictedObstacle],
    model: &'a PlanningModel,
    weights: &'a Weights,
    cfg: SeriesConfig,
}

impl Ctx<'_> {
    fn obstacles_at(&self, l: usize) -> Vec<ObstacleAtStep> {
        self.obstacles.iter().filter_map(|o| o.at(l)).collect()
    }

    /// Belief and stage cost after applying `control` at (0-based) step `l`.
    fn advance(
        &self,
        belief: &PoseBelief,
        control: &Control,
        l: usize,
    ) -> Result<(PoseBelief, StageCost)> {
        let next = self.model.step(belief, control)?;
        let obs = self.obstacles_at(l + 1);
        let mut cost = stage_cost(
            &next,
            control,
            &self.model.robot_body,
            &obs,
            self.weights,
            &self.cfg,
        )?;
        cost.total += self.weights.stage_goal * goal_distance(&next, &self.goal, self.weights);
        Ok((next, cost))
    }

    fn rollout(
        &self,
        start: &PoseBelief,
        controls: &[Control],
        first_step: usize,
    ) -> Result<Rollout> {
        let mut r = Rollout {
            beliefs: Vec::with_capacity(controls.len()),
            probabilities: Vec::with_capacity(controls.len()),
            stage_total: 0.0,
            penalized: false,
        };
        let mut b = *start;
        for (i, u) in controls.iter().enumerate() {
            let (next, c) = self.advance(&b, u, first_step + i)?;
            r.stage_total += c.total;
            r.penalized |= c.penalized;
            r.probabilities.push(c.probabilities);
            r.beliefs.push(next);
            b = next;
        }
        Ok(r)
    }
}

struct Best {
    cost: f64,
    seq: Vec<usize>,
}

fn improves(best: &Option<Best>, cost: f64) -> bool {
    best.as_ref().is_none_or(|b| cost < b.cost)
}

fn search(
    ctx: &Ctx,
    actions: &ActionSet,
    horizon: usize,
    belief: &PoseBelief,
    depth: usize,
    acc: f64,
    seq: &mut Vec<usize>,
    best: &mut Option<Best>,
) -> Result<()> {
    if depth == horizon {
        let total = acc + terminal_cost(belief, &ctx.goal, ctx.weights);
        if improves(best, total) {
            *best = Some(Best {
                cost: total,
                seq: seq.clone(),
            });
        }
        return Ok(());
    }
    for (i, u) in actions.controls().iter().enumerate() {
        let (next, c) = ctx.advance(belief, u, depth)?;
        seq.push(i);
        search(
            ctx,
            actions,
            horizon,
            &next,
            depth + 1,
            acc + c.total,
            seq,
            best,
        )?;
        seq.pop();
    }
    Ok(())
}

fn node_count(branching: usize, horizon: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut level: usize = 1;
    for _ in 0..horizon {
        level = level.checked_mul(branching)?;
        total = total.checked_add(level)?;
    }
    Some(total)
}

/// Selects the `L`-step control sequence minimizing the objective.
///
/// Exhaustive when `Σ_l |A|^l` fits the node budget; otherwise the model's
/// [`Fallback`] search is used.
pub fn plan(
    belief: &PoseBelief,
    goal: &Vector2<f64>,
    obstacles: &[PredictedObstacle],
    actions: &ActionSet,
    horizon: usize,
    weights: &Weights,
    model: &PlanningModel,
) -> Result<PlanResult> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if actions.is_empty() {
        return Err(Error::InvalidInput("action set is empty".into()));
    }
    weights.validate()?;
    let ctx = Ctx {
        goal: *goal,
        obstacles,
        model,
        weights,
        cfg: SeriesConfig::with_delta(model.delta),
    };
    let exhaustive = node_count(actions.len(), horizon).is_some_and(|n| n <= model.node_budget);
    let seq: Vec<usize> = if exhaustive {
        let mut best = None;
        search(
            &ctx,
            actions,
            horizon,
            belief,
            0,
            0.0,
            &mut Vec::with_capacity(horizon),
            &mut best,
        )?;
        best.map(|b| b.seq).unwrap_or_default()
    } else {
        match model.fallback {
            Fallback::Hold => greedy(&ctx, actions, horizon, belief)?,
            Fallback::TwoSegment => two_segment(&ctx, actions, horizon, belief)?,
        }
    };
    let controls: Vec<Control> = seq.iter().map(|&i| actions.controls()[i]).collect();
    let r = ctx.rollout(belief, &controls, 0)?;
    let last = r.beliefs.last().copied().unwrap_or(*belief);
    Ok(PlanResult {
        cost: r.stage_total + terminal_cost(&last, goal, weights),
        feasible: !r.penalized,
        controls,
        beliefs: r.beliefs,
        probabilities: r.probabilities,
        exhaustive,
    })
}

fn two_segment(
    ctx: &Ctx,
    actions: &ActionSet,
    horizon: usize,
    start: &PoseBelief,
) -> Result<Vec<usize>> {
    let controls = actions.controls();
    let mut best: Option<Best> = None;
    let mut consider = |cost: f64, a: usize, m: usize, b: usize| {
        if improves(&best, cost) {
            let mut seq = vec![a; m];
            seq.resize(horizon, b);
            best = Some(Best { cost, seq });
        }
    };
    for (a, ua) in controls.iter().enumerate() {
        // Held prefix: belief and cumulative stage cost after each step.
        let mut prefix = Vec::with_capacity(horizon);
        let (mut b0, mut acc) = (*start, 0.0);
        for l in 0..horizon {
            let (next, c) = ctx.advance(&b0, ua, l)?;
            acc += c.total;
            prefix.push((next, acc));
            b0 = next;
        }
        consider(
            acc + terminal_cost(&b0, &ctx.goal, ctx.weights),
            a,
            horizon,
            a,
        );
        for m in 1..horizon {
            let (bm, acc_m) = prefix[m - 1];
            for (b, ub) in controls.iter().enumerate() {
                if b == a {
                    continue;
                }
                let rest = ctx.rollout(&bm, &vec![*ub; horizon - m], m)?;
                let last = rest.beliefs[horizon - m - 1];
                consider(
                    acc_m + rest.stage_total + terminal_cost(&last, &ctx.goal, ctx.weights),
                    a,
                    m,
                    b,
                );
            }
        }
    }
    Ok(best.map(|b| b.seq).unwrap_or_default())
}

fn greedy(
    ctx: &Ctx,
    actions: &ActionSet,
    horizon: usize,
    start: &PoseBelief,
) -> Result<Vec<usize>> {
    let mut seq = Vec::with_capacity(horizon);
    let mut b = *start;
    for l in 0..horizon {
        let mut best: Option<Best> = None;
        for (i, u) in actions.controls().iter().enumerate() {
            let hold = vec![*u; horizon - l];
            let r = ctx.rollout(&b, &hold, l)?;
            let last = r.beliefs.last().copied().unwrap_or(b);
            let cost = r.stage_total + terminal_cost(&last, &ctx.goal, ctx.weights);
            if improves(&best, cost) {
                best = Some(Best { cost, seq: vec![i] });
            }
        }
        let i = best.expect("action set is non-empty").seq[0];
        seq.push(i);
        b = ctx.advance(&b, &actions.controls()[i], l)?.0;
    }
    Ok(seq)
}
