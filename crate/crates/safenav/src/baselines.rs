//! Monte Carlo ground truth and the comparison methods for two uncertain
//! discs.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::collision::{disk_probability, PositionBelief};
use crate::error::{Error, Result};
use crate::quadform::SeriesConfig;

/// Built-in reconstructed cases, keyed `builtin-a`, `builtin-b`, `builtin-c`.
pub const BUILTIN_FIXTURES: &str = include_str!("../fixtures/comparison_cases.json");

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCase {
    pub label: String,
    pub robot: PositionBelief,
    pub robot_radius: f64,
    pub obstacle: PositionBelief,
    pub obstacle_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BeliefRecord {
    mean: [f64; 2],
    covariance: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseRecord {
    label: String,
    robot: BeliefRecord,
    robot_radius: f64,
    obstacle: BeliefRecord,
    obstacle_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureFile {
    version: u32,
    cases: Vec<CaseRecord>,
}

impl BeliefRecord {
    fn to_belief(&self, field: &str) -> std::result::Result<PositionBelief, String> {
        let c = self.covariance;
        PositionBelief::new(
            Vector2::new(self.mean[0], self.mean[1]),
            Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]),
        )
        .map_err(|e| format!("{field}: {e}"))
    }
}

impl CaseRecord {
    fn into_case(self) -> Result<ComparisonCase> {
        let mut bad = Vec::new();
        let robot = self.robot.to_belief("robot").map_err(|e| bad.push(e)).ok();
        let obstacle = self
            .obstacle
            .to_belief("obstacle")
            .map_err(|e| bad.push(e))
            .ok();
        if !(self.robot_radius > 0.0) {
            bad.push("robot_radius must be positive".into());
        }
        if !(self.obstacle_radius > 0.0) {
            bad.push("obstacle_radius must be positive".into());
        }
        match (robot, obstacle) {
            (Some(robot), Some(obstacle)) if bad.is_empty() => Ok(ComparisonCase {
                label: self.label,
                robot,
                robot_radius: self.robot_radius,
                obstacle,
                obstacle_radius: self.obstacle_radius,
            }),
            _ => Err(Error::Validation(bad)),
        }
    }
}

impl ComparisonCase {
    pub fn combined_radius(&self) -> f64 {
        self.robot_radius + self.obstacle_radius
    }

    /// Mean and covariance of `x − s`.
    pub fn relative(&self) -> (Vector2<f64>, Matrix2<f64>) {
        (
            self.robot.mean - self.obstacle.mean,
            self.robot.covariance + self.obstacle.covariance,
        )
    }

    /// Parses a single case, or the first case of a fixtures document.
    pub fn from_json(text: &str) -> Result<ComparisonCase> {
        if let Ok(file) = serde_json::from_str::<FixtureFile>(text) {
            return file
                .cases
                .into_iter()
                .next()
                .ok_or_else(|| Error::Parse("fixtures file has no cases".into()))?
                .into_case();
        }
        serde_json::from_str::<CaseRecord>(text)
            .map_err(|e| Error::Parse(format!("comparison case: {e}")))?
            .into_case()
    }

    pub fn to_json(&self) -> String {
        let rec = |b: &PositionBelief| BeliefRecord {
            mean: [b.mean.x, b.mean.y],
            covariance: [
                [b.covariance[(0, 0)], b.covariance[(0, 1)]],
                [b.covariance[(1, 0)], b.covariance[(1, 1)]],
            ],
        };
        serde_json::to_string_pretty(&CaseRecord {
            label: self.label.clone(),
            robot: rec(&self.robot),
            robot_radius: self.robot_radius,
            obstacle: rec(&self.obstacle),
            obstacle_radius: self.obstacle_radius,
        })
        .expect("case serializes")
    }
}

/// All built-in fixture cases.
pub fn builtin_cases() -> Result<Vec<ComparisonCase>> {
    let file: FixtureFile = serde_json::from_str(BUILTIN_FIXTURES)
        .map_err(|e| Error::Parse(format!("built-in fixtures: {e}")))?;
    file.cases.into_iter().map(CaseRecord::into_case).collect()
}

/// Looks up `builtin-a`/`builtin-b`/`builtin-c`.
pub fn builtin_case(name: &str) -> Result<ComparisonCase> {
    builtin_cases()?
        .into_iter()
        .find(|c| c.label == name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown built-in case `{name}`")))
}

/// `x = μ + L e` with `L Lᵀ = Σ`; works for singular PSD matrices.
struct GaussianSampler {
    mean: Vector2<f64>,
    factor: Matrix2<f64>,
}

impl GaussianSampler {
    fn new(b: &PositionBelief) -> Self {
        let eig = b.covariance.symmetric_eigen();
        let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        GaussianSampler {
            mean: b.mean,
            factor: eig.eigenvectors * Matrix2::from_diagonal(&sqrt),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vector2<f64> {
        let e = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + self.factor * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub probability: f64,
    pub stderr: f64,
}

fn check_samples(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 samples, got {n}"
        )));
    }
    Ok(())
}

/// Fraction of independent `(x, s)` draws with `‖x − s‖ ≤ r₁ + s₁`.
pub fn mc_oracle(case: &ComparisonCase, n_samples: usize, seed: u64) -> Result<McEstimate> {
    check_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robot = GaussianSampler::new(&case.robot);
    let obstacle = GaussianSampler::new(&case.obstacle);
    let r = case.combined_radius();
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let x = robot.sample(&mut rng);
        let s = obstacle.sample(&mut rng);
        if (x - s).norm() <= r {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    Ok(McEstimate {
        probability: p,
        stderr: (p * (1.0 - p) / n_samples as f64).sqrt(),
    })
}

/// Density of `N(0, Σ)` at `d`.
fn gaussian_density(d: &Vector2<f64>, cov: &Matrix2<f64>) -> Result<f64> {
    let det = cov.determinant();
    let inv = cov
        .try_inverse()
        .filter(|_| det > 0.0)
        .ok_or_else(|| Error::Singular("combined covariance".into()))?;
    Ok((-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp() / (2.0 * PI * det.sqrt()))
}

/// Robot area times the combined density at the mean separation.
pub fn dutoit(case: &ComparisonCase) -> Result<f64> {
    let (d, cov) = case.relative();
    let v = PI * case.robot_radius * case.robot_radius;
    Ok((v * gaussian_density(&d, &cov)?).clamp(0.0, 1.0))
}

/// Robot area times the largest combined density on the robot boundary.
pub fn park(case: &ComparisonCase) -> Result<f64> {
    let (d, cov) = case.relative();
    let r = case.robot_radius;
    let f = |t: f64| gaussian_density(&(d + Vector2::new(r * t.cos(), r * t.sin())), &cov);
    let step = 2.0 * PI / 360.0;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..360 {
        let t = i as f64 * step;
        let v = f(t)?;
        if v > best.1 {
            best = (t, v);
        }
    }
    // Golden-section refinement inside the bracketing samples.
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (f(c)?, f(e)?);
    for _ in 0..60 {
        if fc > fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = f(e)?;
        }
    }
    let peak = best.1.max(fc).max(fe);
    Ok((PI * r * r * peak).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZhuResult {
    pub probability: f64,
    /// Coincident means: no separating direction exists.
    pub degenerate: bool,
}

/// Half-plane bound along the mean separation direction.
pub fn zhu(case: &ComparisonCase) -> ZhuResult {
    let (d, cov) = case.relative();
    let dist = d.norm();
    if dist < 1e-12 {
        return ZhuResult {
            probability: 0.5,
            degenerate: true,
        };
    }
    let a = d / dist;
    let sd = (a.transpose() * cov * a)[(0, 0)].sqrt();
    let margin = case.combined_radius() - dist;
    let p = if sd > 0.0 {
        Normal::standard().cdf(margin / sd)
    } else if margin >= 0.0 {
        1.0
    } else {
        0.0
    };
    ZhuResult {
        probability: p,
        degenerate: false,
    }
}

/// Averages, over robot samples, the obstacle mass inside the collision
/// disc around each sample.
pub fn lambert_mci(case: &ComparisonCase, n_samples: usize, seed: u64) -> Result<f64> {
    check_samples(n_samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let robot = GaussianSampler::new(&case.robot);
    let cfg = SeriesConfig::with_delta(1e-6);
    let r = case.combined_radius();
    let mut sum = 0.0;
    for _ in 0..n_samples {
        let x = robot.sample(&mut rng);
        let p = disk_probability(
            &(x - case.obstacle.mean),
            &case.obstacle.covariance,
            r,
            &cfg,
        )?;
        sum += p.value;
    }
    Ok(sum / n_samples as f64)
}

/// Exact series value with the given accuracy.
pub fn exact(case: &ComparisonCase, delta: f64) -> Result<f64> {
    let (d, cov) = case.relative();
    Ok(disk_probability(
        &d,
        &cov,
        case.combined_radius(),
        &SeriesConfig::with_delta(delta),
    )?
    .value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub probability: f64,
    /// `None` when timing was disabled.
    pub time_mean_s: Option<f64>,
    pub time_std_s: Option<f64>,
    pub feasible: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareConfig {
    pub threshold: f64,
    /// Timing repeats; `0` disables timing so the output is reproducible.
    pub repeats: usize,
    pub samples: usize,
    pub seed: u64,
    pub delta: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            threshold: 0.09,
            repeats: 10,
            samples: 10_000,
            seed: 0,
            delta: 1e-6,
        }
    }
}

pub const METHOD_NAMES: [&str; 6] = [
    "exact",
    "numerical-integral",
    "lambert",
    "dutoit",
    "park",
    "zhu",
];

fn timed<F: FnMut() -> Result<f64>>(
    repeats: usize,
    mut f: F,
) -> Result<(f64, Option<f64>, Option<f64>)> {
    let value = f()?;
    if repeats == 0 {
        return Ok((value, None, None));
    }
    let times: Vec<f64> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            f().map(|_| t.elapsed().as_secs_f64())
        })
        .collect::<Result<_>>()?;
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / times.len() as f64;
    Ok((value, Some(mean), Some(var.sqrt())))
}

/// Runs every method on one case. Timing runs are sequential.
pub fn compare(case: &ComparisonCase, cfg: &CompareConfig) -> Result<Vec<ComparisonRow>> {
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold {} must lie in (0, 1)",
            cfg.threshold
        )));
    }
    let mut rows = Vec::with_capacity(METHOD_NAMES.len());
    let mut push =
        |method: &str, (p, mean, std): (f64, Option<f64>, Option<f64>), note: Option<String>| {
            rows.push(ComparisonRow {
                method: method.to_string(),
                probability: p,
                time_mean_s: mean,
                time_std_s: std,
                feasible: p <= cfg.threshold,
                note,
            })
        };
    push(
        "exact",
        timed(cfg.repeats, || exact(case, cfg.delta))?,
        None,
    );
    let mc = mc_oracle(case, cfg.samples, cfg.seed)?;
    push(
        "numerical-integral",
        timed(cfg.repeats, || {
            mc_oracle(case, cfg.samples, cfg.seed).map(|m| m.probability)
        })?,
        Some(format!("stderr {:.5}", mc.stderr)),
    );
    push(
        "lambert",
        timed(cfg.repeats, || {
            lambert_mci(case, cfg.samples.min(1_000), cfg.seed)
        })?,
        None,
    );
    push("dutoit", timed(cfg.repeats, || dutoit(case))?, None);
    push("park", timed(cfg.repeats, || park(case))?, None);
    let z = zhu(case);
    push(
        "zhu",
        timed(cfg.repeats, || Ok(zhu(case).probability))?,
        z.degenerate.then(|| "coincident means".to_string()),
    );
    Ok(rows)
}

/// Formula summary printed above the table.
pub const REPORT_HEADER: &str = "\
# exact: series CDF of |x - s|^2 at (r1 + s1)^2
# numerical-integral: Monte Carlo over independent robot/obstacle draws
# lambert: robot samples, obstacle mass inside the collision disc per sample
# dutoit: pi r1^2 * N(mu_x; mu_s, Sx + Ss)
# park: pi r1^2 * max density on the robot boundary circle
# zhu: Phi((r1 + s1 - a^T d) / sqrt(a^T S a)), a = d / |d|";

fn fmt_time(t: Option<f64>) -> String {
    t.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into())
}

pub fn render_table(case: &ComparisonCase, rows: &[ComparisonRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\ncase: {}\n", case.label);
    out.push_str(&format!(
        "{:<20} {:>11} {:>11} {:>11} {:>8}\n",
        "method", "probability", "time_mean_s", "time_std_s", "feasible"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:>10.4}% {:>11} {:>11} {:>8}{}\n",
            r.method,
            100.0 * r.probability,
            fmt_time(r.time_mean_s),
            fmt_time(r.time_std_s),
            if r.feasible { "yes" } else { "no" },
            r.note
                .as_ref()
                .map(|n| format!("  ({n})"))
                .unwrap_or_default()
        ));
    }
    out
}

pub fn write_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "method",
        "probability",
        "time_mean_s",
        "time_std_s",
        "feasible",
    ])?;
    for r in rows {
        let opt = |t: Option<f64>| t.map(|v| v.to_string()).unwrap_or_default();
        wtr.write_record([
            r.method.clone(),
            r.probability.to_string(),
            opt(r.time_mean_s),
            opt(r.time_std_s),
            r.feasible.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(d: f64, var: f64, r1: f64, s1: f64) -> ComparisonCase {
        ComparisonCase {
            label: "t".into(),
            robot: PositionBelief::isotropic(d, 0.0, var).unwrap(),
            robot_radius: r1,
            obstacle: PositionBelief::isotropic(0.0, 0.0, var).unwrap(),
            obstacle_radius: s1,
        }
    }

    #[test]
    fn far_cases_vanish() {
        let c = case(50.0, 0.01, 0.3, 0.5);
        let mc = mc_oracle(&c, 1000, 1).unwrap();
        assert_eq!((mc.probability, mc.stderr), (0.0, 0.0));
        assert!(zhu(&c).probability < 1e-100);
        assert!(dutoit(&c).unwrap() < 1e-100);
    }

    #[test]
    fn zhu_flags_coincident_means() {
        let z = zhu(&case(0.0, 0.01, 0.3, 0.5));
        assert!(z.degenerate);
        assert_eq!(z.probability, 0.5);
        let touching = zhu(&case(0.8, 0.01, 0.3, 0.5));
        assert!((touching.probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dutoit_vanishes_with_volume() {
        let mut last = f64::INFINITY;
        for r in [1e-1, 1e-2, 1e-3, 1e-4] {
            let p = dutoit(&case(0.5, 0.05, r, 0.5)).unwrap();
            assert!(p < last);
            last = p;
        }
        assert!(last < 1e-7);
    }

    #[test]
    fn park_symmetric_case() {
        let c = case(0.0, 0.05, 0.3, 0.5);
        let cov = Matrix2::identity() * 0.1;
        let expect = PI * 0.09 * gaussian_density(&Vector2::new(0.3, 0.0), &cov).unwrap();
        assert!((park(&c).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn samples_are_checked_and_seeded() {
        let c = case(0.5, 0.05, 0.3, 0.5);
        assert!(mc_oracle(&c, 99, 0).is_err());
        assert!(lambert_mci(&c, 10, 0).is_err());
        assert_eq!(
            mc_oracle(&c, 5000, 9).unwrap(),
            mc_oracle(&c, 5000, 9).unwrap()
        );
        assert_eq!(
            lambert_mci(&c, 200, 3).unwrap().to_bits(),
            lambert_mci(&c, 200, 3).unwrap().to_bits()
        );
    }

    #[test]
    fn builtins_parse_and_round_trip() {
        let all = builtin_cases().unwrap();
        assert_eq!(all.len(), 3);
        for c in &all {
            assert_eq!(&ComparisonCase::from_json(&c.to_json()).unwrap(), c);
        }
        assert!(builtin_case("builtin-z").is_err());
    }
}
