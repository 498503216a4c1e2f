//! Offline obstacle estimation from a recorded scan log.
//!
//! The log is CSV with a header and `timestamp,bearing,range` rows; rows
//! sharing a timestamp form one scan. The robot is taken as stationary at a
//! known pose and the nearest obstacle is tracked.

use std::io::{Read, Write};

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ASSOCIATION_GATE;
use crate::belief::PoseBelief;
use crate::error::{Error, Result};
use crate::obstacle::{
    cluster_scan, pseudo_measurement, ObstacleTracker, PredictionConfig, Ray, Scan, ScanNoise,
};

/// Column names of the estimates CSV.
pub const ESTIMATE_HEADER: [&str; 9] = [
    "timestamp",
    "x",
    "y",
    "cov_xx",
    "cov_xy",
    "cov_yy",
    "vx",
    "vy",
    "measured",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScanLogConfig {
    pub robot_pose: Vector3<f64>,
    pub robot_covariance: Matrix3<f64>,
    pub max_range: f64,
    pub obstacle_radius: f64,
    pub noise: ScanNoise,
    pub prior_variance: f64,
    pub prediction: PredictionConfig,
}

impl Default for ScanLogConfig {
    fn default() -> Self {
        ScanLogConfig {
            robot_pose: Vector3::zeros(),
            robot_covariance: Matrix3::identity() * 1e-9,
            max_range: 3.5,
            obstacle_radius: 0.22,
            noise: ScanNoise::default(),
            prior_variance: 0.1,
            prediction: PredictionConfig::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct LogLine {
    timestamp: f64,
    bearing: f64,
    range: f64,
}

/// One row of the estimates CSV. Velocities are empty until two estimates
/// exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
    pub vx: Option<f64>,
    pub vy: Option<f64>,
    /// False when no cluster matched and the prediction was carried.
    pub measured: bool,
}

/// Parses a scan log into scans ordered by timestamp.
pub fn read_scan_log<R: Read>(r: R, max_range: f64) -> Result<Vec<Scan>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut scans: Vec<Scan> = Vec::new();
    for (i, line) in reader.deserialize::<LogLine>().enumerate() {
        // Header is line 1.
        let line = line.map_err(|e| Error::Parse(format!("scan log line {}: {e}", i + 2)))?;
        if !line.timestamp.is_finite() || !line.bearing.is_finite() || !line.range.is_finite() {
            return Err(Error::Parse(format!(
                "scan log line {}: non-finite value",
                i + 2
            )));
        }
        let ray = Ray {
            bearing: line.bearing,
            range: line.range.min(max_range),
        };
        match scans.last_mut() {
            Some(s) if s.timestamp == line.timestamp => s.rays.push(ray),
            Some(s) if line.timestamp < s.timestamp => {
                return Err(Error::Parse(format!(
                    "scan log line {}: timestamps must not decrease",
                    i + 2
                )))
            }
            _ => scans.push(Scan {
                rays: vec![ray],
                max_range,
                timestamp: line.timestamp,
            }),
        }
    }
    for s in &mut scans {
        s.rays.sort_by(|a, b| a.bearing.total_cmp(&b.bearing));
        s.validate()
            .map_err(|e| Error::Validation(vec![format!("scan at t={}: {e}", s.timestamp)]))?;
    }
    Ok(scans)
}

/// Common spacing of the scan timestamps.
fn scan_period(scans: &[Scan]) -> Result<f64> {
    if scans.len() < 2 {
        return Ok(1.0);
    }
    let dt = scans[1].timestamp - scans[0].timestamp;
    for w in scans.windows(2) {
        let d = w[1].timestamp - w[0].timestamp;
        if (d - dt).abs() > 1e-6 * dt.abs().max(1.0) {
            return Err(Error::Validation(vec![format!(
                "scan timestamps must be evenly spaced: {dt} then {d} at t={}",
                w[1].timestamp
            )]));
        }
    }
    Ok(dt)
}

/// Tracks the nearest obstacle through the log, one estimate per scan from
/// the first scan with a return onwards.
pub fn estimate_scan_log(scans: &[Scan], cfg: &ScanLogConfig) -> Result<Vec<EstimateRow>> {
    let robot = PoseBelief::new(cfg.robot_pose, cfg.robot_covariance)?;
    let dt = scan_period(scans)?;
    let mut tracker = ObstacleTracker::new(
        cfg.obstacle_radius,
        Matrix2::identity() * cfg.prior_variance,
        cfg.noise,
        dt,
    );
    tracker.prediction = cfg.prediction;
    let mut rows = Vec::new();
    for scan in scans {
        let clusters = cluster_scan(scan);
        let anchor = tracker.predicted_mean().unwrap_or(robot.mean.xy());
        let mut best: Option<(f64, &Scan)> = None;
        for c in &clusters {
            let d = (pseudo_measurement(&robot, c, cfg.obstacle_radius, &cfg.noise)?.mean - anchor)
                .norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        let has_track = !tracker.history.is_empty();
        let measured = match best {
            Some((d, c)) if !has_track || d < ASSOCIATION_GATE => {
                tracker.update(&robot, c)?;
                true
            }
            _ if has_track => {
                tracker.coast();
                false
            }
            _ => continue,
        };
        let est = tracker.history[tracker.history.len() - 1];
        let (vx, vy) = match tracker.track() {
            Ok(t) => (t.vx.last().copied(), t.vy.last().copied()),
            Err(_) => (None, None),
        };
        rows.push(EstimateRow {
            timestamp: scan.timestamp,
            x: est.mean.x,
            y: est.mean.y,
            cov_xx: est.covariance[(0, 0)],
            cov_xy: est.covariance[(0, 1)],
            cov_yy: est.covariance[(1, 1)],
            vx,
            vy,
            measured,
        });
    }
    Ok(rows)
}

pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], w: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(ESTIMATE_HEADER)?;
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}
