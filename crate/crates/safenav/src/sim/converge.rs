//! Term counts of the series over fixed layouts and covariance sweeps.

use std::io::Write;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};

use crate::collision::disk_probability;
use crate::error::Result;
use crate::quadform::SeriesConfig;

/// One layout: robot and obstacle radii and the gap between their edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub label: String,
    pub robot_radius: f64,
    pub obstacle_radius: f64,
    /// Centre distance.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub layouts: Vec<Layout>,
    /// Diagonal entries of the combined covariance.
    pub variances: Vec<f64>,
    pub delta: f64,
    /// Timing repeats per query; `0` leaves the time column empty.
    pub repeats: usize,
}

impl Default for ConvergeConfig {
    /// Touching 0.3/0.5 discs pulled apart (A–D), then a fixed centre
    /// distance of 1.1 m with shrinking obstacles (E–H).
    fn default() -> Self {
        let mut layouts = Vec::new();
        for (label, gap) in [("A", 0.0), ("B", 0.2), ("C", 0.4), ("D", 0.8)] {
            layouts.push(Layout {
                label: label.into(),
                robot_radius: 0.3,
                obstacle_radius: 0.5,
                distance: 0.8 + gap,
            });
        }
        for (label, s) in [("E", 0.8), ("F", 0.7), ("G", 0.6), ("H", 0.5)] {
            layouts.push(Layout {
                label: label.into(),
                robot_radius: 0.3,
                obstacle_radius: s,
                distance: 1.1,
            });
        }
        let variances = (0..=14).map(|i| 0.04 + 0.05 * i as f64).collect();
        ConvergeConfig {
            layouts,
            variances,
            delta: 1e-3,
            repeats: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub config: String,
    pub distance: f64,
    pub robot_radius: f64,
    pub obstacle_radius: f64,
    pub variance: f64,
    pub terms: usize,
    pub probability: f64,
    pub bound: f64,
    pub time_s: Option<f64>,
}

pub fn converge_sweep(cfg: &ConvergeConfig) -> Result<Vec<ConvergeRow>> {
    let series = SeriesConfig::with_delta(cfg.delta);
    let mut rows = Vec::new();
    for layout in &cfg.layouts {
        let mean = Vector2::new(layout.distance, 0.0);
        let radius = layout.robot_radius + layout.obstacle_radius;
        for &var in &cfg.variances {
            let cov = Matrix2::identity() * var;
            let r = disk_probability(&mean, &cov, radius, &series)?;
            let time_s = if cfg.repeats == 0 {
                None
            } else {
                let t = Instant::now();
                for _ in 0..cfg.repeats {
                    disk_probability(&mean, &cov, radius, &series)?;
                }
                Some(t.elapsed().as_secs_f64() / cfg.repeats as f64)
            };
            rows.push(ConvergeRow {
                config: layout.label.clone(),
                distance: layout.distance,
                robot_radius: layout.robot_radius,
                obstacle_radius: layout.obstacle_radius,
                variance: var,
                terms: r.terms_used,
                probability: r.value,
                bound: r.error_bound,
                time_s,
            });
        }
    }
    Ok(rows)
}

/// Largest term count per configuration, in layout order.
pub fn worst_case_terms(rows: &[ConvergeRow]) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(c, _)| *c == r.config) {
            Some(entry) => entry.1 = entry.1.max(r.terms),
            None => out.push((r.config.clone(), r.terms)),
        }
    }
    out
}

pub fn write_converge_csv<W: Write>(rows: &[ConvergeRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "config",
        "distance",
        "robot_radius",
        "obstacle_radius",
        "variance",
        "terms",
        "probability",
        "bound",
        "time_s",
    ])?;
    for r in rows {
        wtr.write_record([
            r.config.clone(),
            r.distance.to_string(),
            r.robot_radius.to_string(),
            r.obstacle_radius.to_string(),
            r.variance.to_string(),
            r.terms.to_string(),
            r.probability.to_string(),
            r.bound.to_string(),
            r.time_s.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
