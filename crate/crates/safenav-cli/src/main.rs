use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix2, Vector2};

use safenav::baselines::{
    builtin_case, compare, render_table, write_csv, CompareConfig, ComparisonCase,
};
use safenav::belief::Control;
use safenav::collision::{
    collision_probability, is_epsilon_safe, Body, CollisionQuery, PositionBelief,
};
use safenav::obstacle::ScanNoise;
use safenav::quadform::DEFAULT_DELTA;
use safenav::sim::{
    converge_sweep, estimate_scan_log, initial_plan, load_scenario, read_scan_log, run_scenario,
    worst_case_terms, write_converge_csv, write_estimates_csv, write_log_to, ConvergeConfig,
    ScanLogConfig,
};
use safenav::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "safenav",
    version,
    about = "Exact Gaussian collision probabilities and safe belief-space navigation"
)]
struct Cli {
    /// Seed for every random draw; scenarios fall back to their own seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Series truncation error target.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Write the CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collision probability of two Gaussian discs.
    Collide(CollideArgs),
    /// Series term counts over layouts and covariances.
    Converge(ConvergeArgs),
    /// Compare the exact method with the baselines on one case.
    Compare(CompareArgs),
    /// Obstacle estimates from a scan log.
    Estimate(EstimateArgs),
    /// Plan once from a scenario's initial state.
    Plan(ScenarioArgs),
    /// Run a scenario in closed loop.
    Run(ScenarioArgs),
}

#[derive(Debug, Args)]
struct CollideArgs {
    /// Comparison-case JSON file; overrides the geometry flags.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0])]
    robot: Vec<f64>,
    /// Robot covariance as xx,xy,yy.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.0, 0.01])]
    robot_cov: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    robot_radius: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.0])]
    obstacle: Vec<f64>,
    /// Obstacle covariance as xx,xy,yy.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.0, 0.01])]
    obstacle_cov: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    obstacle_radius: f64,
    #[arg(long, default_value_t = 0.99)]
    epsilon: f64,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    /// Timing repeats per query; 0 leaves the time column empty.
    #[arg(long, default_value_t = 0)]
    repeats: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// A case file, or builtin-a, builtin-b, builtin-c.
    #[arg(long, default_value = "builtin-a")]
    case: String,
    #[arg(long, default_value_t = 0.09)]
    threshold: f64,
    /// Samples for the Monte Carlo methods.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Timing repeats; 0 disables timing.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// CSV with a header and timestamp,bearing,range rows.
    log: PathBuf,
    /// Robot pose as x,y,theta.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    robot: Vec<f64>,
    #[arg(long, default_value_t = 3.5)]
    max_range: f64,
    #[arg(long, default_value_t = 0.22)]
    radius: f64,
    #[arg(long, default_value_t = 0.1)]
    range_sd: f64,
    #[arg(long, default_value_t = 1e-4)]
    bearing_var: f64,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    scenario: PathBuf,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn arity(flag: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidInput(format!(
            "--{flag} takes {n} comma-separated values, got {}",
            v.len()
        )));
    }
    Ok(())
}

/// Reads a user-supplied input; a missing or unreadable file is a usage error.
fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn belief(mean: &[f64], cov: &[f64]) -> Result<PositionBelief> {
    PositionBelief::new(
        Vector2::new(mean[0], mean[1]),
        Matrix2::new(cov[0], cov[1], cov[1], cov[2]),
    )
}

fn collide(cli: &Cli, a: &CollideArgs) -> Result<()> {
    arity("robot", &a.robot, 2)?;
    arity("robot-cov", &a.robot_cov, 3)?;
    arity("obstacle", &a.obstacle, 2)?;
    arity("obstacle-cov", &a.obstacle_cov, 3)?;
    let case = match &a.file {
        Some(p) => ComparisonCase::from_json(&read_input(p)?)?,
        None => ComparisonCase {
            label: "flags".into(),
            robot: belief(&a.robot, &a.robot_cov)?,
            robot_radius: a.robot_radius,
            obstacle: belief(&a.obstacle, &a.obstacle_cov)?,
            obstacle_radius: a.obstacle_radius,
        },
    };
    let query = CollisionQuery {
        robot: case.robot,
        robot_body: Body::sphere(case.robot_radius)?,
        obstacle: case.obstacle,
        obstacle_body: Body::sphere(case.obstacle_radius)?,
        delta: cli.delta.unwrap_or(DEFAULT_DELTA),
        epsilon: a.epsilon,
    };
    let p = collision_probability(&query)?;
    let mut w = output(&cli.out)?;
    writeln!(w, "probability {:.10}", p.value)?;
    writeln!(w, "bound {:.3e}", p.error_bound)?;
    writeln!(w, "terms {}", p.terms_used + 1)?;
    writeln!(w, "epsilon_safe {}", is_epsilon_safe(&p, a.epsilon))?;
    Ok(())
}

fn converge(cli: &Cli, a: &ConvergeArgs) -> Result<()> {
    let cfg = ConvergeConfig {
        delta: cli.delta.unwrap_or(1e-3),
        repeats: a.repeats,
        ..ConvergeConfig::default()
    };
    let rows = converge_sweep(&cfg)?;
    if cli.out.is_some() {
        for (label, terms) in worst_case_terms(&rows) {
            println!("{label}: {terms} terms");
        }
    }
    write_converge_csv(&rows, output(&cli.out)?)
}

fn load_case(name: &str) -> Result<ComparisonCase> {
    if name.starts_with("builtin-") {
        builtin_case(name)
    } else {
        ComparisonCase::from_json(&read_input(Path::new(name))?)
    }
}

fn compare_cmd(cli: &Cli, a: &CompareArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let defaults = CompareConfig::default();
    let cfg = CompareConfig {
        threshold: a.threshold,
        repeats: a.repeats,
        samples: a.samples,
        seed: cli.seed.unwrap_or(defaults.seed),
        delta: cli.delta.unwrap_or(defaults.delta),
    };
    let rows = compare(&case, &cfg)?;
    print!("{}", render_table(&case, &rows));
    if cli.out.is_none() {
        println!();
    }
    write_csv(&rows, output(&cli.out)?)
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<()> {
    arity("robot", &a.robot, 3)?;
    let scans = read_scan_log(read_input(&a.log)?.as_bytes(), a.max_range)?;
    let cfg = ScanLogConfig {
        robot_pose: nalgebra::Vector3::new(a.robot[0], a.robot[1], a.robot[2]),
        max_range: a.max_range,
        obstacle_radius: a.radius,
        noise: ScanNoise {
            range_var: a.range_sd * a.range_sd,
            bearing_var: a.bearing_var,
        },
        ..ScanLogConfig::default()
    };
    write_estimates_csv(&estimate_scan_log(&scans, &cfg)?, output(&cli.out)?)
}

fn scenario(cli: &Cli, path: &Path) -> Result<safenav::sim::Scenario> {
    if let Err(e) = std::fs::metadata(path) {
        return Err(Error::InvalidInput(format!("{}: {e}", path.display())));
    }
    let mut s = load_scenario(path)?;
    if let Some(d) = cli.delta {
        s.delta = d;
        s.validate()?;
    }
    Ok(s)
}

fn plan_cmd(cli: &Cli, a: &ScenarioArgs) -> Result<()> {
    let s = scenario(cli, &a.scenario)?;
    let r = initial_plan(&s)?;
    eprintln!(
        "feasible {} exhaustive {} cost {:.6}",
        r.feasible, r.exhaustive, r.cost
    );
    let mut w = csv::Writer::from_writer(output(&cli.out)?);
    w.write_record([
        "step", "control", "x", "y", "theta", "cov_xx", "cov_xy", "cov_yy", "cov_tt",
    ])?;
    for (l, (u, b)) in r.controls.iter().zip(&r.beliefs).enumerate() {
        let control = match *u {
            Control::Velocity { v, omega } => format!("v={v} omega={omega}"),
            Control::Odometry { rot1, trans, rot2 } => {
                format!("rot1={rot1} trans={trans} rot2={rot2}")
            }
        };
        let c = &b.covariance;
        let mut rec = vec![(l + 1).to_string(), control];
        rec.extend(
            [
                b.mean.x,
                b.mean.y,
                b.mean.z,
                c[(0, 0)],
                c[(0, 1)],
                c[(1, 1)],
                c[(2, 2)],
            ]
            .iter()
            .map(f64::to_string),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn run_cmd(cli: &Cli, a: &ScenarioArgs) -> Result<()> {
    let s = scenario(cli, &a.scenario)?;
    let log = run_scenario(&s, cli.seed.unwrap_or(s.seed))?;
    write_log_to(&log, output(&cli.out)?)?;
    eprint!("{}", log.render_summary());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(d) = cli.delta {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidInput(format!("--delta {d} must be positive")));
        }
    }
    match &cli.command {
        Command::Collide(a) => collide(cli, a),
        Command::Converge(a) => converge(cli, a),
        Command::Compare(a) => compare_cmd(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::Plan(a) => plan_cmd(cli, a),
        Command::Run(a) => run_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
