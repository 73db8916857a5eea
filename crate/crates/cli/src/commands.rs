//! Subcommand implementations and the exit-code contract.
//!
//! Exit codes enumerate failure classes:
//! 0 success, 2 scenario parse/validation, 3 synthesis or solver
//! failure, 4 runs finished but raised degraded-mode flags, 5 io,
//! 1 anything else (clap reports its own usage errors as 2).

use crate::bench::{self, BenchConfig, BenchError};
use crate::svg;
use rmpc_core::apf_planner::{plan_trajectory, potential_grid, CandidateSetSpec, EgoPlanState, PotentialScene};
use rmpc_core::lmi_rmpc::LookupTable;
use rmpc_core::scenario::{load_scenario, ScenarioError};
use rmpc_core::sim_engine::{compute_metrics, log_to_csv, run_closed_loop, ControllerChoice, MuStep, ScenarioSpec, WorldObstacle};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CmdError {
    Scenario(ScenarioError),
    Bench(BenchError),
    Table(String),
    Degraded(String),
    Io(std::io::Error),
    Usage(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Scenario(e) => write!(f, "{e}"),
            Self::Bench(e) => write!(f, "{e}"),
            Self::Table(m) => write!(f, "{m}"),
            Self::Degraded(m) => write!(f, "{m}"),
            Self::Io(e) => write!(f, "io error: {e}"),
            Self::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Scenario(_) | Self::Table(_) => 2,
            Self::Bench(_) => 3,
            Self::Degraded(_) => 4,
            Self::Io(_) => 5,
        }
    }
}

impl From<ScenarioError> for CmdError {
    fn from(e: ScenarioError) -> Self {
        Self::Scenario(e)
    }
}

impl From<BenchError> for CmdError {
    fn from(e: BenchError) -> Self {
        Self::Bench(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

fn load_with_overrides(
    path: &Path,
    kappa: Option<f64>,
    mu: Option<f64>,
) -> Result<ScenarioSpec<f64>, CmdError> {
    let mut spec = load_scenario(path)?;
    if let Some(k) = kappa {
        spec.kappa = k;
    }
    if let Some(m) = mu {
        spec.adhesion = vec![MuStep { time: 0.0, mu: m }];
    }
    spec.validate()
        .map_err(|e| CmdError::Scenario(ScenarioError::Validation(e.to_string())))?;
    Ok(spec)
}

/// `synthesize`: build a lookup table for a scenario's vehicle and store
/// it in the flat-file format.
pub fn synthesize(
    scenario: &Path,
    out: &Path,
    kappa: Option<f64>,
    no_am: bool,
    entries: usize,
    shrink: f64,
) -> Result<(), CmdError> {
    let spec = load_with_overrides(scenario, kappa, None)?;
    let settings = bench::solver_settings();
    let table = if no_am {
        bench::synthesize_no_am(&spec, entries, shrink, &settings)?
    } else {
        bench::synthesize_augmented(&spec, entries, shrink, &settings)?
    };
    if let Some(k) = table.meta.truncated_at {
        eprintln!("warning: synthesis went infeasible at entry {k}; table truncated to {} entries", table.len());
    }
    table
        .save(out)
        .map_err(|e| CmdError::Table(e.to_string()))?;
    println!(
        "synthesized {} entries (dim {}) -> {}",
        table.len(),
        table.state_dim(),
        out.display()
    );
    Ok(())
}

/// `simulate`: one closed-loop run, CSV log plus metrics.
pub fn simulate(
    scenario: &Path,
    controller: Option<ControllerChoice>,
    table_path: Option<&Path>,
    out_dir: &Path,
    kappa: Option<f64>,
    mu: Option<f64>,
) -> Result<(), CmdError> {
    let spec = load_with_overrides(scenario, kappa, mu)?;
    let choice = controller.unwrap_or(spec.controller);
    let settings = bench::solver_settings();

    let table = match table_path {
        Some(p) => Some(LookupTable::load(p).map_err(|e| CmdError::Table(e.to_string()))?),
        None => None,
    };
    let (t6, t4) = match table.as_ref() {
        Some(t) if t.state_dim() == 6 => (Some(t), None),
        Some(t) => (None, Some(t)),
        None => (None, None),
    };
    // the online baseline needs no table; everything else does
    if !matches!(choice, ControllerChoice::Online) && table.is_none() {
        return Err(CmdError::Usage(format!(
            "controller '{}' needs --table",
            choice.as_str()
        )));
    }
    let mut ctrl = bench::make_controller(choice, &spec, t6, t4, &settings)?;
    let log = run_closed_loop(&spec, ctrl.as_mut()).map_err(BenchError::Sim)?;
    let metrics = compute_metrics(&log, rmpc_core::lmi_rmpc::RmpcWeights::<f64>::default_augmented().du_max);

    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}_{}.csv", spec.name, choice.as_str()));
    std::fs::write(&csv_path, log_to_csv(&log))?;
    let mut m = String::new();
    let _ = writeln!(m, "scenario: {}", spec.name);
    let _ = writeln!(m, "controller: {}", choice.as_str());
    let _ = writeln!(m, "rms_e_y_m: {}", metrics.rms_e_y);
    let _ = writeln!(m, "max_abs_e_y_m: {}", metrics.max_abs_e_y);
    let _ = writeln!(m, "max_abs_du_rad: {}", metrics.max_abs_du);
    let _ = writeln!(m, "steering_tv_rad: {}", metrics.steering_tv);
    let _ = writeln!(m, "min_clearance_m: {}", metrics.min_clearance);
    let _ = writeln!(m, "mean_step_ms: {}", metrics.mean_step_ms);
    let _ = writeln!(m, "max_step_ms: {}", metrics.max_step_ms);
    let _ = writeln!(m, "violations: {}", metrics.violation_count);
    let _ = writeln!(m, "plan_epochs: {}", log.plan_epochs);
    std::fs::write(out_dir.join(format!("{}_{}_metrics.txt", spec.name, choice.as_str())), &m)?;
    print!("{m}");
    println!("log -> {}", csv_path.display());

    if log.records.iter().any(|r| r.degraded) {
        return Err(CmdError::Degraded(
            "run finished with degraded-mode steps".to_string(),
        ));
    }
    Ok(())
}

/// `benchmark`: all requested controllers across the bundled scenarios.
pub fn benchmark(
    out_dir: &Path,
    controllers: Vec<ControllerChoice>,
    seed: u64,
    mu: Option<f64>,
    kappa: Option<f64>,
    serial: bool,
    entries: usize,
) -> Result<(), CmdError> {
    let cfg = BenchConfig {
        controllers,
        seed,
        mu_override: mu,
        kappa_override: kappa,
        parallel: !serial,
        table_entries: entries,
    };
    let report = bench::run_benchmark(&cfg)?;
    bench::emit_artifacts(&report, out_dir)?;
    print!("{}", bench::summary_text(&report));
    println!("artifacts -> {}", out_dir.display());
    let degraded = report.degraded_runs();
    if degraded > 0 {
        return Err(CmdError::Degraded(format!(
            "{degraded} run(s) raised degraded-mode flags"
        )));
    }
    Ok(())
}

/// Scene snapshot with every obstacle announced, used by the map and
/// plan commands.
fn full_scene(spec: &ScenarioSpec<f64>) -> PotentialScene<f64> {
    let obstacles = spec
        .obstacles
        .iter()
        .map(|ob| match ob {
            WorldObstacle::Static(d) => *d,
            WorldObstacle::IdmVehicle {
                lane_y,
                initial,
                params,
                width,
                amp,
                shape_c,
            } => rmpc_core::apf_planner::ObstacleDesc {
                x_obs: initial.x - params.length / 2.0,
                y_obs: *lane_y,
                x_dot_obs: initial.v,
                length_obs: params.length,
                width_obs: *width,
                amp: *amp,
                shape_c: *shape_c,
            },
            WorldObstacle::Pedestrian(p) => rmpc_core::apf_planner::ObstacleDesc {
                x_obs: p.x,
                y_obs: p.y_at(p.entry_time),
                x_dot_obs: 0.0,
                length_obs: p.length,
                width_obs: p.width,
                amp: p.amp,
                shape_c: p.shape_c,
            },
        })
        .collect();
    PotentialScene {
        obstacles,
        road: spec.road.clone(),
    }
}

/// `plan`: one planner invocation with every obstacle announced.
pub fn plan(scenario: &Path, out_dir: &Path) -> Result<(), CmdError> {
    let spec = load_with_overrides(scenario, None, None)?;
    let scene = full_scene(&spec);
    let ego = EgoPlanState {
        x: spec.ego.x,
        y: spec.ego.y,
        v_x: spec.ego.v_x,
    };
    let commanded = spec
        .road
        .lane_marks
        .iter()
        .copied()
        .min_by(|a, b| (a - ego.y).abs().partial_cmp(&(b - ego.y).abs()).unwrap())
        .unwrap_or(ego.y);
    let cands = CandidateSetSpec::from_road(&spec.road, commanded);
    let traj = plan_trajectory(&scene, &ego, &spec.planner, &cands)
        .map_err(|e| CmdError::Bench(BenchError::Sim(rmpc_core::sim_engine::SimError::Invalid(e.to_string()))))?;

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("x,y,psi_ref,psi_dot_ref\n");
    for s in &traj.samples {
        let _ = writeln!(
            csv,
            "{:.11e},{:.11e},{:.11e},{:.11e}",
            s.x_glo, s.y_glo, s.psi_ref, s.psi_dot_ref
        );
    }
    std::fs::write(out_dir.join(format!("{}_plan.csv", spec.name)), csv)?;

    let pts: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.x_glo, s.y_glo)).collect();
    let series = [svg::Series {
        name: "planned path",
        points: &pts,
    }];
    let chart = svg::line_chart(
        &format!(
            "{}: planned path (target y = {:.2} m, cost {:.3})",
            spec.name, traj.target_y, traj.cost.total
        ),
        "x [m]",
        "y [m]",
        &series,
    );
    std::fs::write(out_dir.join(format!("{}_plan.svg", spec.name)), chart)?;
    println!(
        "plan: target y = {} m, maneuver = {} m, cost = {} (tracking {}, input {}, potential {})",
        traj.target_y,
        traj.maneuver_length,
        traj.cost.total,
        traj.cost.tracking,
        traj.cost.input,
        traj.cost.potential
    );
    println!("artifacts -> {}", out_dir.display());
    Ok(())
}

/// Saturation cap for out-of-road cells of the potential map.
pub const MAP_CAP: f64 = 1e6;

/// `potential-map`: grid dump of the field as CSV plus an SVG heatmap.
pub fn potential_map(scenario: &Path, res: usize, out_dir: &Path) -> Result<(), CmdError> {
    if res < 10 {
        return Err(CmdError::Usage("--res must be at least 10".to_string()));
    }
    let spec = load_with_overrides(scenario, None, None)?;
    let scene = full_scene(&spec);
    let x_hi = spec.ego.x + spec.duration * spec.ego.v_x;
    let grid = potential_grid(
        &scene,
        (spec.ego.x, x_hi),
        res,
        (res / 2).max(10),
        spec.ego.v_x,
        MAP_CAP,
    )
    .map_err(|e| CmdError::Scenario(ScenarioError::Validation(e.to_string())))?;

    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("x,y,J\n");
    for (j, y) in grid.ys.iter().enumerate() {
        for (i, x) in grid.xs.iter().enumerate() {
            let _ = writeln!(csv, "{:.11e},{:.11e},{:.11e}", x, y, grid.values[j][i]);
        }
    }
    std::fs::write(out_dir.join(format!("{}_potential.csv", spec.name)), csv)?;
    let chart = svg::heatmap(
        &format!("{}: potential field", spec.name),
        &grid.xs,
        &grid.ys,
        &grid.values,
        &spec.road.lane_marks,
    );
    std::fs::write(out_dir.join(format!("{}_potential.svg", spec.name)), chart)?;
    println!("potential map ({res} x {}) -> {}", (res / 2).max(10), out_dir.display());
    Ok(())
}

/// Writes the bundled scenario fixtures next to an output directory so
/// `simulate` has files to start from.
pub fn emit_fixtures(out_dir: &Path) -> Result<Vec<PathBuf>, CmdError> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for spec in bench::bundled_scenarios() {
        let path = out_dir.join(format!("{}.scn", spec.name));
        std::fs::write(&path, rmpc_core::scenario::write_scenario(&spec))?;
        paths.push(path);
    }
    Ok(paths)
}
