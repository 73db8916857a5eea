//! Command-level behavior: fixtures, artifact emission, exit codes.

use rmpc_cli::bench::{self, BenchConfig};
use rmpc_cli::commands;
use rmpc_core::apf_planner::total_potential;
use rmpc_core::scenario::load_scenario;
use rmpc_core::sim_engine::{presets, ControllerChoice};
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rmpc_cli_test_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn rmpc_bin() -> PathBuf {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.pop();
    p.pop();
    p.join("target").join("debug").join("rmpc")
}

#[test]
fn bundled_fixtures_match_the_presets() {
    let cases = [
        ("normal.scn", presets::normal::<f64>()),
        ("aggressive.scn", presets::aggressive::<f64>()),
        ("unexpected.scn", presets::unexpected::<f64>()),
    ];
    for (file, preset) in cases {
        let spec = load_scenario(&fixture(file)).unwrap();
        assert_eq!(spec, preset, "{file} must mirror the built-in scenario");
    }
    // the normal fixture announces one static obstacle and turns slippery
    let normal = load_scenario(&fixture("normal.scn")).unwrap();
    assert_eq!(normal.obstacles.len(), 1);
    assert_eq!(normal.adhesion.len(), 2);
    assert_eq!(normal.mu_at(0.5), 1.0);
    assert_eq!(normal.mu_at(1.0), 0.6);
}

#[test]
fn potential_map_matches_point_queries() {
    let out = temp_dir("map");
    commands::potential_map(&fixture("normal.scn"), 40, &out).unwrap();
    let csv = std::fs::read_to_string(out.join("normal_potential.csv")).unwrap();
    let spec = load_scenario(&fixture("normal.scn")).unwrap();
    let scene = rmpc_core::apf_planner::PotentialScene {
        obstacles: spec
            .obstacles
            .iter()
            .map(|o| match o {
                rmpc_core::sim_engine::WorldObstacle::Static(d) => *d,
                _ => unreachable!(),
            })
            .collect(),
        road: spec.road.clone(),
    };
    // rebuild the same grid and point-query it at its exact nodes
    let x_hi = spec.ego.x + spec.duration * spec.ego.v_x;
    let grid = rmpc_core::apf_planner::potential_grid(
        &scene,
        (spec.ego.x, x_hi),
        40,
        20,
        spec.ego.v_x,
        commands::MAP_CAP,
    )
    .unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 40 * 20);
    let mut checked = 0;
    for (k, line) in rows.iter().enumerate().step_by(37) {
        let cols: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        let (j, i) = (k / 40, k % 40);
        let direct = total_potential(&scene, grid.xs[i], grid.ys[j], spec.ego.v_x)
            .map(|v| v.min(commands::MAP_CAP))
            .unwrap_or(commands::MAP_CAP);
        assert_eq!(grid.values[j][i], direct, "grid matches the point query bit-exactly");
        let expect: f64 = format!("{direct:.11e}").parse().unwrap();
        assert_eq!(cols[2], expect, "CSV carries the grid value at 12 digits");
        checked += 1;
    }
    assert!(checked > 10);
    assert!(out.join("normal_potential.svg").exists());
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn plan_command_emits_path_artifacts() {
    let out = temp_dir("plan");
    commands::plan(&fixture("normal.scn"), &out).unwrap();
    let csv = std::fs::read_to_string(out.join("normal_plan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1501);
    let last: Vec<f64> = rows.last().unwrap().split(',').map(|t| t.parse().unwrap()).collect();
    assert!(
        (last[1] - 3.5).abs() < 0.2,
        "planned terminal y = {} should reach the adjacent lane",
        last[1]
    );
    assert!(out.join("normal_plan.svg").exists());
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn synthesize_and_simulate_via_binary() {
    let bin = rmpc_bin();
    if !bin.exists() {
        panic!("rmpc binary not built; run cargo build first");
    }
    let out = temp_dir("simulate");
    let lut = out.join("table.lut");
    let status = Command::new(&bin)
        .args([
            "synthesize",
            "--scenario",
            fixture("normal.scn").to_str().unwrap(),
            "--out",
            lut.to_str().unwrap(),
            "--entries",
            "4",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let table = rmpc_core::lmi_rmpc::LookupTable::load(&lut).unwrap();
    assert_eq!(table.len(), 4);
    assert_eq!(table.state_dim(), 6);

    let status = Command::new(&bin)
        .args([
            "simulate",
            "--scenario",
            fixture("normal.scn").to_str().unwrap(),
            "--controller",
            "proposed",
            "--table",
            lut.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success(), "clean run must exit 0");
    let log = std::fs::read_to_string(out.join("normal_proposed.csv")).unwrap();
    assert!(log.starts_with("t,X,Y,psi,vy,psidot,"));
    assert_eq!(log.lines().count(), 1002);
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn missing_table_is_a_usage_error() {
    let bin = rmpc_bin();
    let out = temp_dir("usage");
    let status = Command::new(&bin)
        .args([
            "simulate",
            "--scenario",
            fixture("normal.scn").to_str().unwrap(),
            "--controller",
            "proposed",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn broken_scenario_exits_with_parse_class() {
    let bin = rmpc_bin();
    let out = temp_dir("parse");
    let bad = out.join("bad.scn");
    std::fs::write(&bad, "[road]\nnot_a_key = 1\n").unwrap();
    let status = Command::new(&bin)
        .args([
            "plan",
            "--scenario",
            bad.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "parse failures use exit class 2");
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn benchmark_runs_a_reduced_grid() {
    // one fast controller on all three scenarios with a shallow table
    let cfg = BenchConfig {
        controllers: vec![ControllerChoice::Proposed],
        seed: 7,
        mu_override: None,
        kappa_override: None,
        parallel: true,
        table_entries: 4,
    };
    let report = bench::run_benchmark(&cfg).unwrap();
    assert_eq!(report.runs.len(), 3, "row count = controllers x scenarios");
    assert_eq!(report.degraded_runs(), 0);
    let out = temp_dir("bench");
    bench::emit_artifacts(&report, &out).unwrap();
    assert!(out.join("summary.txt").exists());
    assert!(out.join("summary.csv").exists());
    assert!(out.join("normal_proposed.csv").exists());
    assert!(out.join("normal_delta_f.svg").exists());
    assert!(out.join("aggressive_e_y.svg").exists());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    std::fs::remove_dir_all(&out).ok();
}
