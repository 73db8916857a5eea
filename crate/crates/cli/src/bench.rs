//! Controller construction, table synthesis, and the four-controller
//! benchmark across the bundled scenarios.

use crate::svg::{self, Series};
use rmpc_core::lmi_rmpc::{
    build_offline_table, synthesis_vertex_set, LateralController, LookupTable,
    OfflineNoAmController, OfflineRmpcController, OffsetOfflineController, OnlineRmpcController,
    RmpcError, RmpcWeights, VertexSet, REFERENCE_FORGETTING,
};
use rmpc_core::num::lit;
use rmpc_core::sdp::SdpSettings;
use rmpc_core::sim_engine::{
    compute_metrics, log_to_csv, presets, run_closed_loop, ControllerChoice, Metrics,
    ScenarioSpec, SimError, SimLog,
};
use rmpc_core::vehicle_model::{
    continuous_error_dynamics, discretize, error_polytope_vertices, extend_model,
    polytope_vertices, ChassisParams, ModelError, UncertaintyBox,
};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] RmpcError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("table mismatch: {0}")]
    TableMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Default table depth and shrink ratio of the offline synthesis.
pub const TABLE_ENTRIES: usize = 30;
pub const TABLE_SHRINK: f64 = 0.85;

/// Seed state covering a 1 m lateral offset with mild heading error.
pub fn seed_augmented() -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.1, 0.0, 0.0, 0.05])
}

pub fn seed_error_only() -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.1, 0.0])
}

/// SDP settings honoring the `RMPC_SDP_TOL` override.
pub fn solver_settings() -> SdpSettings<f64> {
    let mut settings = SdpSettings::default();
    if let Ok(v) = std::env::var("RMPC_SDP_TOL") {
        if let Ok(tol) = v.parse::<f64>() {
            if tol > 0.0 {
                settings.gap_tol = tol;
            }
        }
    }
    settings
}

pub fn vertices_augmented(
    chassis: &ChassisParams<f64>,
    kappa: f64,
    ts: f64,
) -> Result<VertexSet<f64>, BenchError> {
    let ubox = UncertaintyBox::new(kappa, chassis.c_f, chassis.c_r)?;
    let poly = polytope_vertices(chassis, &ubox, ts)?;
    Ok(synthesis_vertex_set(&poly, lit(REFERENCE_FORGETTING)))
}

pub fn vertices_error_only(
    chassis: &ChassisParams<f64>,
    kappa: f64,
    ts: f64,
) -> Result<VertexSet<f64>, BenchError> {
    let ubox = UncertaintyBox::new(kappa, chassis.c_f, chassis.c_r)?;
    let models = error_polytope_vertices(chassis, &ubox, ts)?;
    Ok(VertexSet::from_error_models(&models))
}

/// Synthesizes the augmented lookup table for a scenario's chassis.
pub fn synthesize_augmented(
    spec: &ScenarioSpec<f64>,
    entries: usize,
    shrink: f64,
    settings: &SdpSettings<f64>,
) -> Result<LookupTable<f64>, BenchError> {
    let vs = vertices_augmented(&spec.chassis, spec.kappa, spec.ts)?;
    let w = RmpcWeights::default_augmented();
    Ok(build_offline_table(
        &seed_augmented(),
        entries,
        &vs,
        &w,
        shrink,
        spec.ts,
        settings,
    )?)
}

/// Synthesizes the 4-state table for the baseline without the augmented
/// model.
pub fn synthesize_no_am(
    spec: &ScenarioSpec<f64>,
    entries: usize,
    shrink: f64,
    settings: &SdpSettings<f64>,
) -> Result<LookupTable<f64>, BenchError> {
    let vs = vertices_error_only(&spec.chassis, spec.kappa, spec.ts)?;
    let w = RmpcWeights::default_error_only();
    Ok(build_offline_table(
        &seed_error_only(),
        entries,
        &vs,
        &w,
        shrink,
        spec.ts,
        settings,
    )?)
}

/// Builds the controller for one run. Table-based controllers check the
/// table dimension and sampling time against the scenario.
pub fn make_controller(
    choice: ControllerChoice,
    spec: &ScenarioSpec<f64>,
    table6: Option<&LookupTable<f64>>,
    table4: Option<&LookupTable<f64>>,
    settings: &SdpSettings<f64>,
) -> Result<Box<dyn LateralController<f64>>, BenchError> {
    let weights = RmpcWeights::<f64>::default_augmented();
    let need6 = || -> Result<LookupTable<f64>, BenchError> {
        let t = table6
            .ok_or_else(|| BenchError::TableMismatch("augmented table required".to_string()))?;
        if t.state_dim() != 6 {
            return Err(BenchError::TableMismatch(format!(
                "controller needs a 6-state table, file has dim {}",
                t.state_dim()
            )));
        }
        if (t.meta.ts - spec.ts).abs() > 1e-12 {
            return Err(BenchError::TableMismatch(format!(
                "table synthesized at ts = {}, scenario runs at ts = {}",
                t.meta.ts, spec.ts
            )));
        }
        Ok(t.clone())
    };
    match choice {
        ControllerChoice::Proposed => Ok(Box::new(OfflineRmpcController::new(
            need6()?,
            weights.du_max,
        ))),
        ControllerChoice::OffsetOffline => {
            let (a_c, b_c, e_c) = continuous_error_dynamics(&spec.chassis)?;
            let d = discretize(&a_c, &b_c, &e_c, spec.ts);
            let (a_ext, b_ext, e_ext) = extend_model(&d);
            Ok(Box::new(OffsetOfflineController::new(
                need6()?,
                &a_ext,
                &b_ext,
                &e_ext,
                weights.du_max,
            )))
        }
        ControllerChoice::Online => {
            let vs = vertices_augmented(&spec.chassis, spec.kappa, spec.ts)?;
            Ok(Box::new(OnlineRmpcController::new(
                vs,
                weights,
                settings.clone(),
            )))
        }
        ControllerChoice::OfflineNoAm => {
            let t = table4
                .ok_or_else(|| BenchError::TableMismatch("4-state table required".to_string()))?;
            if t.state_dim() != 4 {
                return Err(BenchError::TableMismatch(format!(
                    "baseline needs a 4-state table, file has dim {}",
                    t.state_dim()
                )));
            }
            Ok(Box::new(OfflineNoAmController::new(t.clone())))
        }
    }
}

/// One benchmark run result.
pub struct BenchRun {
    pub scenario: String,
    pub controller: ControllerChoice,
    pub outcome: Result<(SimLog<f64>, Metrics<f64>), String>,
}

/// Per-controller metrics across the bundled scenarios plus the timing
/// table.
pub struct BenchReport {
    pub runs: Vec<BenchRun>,
    pub du_bound: f64,
}

impl BenchReport {
    pub fn degraded_runs(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| match &r.outcome {
                Ok((log, _)) => log.records.iter().any(|rec| rec.degraded),
                Err(_) => true,
            })
            .count()
    }
}

pub struct BenchConfig {
    pub controllers: Vec<ControllerChoice>,
    pub seed: u64,
    pub mu_override: Option<f64>,
    pub kappa_override: Option<f64>,
    pub parallel: bool,
    pub table_entries: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            controllers: ControllerChoice::ALL.to_vec(),
            seed: 42,
            mu_override: None,
            kappa_override: None,
            parallel: true,
            table_entries: TABLE_ENTRIES,
        }
    }
}

pub fn bundled_scenarios() -> Vec<ScenarioSpec<f64>> {
    vec![presets::normal(), presets::aggressive(), presets::unexpected()]
}

fn apply_overrides(spec: &mut ScenarioSpec<f64>, cfg: &BenchConfig) {
    spec.seed = cfg.seed;
    if let Some(mu) = cfg.mu_override {
        spec.adhesion = vec![rmpc_core::sim_engine::MuStep { time: 0.0, mu }];
    }
    if let Some(kappa) = cfg.kappa_override {
        spec.kappa = kappa;
    }
}

/// Runs every requested controller on every bundled scenario with one
/// shared pair of synthesized tables. Per-run failures land in the
/// report; remaining runs proceed.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let settings = solver_settings();
    let mut scenarios = bundled_scenarios();
    for s in scenarios.iter_mut() {
        apply_overrides(s, cfg);
    }
    let table6 = synthesize_augmented(&scenarios[0], cfg.table_entries, TABLE_SHRINK, &settings)?;
    let table4 = synthesize_no_am(&scenarios[0], cfg.table_entries, TABLE_SHRINK, &settings)?;
    let du_bound = RmpcWeights::<f64>::default_augmented().du_max;

    let mut jobs: Vec<(ScenarioSpec<f64>, ControllerChoice)> = Vec::new();
    for s in &scenarios {
        for &c in &cfg.controllers {
            jobs.push((s.clone(), c));
        }
    }

    let run_one = |spec: &ScenarioSpec<f64>, choice: ControllerChoice| -> BenchRun {
        let outcome = (|| -> Result<(SimLog<f64>, Metrics<f64>), String> {
            let mut ctrl =
                make_controller(choice, spec, Some(&table6), Some(&table4), &settings)
                    .map_err(|e| e.to_string())?;
            let log = run_closed_loop(spec, ctrl.as_mut()).map_err(|e| e.to_string())?;
            let metrics = compute_metrics(&log, du_bound);
            Ok((log, metrics))
        })();
        BenchRun {
            scenario: spec.name.clone(),
            controller: choice,
            outcome,
        }
    };

    let runs: Vec<BenchRun> = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(spec, choice)| scope.spawn(|| run_one(spec, *choice)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("run thread")).collect()
        })
    } else {
        jobs.iter().map(|(spec, choice)| run_one(spec, *choice)).collect()
    };

    Ok(BenchReport { runs, du_bound })
}

fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Plain-text summary: one metrics table per scenario plus the timing
/// table across controllers.
pub fn summary_text(report: &BenchReport) -> String {
    let mut out = String::new();
    let mut scenarios: Vec<&str> = report.runs.iter().map(|r| r.scenario.as_str()).collect();
    scenarios.dedup();
    for scenario in &scenarios {
        let _ = writeln!(out, "scenario: {scenario}");
        let _ = writeln!(
            out,
            "  {:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}",
            "controller", "rms_ey [m]", "max_ey [m]", "tv [rad]", "clear [m]", "mean [ms]", "viol"
        );
        for run in report.runs.iter().filter(|r| &r.scenario == scenario) {
            match &run.outcome {
                Ok((_, m)) => {
                    let _ = writeln!(
                        out,
                        "  {:<16} {:>12.5} {:>12.5} {:>12.5} {:>12.3} {:>12.4} {:>10}",
                        run.controller.as_str(),
                        m.rms_e_y,
                        m.max_abs_e_y,
                        m.steering_tv,
                        m.min_clearance,
                        m.mean_step_ms,
                        m.violation_count
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "  {:<16} FAILED: {e}", run.controller.as_str());
                }
            }
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "controller execution time across scenarios:");
    let _ = writeln!(out, "  {:<16} {:>14} {:>14}", "controller", "average [ms]", "maximum [ms]");
    for choice in ControllerChoice::ALL {
        let mut mean = 0.0;
        let mut max = 0.0f64;
        let mut n = 0usize;
        for run in &report.runs {
            if run.controller == choice {
                if let Ok((_, m)) = &run.outcome {
                    mean += m.mean_step_ms;
                    max = max.max(m.max_step_ms);
                    n += 1;
                }
            }
        }
        if n > 0 {
            let _ = writeln!(
                out,
                "  {:<16} {:>14.4} {:>14.4}",
                choice.as_str(),
                mean / n as f64,
                max
            );
        }
    }
    out
}

/// Machine-readable summary, one row per run.
pub fn summary_csv(report: &BenchReport) -> String {
    let mut out = String::from(
        "scenario,controller,rms_ey,max_ey,max_du,steering_tv,min_clearance,mean_step_ms,max_step_ms,violations,status\n",
    );
    for run in &report.runs {
        match &run.outcome {
            Ok((_, m)) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:.6},{:.6},{},ok",
                    run.scenario,
                    run.controller.as_str(),
                    fmt12(m.rms_e_y),
                    fmt12(m.max_abs_e_y),
                    fmt12(m.max_abs_du),
                    fmt12(m.steering_tv),
                    fmt12(m.min_clearance),
                    m.mean_step_ms,
                    m.max_step_ms,
                    m.violation_count
                );
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "{},{},,,,,,,,,failed: {}",
                    run.scenario,
                    run.controller.as_str(),
                    e.replace(',', ";")
                );
            }
        }
    }
    out
}

/// Writes per-run logs, the summaries, and the per-scenario figures.
pub fn emit_artifacts(report: &BenchReport, out_dir: &Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(out_dir)?;
    for run in &report.runs {
        if let Ok((log, _)) = &run.outcome {
            let path = out_dir.join(format!("{}_{}.csv", run.scenario, run.controller.as_str()));
            std::fs::write(path, log_to_csv(log))?;
        }
    }
    std::fs::write(out_dir.join("summary.txt"), summary_text(report))?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(report))?;

    let mut scenarios: Vec<String> = report.runs.iter().map(|r| r.scenario.clone()).collect();
    scenarios.dedup();
    for scenario in &scenarios {
        let logs: Vec<(&str, &SimLog<f64>)> = report
            .runs
            .iter()
            .filter_map(|r| match (&r.scenario == scenario, &r.outcome) {
                (true, Ok((log, _))) => Some((r.controller.as_str(), log)),
                _ => None,
            })
            .collect();
        if logs.is_empty() {
            continue;
        }
        let quantities: [(&str, &str, fn(&rmpc_core::sim_engine::SimRecord<f64>) -> f64); 6] = [
            ("delta_f", "steering angle [rad]", |r| r.delta_f),
            ("du", "steering rate [rad/step]", |r| r.du),
            ("e_y", "lateral error [m]", |r| r.error.e_y),
            ("e_y_dot", "lateral error rate [m/s]", |r| r.error.e_y_dot),
            ("e_psi", "heading error [rad]", |r| r.error.e_psi),
            ("e_psi_dot", "yaw rate error [rad/s]", |r| r.error.e_psi_dot),
        ];
        for (name, label, extract) in quantities {
            let series_data: Vec<(String, Vec<(f64, f64)>)> = logs
                .iter()
                .map(|(ctrl, log)| {
                    (
                        ctrl.to_string(),
                        log.records.iter().map(|r| (r.t, extract(r))).collect(),
                    )
                })
                .collect();
            let series: Vec<Series> = series_data
                .iter()
                .map(|(n, pts)| Series { name: n, points: pts })
                .collect();
            let svg = svg::line_chart(&format!("{scenario}: {name}"), "t [s]", label, &series);
            std::fs::write(out_dir.join(format!("{scenario}_{name}.svg")), svg)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_construction_checks_dimensions() {
        let spec = presets::normal::<f64>();
        let settings = SdpSettings::default();
        let t4 = synthesize_no_am(&spec, 1, TABLE_SHRINK, &settings).unwrap();
        // a 4-state table cannot feed the proposed controller
        let err = make_controller(
            ControllerChoice::Proposed,
            &spec,
            Some(&t4),
            None,
            &settings,
        );
        assert!(matches!(err, Err(BenchError::TableMismatch(_))));
    }

    #[test]
    fn solver_settings_honor_env_override() {
        std::env::set_var("RMPC_SDP_TOL", "1e-6");
        let s = solver_settings();
        assert_eq!(s.gap_tol, 1e-6);
        std::env::remove_var("RMPC_SDP_TOL");
        let s = solver_settings();
        assert_eq!(s.gap_tol, SdpSettings::<f64>::default().gap_tol);
    }
}
