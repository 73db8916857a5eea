//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see every line).

use nalgebra::{DMatrix, DVector};
use rmpc_cli::bench::{self, BenchConfig};
use rmpc_core::lmi_rmpc::{
    solve_rmpc_sdp, LookupTable, OfflineNoAmController, OfflineRmpcController,
    OnlineRmpcController, RmpcWeights,
};
use rmpc_core::num::SplitMix64;
use rmpc_core::sdp::{min_eig, SdpSettings};
use rmpc_core::sim_engine::{
    compute_metrics, presets, run_closed_loop, ControllerChoice, MuStep, ScenarioSpec,
};
use rmpc_core::traffic_idm::{
    desired_gap, equilibrium_gap, idm_acceleration, IdmParams, LongitudinalState, Platoon,
    SpeedProfile, Vehicle,
};
use nalgebra::Matrix4;
use rmpc_core::vehicle_model::{
    augmented_from_chassis, continuous_error_dynamics, discretize, ChassisParams, UncertaintyBox,
};
use std::sync::OnceLock;

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "[criterion {criterion:2}] {} — {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn settings() -> SdpSettings<f64> {
    SdpSettings::default()
}

fn table6() -> &'static LookupTable<f64> {
    static T: OnceLock<LookupTable<f64>> = OnceLock::new();
    T.get_or_init(|| {
        bench::synthesize_augmented(&presets::normal(), 30, 0.85, &settings()).unwrap()
    })
}

fn table4() -> &'static LookupTable<f64> {
    static T: OnceLock<LookupTable<f64>> = OnceLock::new();
    T.get_or_init(|| bench::synthesize_no_am(&presets::normal(), 30, 0.85, &settings()).unwrap())
}

fn du_bound() -> f64 {
    RmpcWeights::<f64>::default_augmented().du_max
}

fn proposed() -> OfflineRmpcController<f64> {
    OfflineRmpcController::new(table6().clone(), du_bound())
}

#[test]
fn criterion_01_timing_separation() {
    let spec: ScenarioSpec<f64> = presets::normal();
    let mut offline = proposed();
    let log_off = run_closed_loop(&spec, &mut offline).unwrap();
    let m_off = compute_metrics(&log_off, du_bound());

    let vs = bench::vertices_augmented(&spec.chassis, spec.kappa, spec.ts).unwrap();
    let mut online = OnlineRmpcController::new(vs, RmpcWeights::default_augmented(), settings());
    let log_on = run_closed_loop(&spec, &mut online).unwrap();
    let m_on = compute_metrics(&log_on, du_bound());

    let ratio = m_off.mean_step_ms / m_on.mean_step_ms;
    report(
        1,
        "timing separation",
        ratio <= 0.05,
        &format!(
            "offline {:.4} ms vs online {:.2} ms per step, ratio {:.2e} (limit 5e-2)",
            m_off.mean_step_ms, m_on.mean_step_ms, ratio
        ),
    );
}

#[test]
fn criterion_02_nested_ellipsoids() {
    let table = table6();
    let mut worst = f64::INFINITY;
    for k in 1..table.len() {
        let d = &table.entries[k - 1].q - &table.entries[k].q;
        worst = worst.min(min_eig(&d));
    }
    report(
        2,
        "nested ellipsoids",
        table.len() == 30 && worst >= -1e-8,
        &format!("N = {}, worst nesting eigenvalue {worst:.3e} (limit -1e-8)", table.len()),
    );
}

#[test]
fn criterion_03_robust_stability_suite() {
    let table = table6();
    let spec: ScenarioSpec<f64> = presets::normal();
    let vs = bench::vertices_augmented(&spec.chassis, spec.kappa, spec.ts).unwrap();
    let w = RmpcWeights::<f64>::default_augmented();

    // interior stiffness samples share the synthesis model structure
    let p = spec.chassis;
    let ubox = UncertaintyBox::new(spec.kappa, p.c_f, p.c_r).unwrap();
    let (f_lo, f_hi) = ubox.c_f_range();
    let (r_lo, r_hi) = ubox.c_r_range();
    let mut rng = SplitMix64::new(2024);
    let mut models: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..vs.len())
        .map(|v| (vs.a[v].clone(), vs.b[v].clone()))
        .collect();
    for _ in 0..50 {
        let c_f = rng.uniform(f_lo, f_hi);
        let c_r = rng.uniform(r_lo, r_hi);
        let m = augmented_from_chassis(&p.with_stiffness(c_f, c_r), spec.ts).unwrap();
        let mut a = DMatrix::from_fn(6, 6, |i, j| m.a[(i, j)]);
        a[(5, 5)] = rmpc_core::lmi_rmpc::REFERENCE_FORGETTING;
        models.push((a, DMatrix::from_fn(6, 1, |i, _| m.b[i])));
    }
    let states: Vec<DVector<f64>> = (0..100)
        .map(|_| DVector::from_fn(6, |_, _| rng.uniform(-1.0, 1.0)))
        .collect();

    let mut worst_rho = 0.0f64;
    let mut worst_margin = f64::NEG_INFINITY;
    for e in &table.entries {
        let p_mat = &e.q_inv * e.gamma;
        for (idx, (a, b)) in models.iter().enumerate() {
            let acl = a + b * &e.k_gain;
            if idx < vs.len() {
                let rho = acl
                    .complex_eigenvalues()
                    .iter()
                    .map(|c| c.norm())
                    .fold(0.0, f64::max);
                worst_rho = worst_rho.max(rho);
            }
            for xi in &states {
                let u = (&e.k_gain * xi)[(0, 0)];
                let next = &acl * xi;
                let decrease = (&p_mat * &next).dot(&next) - (&p_mat * xi).dot(xi);
                let stage = (&w.q_bar * xi).dot(xi) + w.r_bar * u * u;
                worst_margin = worst_margin.max(decrease + stage - 1e-6 * xi.norm_squared());
            }
        }
    }
    report(
        3,
        "robust stability",
        worst_rho < 1.0 - 1e-6 && worst_margin <= 0.0,
        &format!(
            "max vertex spectral radius {worst_rho:.9}, worst Lyapunov slack {worst_margin:.3e}"
        ),
    );
}

#[test]
fn criterion_04_lqr_oracle_equivalence() {
    // independent oracle: discrete Riccati value iteration
    fn dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
        let mut p = q.clone();
        for _ in 0..500_000 {
            let btp = b.transpose() * &p;
            let denom = r + (&btp * b)[(0, 0)];
            let gain = &btp * a / denom;
            let next = a.transpose() * &p * a - (a.transpose() * &p * b) * &gain + q;
            let next = (&next + next.transpose()) * 0.5;
            if (&next - &p).norm() < 1e-12 {
                let btp = b.transpose() * &next;
                let denom = r + (&btp * b)[(0, 0)];
                return &btp * a / denom;
            }
            p = next;
        }
        panic!("value iteration did not converge");
    }

    let spec: ScenarioSpec<f64> = presets::normal();
    let mut detail = String::new();
    let mut ok = true;
    for dim in [6usize, 4] {
        let (vs, mut w, seed) = if dim == 6 {
            (
                bench::vertices_augmented(&spec.chassis, 1.0, spec.ts).unwrap(),
                RmpcWeights::<f64>::default_augmented(),
                bench::seed_augmented(),
            )
        } else {
            (
                bench::vertices_error_only(&spec.chassis, 1.0, spec.ts).unwrap(),
                RmpcWeights::<f64>::default_error_only(),
                bench::seed_error_only(),
            )
        };
        w.du_max = 1e6;
        w.xi_max = DVector::from_element(dim, 1e6);
        let sol = solve_rmpc_sdp(&seed, &vs, &w, None, &settings()).unwrap();
        let q_inv = sol.q.clone().lu().try_inverse().unwrap();
        let k_sdp = &sol.y * &q_inv;
        let k_lqr = dare(&vs.a[0], &vs.b[0], &w.q_bar, w.r_bar);
        let rel = (&k_sdp + &k_lqr).norm() / k_lqr.norm();
        detail.push_str(&format!("{dim}-state rel err {rel:.2e}; "));
        ok &= rel < 1e-3;
    }
    report(4, "LQR oracle equivalence", ok, &detail);
}

#[test]
fn criterion_05_constraint_satisfaction() {
    let mut detail = String::new();
    let mut total = 0usize;
    for mu in [0.6, 1.0] {
        for mut spec in bench::bundled_scenarios() {
            spec.adhesion = vec![MuStep { time: 0.0, mu }];
            let mut ctrl = proposed();
            let log = run_closed_loop(&spec, &mut ctrl).unwrap();
            let m = compute_metrics(&log, du_bound());
            total += m.violation_count;
            detail.push_str(&format!("{}@mu={mu}: {}; ", spec.name, m.violation_count));
        }
    }
    report(
        5,
        "constraint satisfaction",
        total == 0,
        &format!("rate-bound violations {detail}total {total}"),
    );
}

#[test]
fn criterion_06_vibration_claim() {
    let spec: ScenarioSpec<f64> = presets::aggressive();
    let mut prop = proposed();
    let log_p = run_closed_loop(&spec, &mut prop).unwrap();
    let tv_p = compute_metrics(&log_p, du_bound()).steering_tv;
    let mut noam = OfflineNoAmController::new(table4().clone());
    let log_n = run_closed_loop(&spec, &mut noam).unwrap();
    let tv_n = compute_metrics(&log_n, du_bound()).steering_tv;
    report(
        6,
        "vibration claim",
        tv_p <= tv_n,
        &format!("steering TV proposed {tv_p:.4} rad <= no-AM {tv_n:.4} rad"),
    );
}

#[test]
fn criterion_07_collision_free() {
    let mut detail = String::new();
    let mut ok = true;
    for mut spec in bench::bundled_scenarios() {
        spec.adhesion = vec![MuStep { time: 0.0, mu: 0.6 }];
        let mut ctrl = proposed();
        let log = run_closed_loop(&spec, &mut ctrl).unwrap();
        detail.push_str(&format!("{}: {:.3} m; ", spec.name, log.min_clearance));
        ok &= log.min_clearance > 0.0;
    }
    report(7, "collision-free at mu = 0.6", ok, &detail);
}

#[test]
fn criterion_08_idm_equilibrium_and_convergence() {
    let p = IdmParams::<f64> {
        a_max: 1.5,
        b_comf: 2.0,
        v_des: 30.0,
        delta_exp: 4.0,
        s0: 2.0,
        t_gap: 1.5,
        length: 5.0,
    };
    // analytic zero-acceleration equilibrium is exact
    let s_eq = equilibrium_gap(&p, 20.0).unwrap();
    let a_eq = idm_acceleration(&p, 20.0, s_eq, 0.0).unwrap();

    // two-car convergence behind a constant-speed leader
    let mut platoon = Platoon::new(
        vec![
            Vehicle {
                state: LongitudinalState { x: 0.0, v: 20.0 },
                params: p,
            },
            Vehicle {
                state: LongitudinalState { x: -(50.0 + p.length), v: 10.0 },
                params: p,
            },
        ],
        SpeedProfile::constant(20.0),
    )
    .unwrap();
    for _ in 0..3000 {
        platoon = platoon.step(0.1).unwrap();
    }
    let gap_err = (platoon.gap(1) - s_eq).abs();
    report(
        8,
        "IDM equilibrium and convergence",
        a_eq.abs() < 1e-12 && gap_err < 0.01,
        &format!(
            "a(s_eq) = {a_eq:.2e} m/s^2 (s* = {:.3} m, s_eq = {s_eq:.3} m), |s - s_eq| = {gap_err:.5} m after 300 s",
            desired_gap(&p, 20.0, 0.0)
        ),
    );
}

#[test]
fn criterion_09_discretization_oracle() {
    fn expm_series(m: &Matrix4<f64>, terms: usize) -> Matrix4<f64> {
        let mut sum = Matrix4::<f64>::identity();
        let mut term = Matrix4::<f64>::identity();
        for k in 1..=terms {
            term = term * m / k as f64;
            sum += term;
        }
        sum
    }
    let chassis = ChassisParams::<f64>::default_sedan();
    let (a_c, b_c, e_c) = continuous_error_dynamics(&chassis).unwrap();
    let err = |ts: f64| {
        let d = discretize(&a_c, &b_c, &e_c, ts);
        (d.a_d - expm_series(&(a_c * ts), 12)).norm()
    };
    let ratio = err(0.01) / err(0.005);
    report(
        9,
        "discretization oracle",
        (3.5..=4.5).contains(&ratio),
        &format!("Euler error ratio {ratio:.4} for ts halving (expected in [3.5, 4.5])"),
    );
}

#[test]
fn criterion_10_apf_unit_values() {
    use rmpc_core::apf_planner::*;
    let obstacle = ObstacleDesc {
        x_obs: 50.0,
        y_obs: 1.0,
        x_dot_obs: 0.0,
        length_obs: 5.0,
        width_obs: 2.0,
        amp: 100.0,
        shape_c: 1.0,
    };
    let road = RoadDesc {
        lane_marks: vec![3.5],
        lane_dist: 1.0,
        y_road_min: 0.0,
        y_road_max: 7.0,
        amp_lane: 0.7,
        road_gain: 1.0,
        safety_eps: 0.5,
    };
    let scene = PotentialScene {
        obstacles: vec![obstacle],
        road: road.clone(),
    };
    let center: f64 = obstacle_potential(&scene, 50.0, 1.0, 15.0).unwrap();
    let mark: f64 = lane_potential(&road, 3.5);
    let mid: f64 = road_potential(&road, 3.5).unwrap();
    let e1 = (center - 100.0).abs();
    let e2 = (mark - 0.7).abs();
    let e3 = (mid - 0.163265306122449).abs();
    report(
        10,
        "APF unit values",
        e1 < 1e-9 && e2 < 1e-9 && e3 < 1e-9,
        &format!("obstacle center err {e1:.1e}, lane mark err {e2:.1e}, mid-road err {e3:.1e}"),
    );
}

#[test]
fn criterion_11_benchmark_determinism() {
    let cfg = BenchConfig {
        controllers: ControllerChoice::ALL.to_vec(),
        seed: 42,
        mu_override: None,
        kappa_override: None,
        parallel: true,
        table_entries: 30,
    };
    let a = bench::run_benchmark(&cfg).unwrap();
    let b = bench::run_benchmark(&cfg).unwrap();
    let mut rows = 0usize;
    let mut identical = true;
    for (ra, rb) in a.runs.iter().zip(b.runs.iter()) {
        rows += 1;
        match (&ra.outcome, &rb.outcome) {
            (Ok((la, _)), Ok((lb, _))) => {
                identical &= la.records.len() == lb.records.len();
                for (x, y) in la.records.iter().zip(lb.records.iter()) {
                    // timing columns exempt
                    identical &= x.t == y.t
                        && x.plant == y.plant
                        && x.error == y.error
                        && x.delta_f == y.delta_f
                        && x.du == y.du
                        && x.du_raw == y.du_raw
                        && x.out_of_region == y.out_of_region
                        && x.plan_epoch == y.plan_epoch;
                    if !identical {
                        break;
                    }
                }
            }
            _ => identical = false,
        }
    }
    report(
        11,
        "benchmark determinism",
        identical && rows == 12,
        &format!("{rows} runs compared record-by-record (timing excluded)"),
    );
}
