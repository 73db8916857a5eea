//! Closed-loop scenario simulator.
//!
//! The plant is a nonlinear-kinematics, linear-tire single-track model
//! integrated with RK4; the controller sees only the forward-Euler
//! synthesis model, so the fidelity gap between plant and design model
//! is part of the experiment, on top of the adhesion-scaled tire
//! stiffness. Surrounding vehicles follow the IDM with dynamic leader
//! resolution (the ego becomes a leader once it occupies their lane),
//! a scripted pedestrian can cross the road, and V2X events reveal
//! obstacles to the planner at their announcement times.

use crate::apf_planner::{
    plan_trajectory, CandidateSetSpec, EgoPlanState, ObstacleDesc, PlannedTrajectory,
    PlannerWeights, PotentialScene, RoadDesc,
};
use crate::lmi_rmpc::LateralController;
use crate::num::{lit, Real};
use crate::traffic_idm::{idm_acceleration, IdmParams, LongitudinalState};
use crate::vehicle_model::{ChassisParams, ErrorState};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ego station {station} m is beyond the trajectory end {end} m")]
    OffTrajectory { station: f64, end: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("surrounding traffic collided at t = {t} s")]
    TrafficCollision { t: f64 },
}

/// True vehicle state: global pose plus lateral velocity and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
    pub v_y: T,
    pub psi_dot: T,
}

/// Scripted road-crossing pedestrian with a trapezoidal speed profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianProfile<T> {
    /// Time the crossing starts (s).
    pub entry_time: T,
    pub x: T,
    pub start_y: T,
    pub target_y: T,
    /// Trapezoid: accelerate, cruise, decelerate (m/s^2, m/s, m/s^2).
    pub accel: T,
    pub cruise: T,
    pub decel: T,
    pub width: T,
    pub length: T,
    pub amp: T,
    pub shape_c: T,
}

impl<T: Real> PedestrianProfile<T> {
    /// Lateral position at time `t`.
    pub fn y_at(&self, t: T) -> T {
        let tau = t - self.entry_time;
        if tau <= T::zero() {
            return self.start_y;
        }
        let total = (self.target_y - self.start_y).abs();
        let sign = if self.target_y >= self.start_y { T::one() } else { -T::one() };
        let two = lit::<T>(2.0);
        let d_acc = self.cruise * self.cruise / (two * self.accel);
        let d_dec = self.cruise * self.cruise / (two * self.decel);
        let t_acc = self.cruise / self.accel;
        let t_dec = self.cruise / self.decel;
        let d = if total <= d_acc + d_dec {
            // never reaches cruise: triangular profile
            let d_mid = total / two;
            let t_half = (two * d_mid / self.accel).sqrt();
            if tau < t_half {
                lit::<T>(0.5) * self.accel * tau * tau
            } else {
                let v_peak = self.accel * t_half;
                let t_rem = tau - t_half;
                let t_stop = v_peak / self.decel;
                if t_rem < t_stop {
                    d_mid + v_peak * t_rem - lit::<T>(0.5) * self.decel * t_rem * t_rem
                } else {
                    total
                }
            }
        } else {
            let d_cruise = total - d_acc - d_dec;
            let t_cruise = d_cruise / self.cruise;
            if tau < t_acc {
                lit::<T>(0.5) * self.accel * tau * tau
            } else if tau < t_acc + t_cruise {
                d_acc + self.cruise * (tau - t_acc)
            } else if tau < t_acc + t_cruise + t_dec {
                let r = tau - t_acc - t_cruise;
                d_acc + d_cruise + self.cruise * r - lit::<T>(0.5) * self.decel * r * r
            } else {
                total
            }
        };
        self.start_y + sign * d
    }
}

/// One obstacle of the simulated world.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldObstacle<T> {
    Static(ObstacleDesc<T>),
    IdmVehicle {
        lane_y: T,
        initial: LongitudinalState<T>,
        params: IdmParams<T>,
        width: T,
        amp: T,
        shape_c: T,
    },
    Pedestrian(PedestrianProfile<T>),
}

/// Timestamped hazard announcement carrying an obstacle index; this is
/// the whole V2X abstraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V2xEvent<T> {
    pub time: T,
    pub obstacle: usize,
}

/// Piecewise-constant road adhesion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuStep<T> {
    pub time: T,
    pub mu: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoInit<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
    pub v_x: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerChoice {
    Proposed,
    OffsetOffline,
    Online,
    OfflineNoAm,
}

impl ControllerChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::OffsetOffline => "offset-offline",
            Self::Online => "online",
            Self::OfflineNoAm => "offline-no-am",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(Self::Proposed),
            "offset-offline" => Some(Self::OffsetOffline),
            "online" => Some(Self::Online),
            "offline-no-am" => Some(Self::OfflineNoAm),
            _ => None,
        }
    }

    pub const ALL: [ControllerChoice; 4] = [
        Self::Proposed,
        Self::OffsetOffline,
        Self::Online,
        Self::OfflineNoAm,
    ];
}

/// Declarative closed-loop experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec<T> {
    pub name: String,
    pub road: RoadDesc<T>,
    pub ego: EgoInit<T>,
    pub chassis: ChassisParams<T>,
    /// Stiffness uncertainty ratio used for synthesis.
    pub kappa: T,
    pub obstacles: Vec<WorldObstacle<T>>,
    pub adhesion: Vec<MuStep<T>>,
    pub v2x_events: Vec<V2xEvent<T>>,
    pub duration: T,
    pub ts: T,
    pub seed: u64,
    pub controller: ControllerChoice,
    pub planner: PlannerWeights<T>,
}

impl<T: Real> ScenarioSpec<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if !(self.ts > T::zero()) {
            return bad("ts must be > 0");
        }
        if !(self.duration > T::zero()) {
            return bad("duration must be > 0");
        }
        self.road
            .validate()
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        self.chassis
            .validate()
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        if self.kappa < T::one() {
            return bad("kappa must be >= 1");
        }
        if !(self.ego.y > self.road.y_road_min && self.ego.y < self.road.y_road_max) {
            return bad("ego must start inside the road");
        }
        for step in &self.adhesion {
            if !(step.mu > T::zero() && step.mu <= T::one()) {
                return bad("adhesion mu must lie in (0, 1]");
            }
        }
        for w in self.adhesion.windows(2) {
            if w[1].time <= w[0].time {
                return bad("adhesion steps must have increasing times");
            }
        }
        for ev in &self.v2x_events {
            if ev.obstacle >= self.obstacles.len() {
                return bad("v2x event references a missing obstacle");
            }
        }
        for ob in &self.obstacles {
            match ob {
                WorldObstacle::Static(d) => {
                    d.validate().map_err(|e| SimError::Invalid(e.to_string()))?
                }
                WorldObstacle::IdmVehicle { params, .. } => params
                    .validate()
                    .map_err(|e| SimError::Invalid(e.to_string()))?,
                WorldObstacle::Pedestrian(p) => {
                    if !(p.accel > T::zero() && p.cruise > T::zero() && p.decel > T::zero()) {
                        return bad("pedestrian profile speeds must be positive");
                    }
                }
            }
        }
        self.planner
            .validate()
            .map_err(|e| SimError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Adhesion coefficient at time `t` (1.0 before the first step).
    pub fn mu_at(&self, t: T) -> T {
        let mut mu = T::one();
        for step in &self.adhesion {
            if t >= step.time {
                mu = step.mu;
            } else {
                break;
            }
        }
        mu
    }
}

/// Per-step record of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRecord<T> {
    pub t: T,
    pub plant: PlantState<T>,
    pub error: ErrorState<T>,
    pub delta_f: T,
    /// Applied steering-rate command (rad/step).
    pub du: T,
    /// Raw feedback command before clipping.
    pub du_raw: T,
    pub psi_dot_ref: T,
    pub y_ref: T,
    pub table_index: Option<usize>,
    pub step_ms: f64,
    pub out_of_region: bool,
    pub degraded: bool,
    pub plan_epoch: usize,
}

/// Full time-series record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog<T> {
    pub scenario: String,
    pub controller: String,
    pub records: Vec<SimRecord<T>>,
    /// Number of planning epochs (initial plan included).
    pub plan_epochs: usize,
    /// Smallest box-clearance between the ego point and any world
    /// obstacle over the run; infinite when no obstacles exist.
    pub min_clearance: T,
}

/// Scalar summary of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics<T> {
    pub rms_e_y: T,
    pub max_abs_e_y: T,
    pub max_abs_du: T,
    /// Total variation of the steering angle (rad).
    pub steering_tv: T,
    pub min_clearance: T,
    pub mean_step_ms: f64,
    pub max_step_ms: f64,
    /// Steps whose raw command exceeded the rate bound.
    pub violation_count: usize,
}

/// Integrates the single-track plant one step with RK4. The tire
/// stiffness scales with the adhesion coefficient `mu`.
pub fn plant_step<T: Real>(
    ps: &PlantState<T>,
    delta_f: T,
    v_x: T,
    mu: T,
    chassis: &ChassisParams<T>,
    ts: T,
) -> PlantState<T> {
    let two = lit::<T>(2.0);
    let c_f = two * mu * chassis.c_f;
    let c_r = two * mu * chassis.c_r;
    let deriv = |s: &PlantState<T>| -> [T; 5] {
        let alpha_f = delta_f - (s.v_y + chassis.l_f * s.psi_dot) / v_x;
        let alpha_r = -(s.v_y - chassis.l_r * s.psi_dot) / v_x;
        let f_yf = c_f * alpha_f;
        let f_yr = c_r * alpha_r;
        [
            v_x * s.psi.cos() - s.v_y * s.psi.sin(),
            v_x * s.psi.sin() + s.v_y * s.psi.cos(),
            s.psi_dot,
            (f_yf + f_yr) / chassis.m - v_x * s.psi_dot,
            (chassis.l_f * f_yf - chassis.l_r * f_yr) / chassis.i_z,
        ]
    };
    let advance = |s: &PlantState<T>, k: &[T; 5], h: T| PlantState {
        x: s.x + k[0] * h,
        y: s.y + k[1] * h,
        psi: s.psi + k[2] * h,
        v_y: s.v_y + k[3] * h,
        psi_dot: s.psi_dot + k[4] * h,
    };
    let half = ts / two;
    let k1 = deriv(ps);
    let k2 = deriv(&advance(ps, &k1, half));
    let k3 = deriv(&advance(ps, &k2, half));
    let k4 = deriv(&advance(ps, &k3, ts));
    let six = lit::<T>(6.0);
    let mut out = *ps;
    let combine = |a: T, b: T, c: T, d: T| (a + two * b + two * c + d) * ts / six;
    out.x += combine(k1[0], k2[0], k3[0], k4[0]);
    out.y += combine(k1[1], k2[1], k3[1], k4[1]);
    out.psi += combine(k1[2], k2[2], k3[2], k4[2]);
    out.v_y += combine(k1[3], k2[3], k3[3], k4[3]);
    out.psi_dot += combine(k1[4], k2[4], k3[4], k4[4]);
    out
}

/// Tracking error of the plant against the matched reference sample
/// (nearest longitudinal station).
pub fn error_from_plant<T: Real>(
    ps: &PlantState<T>,
    traj: &PlannedTrajectory<T>,
    v_x: T,
) -> Result<(ErrorState<T>, usize), SimError> {
    let first = traj.samples.first().expect("trajectory has samples");
    let last = traj.samples.last().expect("trajectory has samples");
    let step = traj.samples[1].x_glo - first.x_glo;
    let rel = (ps.x - first.x_glo) / step;
    let idx = rel.round().as_f64() as i64;
    if ps.x > last.x_glo + step / lit::<T>(2.0) {
        return Err(SimError::OffTrajectory {
            station: ps.x.as_f64(),
            end: last.x_glo.as_f64(),
        });
    }
    let idx = idx.clamp(0, traj.samples.len() as i64 - 1) as usize;
    let sample = &traj.samples[idx];
    let e_psi = ps.psi - sample.psi_ref;
    Ok((
        ErrorState {
            e_y: ps.y - sample.y_glo,
            e_y_dot: ps.v_y + v_x * e_psi,
            e_psi,
            e_psi_dot: ps.psi_dot - sample.psi_dot_ref,
        },
        idx,
    ))
}

/// Ego length used when surrounding IDM vehicles follow the ego (m).
const EGO_LENGTH: f64 = 5.0;
/// Lateral window within which the ego counts as occupying a lane (m).
const LANE_CAPTURE: f64 = 2.5;
/// Replan period while a hazard is active (s).
const REPLAN_PERIOD: f64 = 0.5;
/// Target change (m) that makes a replanned trajectory replace the
/// active one; sub-lane refinements keep the committed plan so the
/// reference does not chatter between offset candidates.
const TARGET_HYSTERESIS: f64 = 0.6;

struct HvState<T> {
    lane_y: T,
    state: LongitudinalState<T>,
    params: IdmParams<T>,
    width: T,
    amp: T,
    shape_c: T,
    /// Index in the scenario obstacle list.
    obstacle_index: usize,
}

/// Axis-aligned box clearance from a point to an obstacle footprint.
fn box_clearance<T: Real>(px: T, py: T, cx: T, cy: T, half_len: T, half_wid: T) -> T {
    let dx = ((px - cx).abs() - half_len).max(T::zero());
    let dy = ((py - cy).abs() - half_wid).max(T::zero());
    (dx * dx + dy * dy).sqrt()
}

/// Runs the closed loop and records everything. Deterministic for a
/// fixed spec: the only nondeterministic outputs are the wall-clock
/// timing fields.
pub fn run_closed_loop<T: Real>(
    spec: &ScenarioSpec<T>,
    controller: &mut dyn LateralController<T>,
) -> Result<SimLog<T>, SimError> {
    spec.validate()?;
    let ts = spec.ts;
    let v_x = spec.ego.v_x;
    let n_steps = (spec.duration / ts).round().as_f64() as usize;

    let mut plant = PlantState {
        x: spec.ego.x,
        y: spec.ego.y,
        psi: spec.ego.psi,
        v_y: T::zero(),
        psi_dot: T::zero(),
    };

    // surrounding IDM vehicles
    let mut hvs: Vec<HvState<T>> = spec
        .obstacles
        .iter()
        .enumerate()
        .filter_map(|(i, ob)| match ob {
            WorldObstacle::IdmVehicle {
                lane_y,
                initial,
                params,
                width,
                amp,
                shape_c,
            } => Some(HvState {
                lane_y: *lane_y,
                state: *initial,
                params: *params,
                width: *width,
                amp: *amp,
                shape_c: *shape_c,
                obstacle_index: i,
            }),
            _ => None,
        })
        .collect();

    let mut announced = vec![false; spec.obstacles.len()];
    let mut events: Vec<V2xEvent<T>> = spec.v2x_events.clone();
    events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite event times"));
    let mut next_event = 0usize;

    // commanded lane starts at the nearest lane mark
    let mut commanded = spec
        .road
        .lane_marks
        .iter()
        .copied()
        .min_by(|a, b| {
            (*a - spec.ego.y)
                .abs()
                .partial_cmp(&(*b - spec.ego.y).abs())
                .expect("finite marks")
        })
        .unwrap_or(spec.ego.y);

    // descriptor snapshot of the announced obstacles at time t
    let scene_at = |t: T,
                    announced: &[bool],
                    hvs: &[HvState<T>]|
     -> PotentialScene<T> {
        let mut obstacles = Vec::new();
        for (i, ob) in spec.obstacles.iter().enumerate() {
            if !announced[i] {
                continue;
            }
            match ob {
                WorldObstacle::Static(d) => obstacles.push(*d),
                WorldObstacle::IdmVehicle { .. } => {
                    let hv = hvs
                        .iter()
                        .find(|h| h.obstacle_index == i)
                        .expect("hv state exists");
                    obstacles.push(ObstacleDesc {
                        x_obs: hv.state.x - hv.params.length / lit::<T>(2.0),
                        y_obs: hv.lane_y,
                        x_dot_obs: hv.state.v,
                        length_obs: hv.params.length,
                        width_obs: hv.width,
                        amp: hv.amp,
                        shape_c: hv.shape_c,
                    });
                }
                WorldObstacle::Pedestrian(p) => obstacles.push(ObstacleDesc {
                    x_obs: p.x,
                    y_obs: p.y_at(t),
                    x_dot_obs: T::zero(),
                    length_obs: p.length,
                    width_obs: p.width,
                    amp: p.amp,
                    shape_c: p.shape_c,
                }),
            }
        }
        PotentialScene {
            obstacles,
            road: spec.road.clone(),
        }
    };

    // initial plan from the ego pose with whatever is announced at t=0
    let mut plan_epochs = 0usize;
    let mut active: Option<PlannedTrajectory<T>> = None;
    let mut degraded_plan = false;

    let replan = |t: T,
                      plant: &PlantState<T>,
                      active: &mut Option<PlannedTrajectory<T>>,
                      commanded: &mut T,
                      announced: &[bool],
                      hvs: &[HvState<T>],
                      plan_epochs: &mut usize,
                      force_adopt: bool|
     -> bool {
        let scene = scene_at(t, announced, hvs);
        // anchor on the active reference when one exists, so the handed
        // over reference stays continuous
        let anchor = match active.as_ref() {
            Some(traj) => {
                let first = traj.samples.first().expect("samples");
                let step = traj.samples[1].x_glo - first.x_glo;
                let idx = ((plant.x - first.x_glo) / step).round().as_f64() as i64;
                let idx = idx.clamp(0, traj.samples.len() as i64 - 1) as usize;
                EgoPlanState {
                    x: plant.x,
                    y: traj.samples[idx].y_glo,
                    v_x,
                }
            }
            None => EgoPlanState {
                x: plant.x,
                y: plant.y,
                v_x,
            },
        };
        let spec_cands = CandidateSetSpec::from_road(&spec.road, *commanded);
        match plan_trajectory(&scene, &anchor, &spec.planner, &spec_cands) {
            Ok(traj) => {
                let adopt = force_adopt
                    || active.is_none()
                    || (traj.target_y - *commanded).abs() > lit(TARGET_HYSTERESIS);
                if adopt {
                    *commanded = traj.target_y;
                    *active = Some(traj);
                    *plan_epochs += 1;
                }
                true
            }
            Err(_) => false,
        }
    };

    if !replan(
        T::zero(),
        &plant,
        &mut active,
        &mut commanded,
        &announced,
        &hvs,
        &mut plan_epochs,
        true,
    ) {
        return Err(SimError::Invalid(
            "initial trajectory planning failed".to_string(),
        ));
    }

    let mut hazard_active = false;
    let mut last_replan = T::zero();
    let mut records: Vec<SimRecord<T>> = Vec::with_capacity(n_steps + 1);
    let mut min_clearance = T::max_value().unwrap();

    for k in 0..=n_steps {
        let t = ts * lit::<T>(k as f64);

        // V2X announcements due at this step
        let mut fired = false;
        while next_event < events.len() && events[next_event].time <= t {
            if !announced[events[next_event].obstacle] {
                announced[events[next_event].obstacle] = true;
                fired = true;
            }
            next_event += 1;
        }
        if fired {
            hazard_active = true;
            degraded_plan = !replan(
                t,
                &plant,
                &mut active,
                &mut commanded,
                &announced,
                &hvs,
                &mut plan_epochs,
                false,
            );
            last_replan = t;
        } else if hazard_active && t - last_replan >= lit(REPLAN_PERIOD) {
            degraded_plan = !replan(
                t,
                &plant,
                &mut active,
                &mut commanded,
                &announced,
                &hvs,
                &mut plan_epochs,
                false,
            );
            last_replan = t;
        }

        // tracking error against the active reference
        let traj = active.as_ref().expect("active trajectory");
        let (error, idx) = match error_from_plant(&plant, traj, v_x) {
            Ok(v) => v,
            Err(SimError::OffTrajectory { .. }) => {
                // re-anchor forward and retry once
                if !replan(
                    t,
                    &plant,
                    &mut active,
                    &mut commanded,
                    &announced,
                    &hvs,
                    &mut plan_epochs,
                    true,
                ) {
                    return Err(SimError::Invalid(
                        "replanning after trajectory end failed".to_string(),
                    ));
                }
                last_replan = t;
                error_from_plant(&plant, active.as_ref().expect("replanned"), v_x)?
            }
            Err(e) => return Err(e),
        };
        let traj = active.as_ref().expect("active trajectory");
        let sample = traj.samples[idx];

        let started = Instant::now();
        let out = controller.step(&error, sample.psi_dot_ref);
        let step_ms = started.elapsed().as_secs_f64() * 1e3;

        records.push(SimRecord {
            t,
            plant,
            error,
            delta_f: out.delta_f,
            du: out.du_applied,
            du_raw: out.du_raw,
            psi_dot_ref: sample.psi_dot_ref,
            y_ref: sample.y_glo,
            table_index: out.table_index,
            step_ms,
            out_of_region: out.out_of_region,
            degraded: out.degraded || degraded_plan,
            plan_epoch: plan_epochs,
        });

        // clearance bookkeeping against every world obstacle
        let two = lit::<T>(2.0);
        for (i, ob) in spec.obstacles.iter().enumerate() {
            let c = match ob {
                WorldObstacle::Static(d) => box_clearance(
                    plant.x,
                    plant.y,
                    d.x_obs,
                    d.y_obs,
                    d.length_obs / two,
                    d.width_obs / two,
                ),
                WorldObstacle::IdmVehicle { .. } => {
                    let hv = hvs
                        .iter()
                        .find(|h| h.obstacle_index == i)
                        .expect("hv state");
                    box_clearance(
                        plant.x,
                        plant.y,
                        hv.state.x - hv.params.length / two,
                        hv.lane_y,
                        hv.params.length / two,
                        hv.width / two,
                    )
                }
                WorldObstacle::Pedestrian(p) => box_clearance(
                    plant.x,
                    plant.y,
                    p.x,
                    p.y_at(t),
                    p.length / two,
                    p.width / two,
                ),
            };
            min_clearance = min_clearance.min(c);
        }

        if k == n_steps {
            break;
        }

        // plant and traffic advance to t + ts
        plant = plant_step(&plant, out.delta_f, v_x, spec.mu_at(t), &spec.chassis, ts);

        // IDM vehicles with dynamic leader resolution: nearest vehicle
        // ahead in the same lane, including the ego once it occupies it
        let snapshot: Vec<(T, T, T, T)> = hvs
            .iter()
            .map(|h| (h.lane_y, h.state.x, h.state.v, h.params.length))
            .collect();
        for hv in hvs.iter_mut() {
            let mut lead: Option<(T, T, T)> = None; // (x, v, length)
            let mut offer = |x: T, v: T, len: T| {
                if lead.is_none_or(|(lx, _, _)| x < lx) {
                    lead = Some((x, v, len));
                }
            };
            for &(lane, x, v, len) in &snapshot {
                if (lane - hv.lane_y).abs() < lit(0.1) && x > hv.state.x {
                    offer(x, v, len);
                }
            }
            if (plant.y - hv.lane_y).abs() < lit(LANE_CAPTURE) && plant.x > hv.state.x {
                offer(plant.x, v_x, lit(EGO_LENGTH));
            }
            let accel = match lead {
                Some((lx, lv, llen)) => {
                    let gap = lx - hv.state.x - llen;
                    if gap <= T::zero() {
                        return Err(SimError::TrafficCollision { t: t.as_f64() });
                    }
                    idm_acceleration(&hv.params, hv.state.v, gap, hv.state.v - lv)
                        .map_err(|_| SimError::TrafficCollision { t: t.as_f64() })?
                }
                None => idm_acceleration(&hv.params, hv.state.v, lit(1e9), T::zero())
                    .expect("free road"),
            };
            let v_new = (hv.state.v + accel * ts).max(T::zero());
            hv.state.v = v_new;
            hv.state.x += v_new * ts;
        }
    }

    Ok(SimLog {
        scenario: spec.name.clone(),
        controller: controller.name().to_string(),
        records,
        plan_epochs,
        min_clearance,
    })
}

/// Scalar metrics from a log. Compute-time statistics exclude the first
/// record (warm-up); violations count raw commands beyond `du_bound`.
pub fn compute_metrics<T: Real>(log: &SimLog<T>, du_bound: T) -> Metrics<T> {
    assert!(!log.records.is_empty(), "metrics need a nonempty log");
    let mut sum_sq = T::zero();
    let mut max_e_y = T::zero();
    let mut max_du = T::zero();
    let mut tv = T::zero();
    let mut violations = 0usize;
    let mut mean_ms = 0.0f64;
    let mut max_ms = 0.0f64;
    let mut prev_delta: Option<T> = None;
    for (k, r) in log.records.iter().enumerate() {
        sum_sq += r.error.e_y * r.error.e_y;
        max_e_y = max_e_y.max(r.error.e_y.abs());
        max_du = max_du.max(r.du.abs());
        if let Some(p) = prev_delta {
            tv += (r.delta_f - p).abs();
        }
        prev_delta = Some(r.delta_f);
        if r.du_raw.abs() > du_bound * (T::one() + lit(1e-9)) {
            violations += 1;
        }
        if k >= 1 {
            mean_ms += r.step_ms;
            max_ms = max_ms.max(r.step_ms);
        }
    }
    let n = lit::<T>(log.records.len() as f64);
    let denom = (log.records.len() - 1).max(1) as f64;
    Metrics {
        rms_e_y: (sum_sq / n).sqrt(),
        max_abs_e_y: max_e_y,
        max_abs_du: max_du,
        steering_tv: tv,
        min_clearance: log.min_clearance,
        mean_step_ms: mean_ms / denom,
        max_step_ms: max_ms,
        violation_count: violations,
    }
}

/// CSV export with the fixed schema
/// `t,X,Y,psi,vy,psidot,ey,eydot,epsi,epsidot,delta_f,du,step_ms,region_flag`,
/// one row per record at 12 significant digits.
pub fn log_to_csv<T: Real>(log: &SimLog<T>) -> String {
    let mut out =
        String::from("t,X,Y,psi,vy,psidot,ey,eydot,epsi,epsidot,delta_f,du,step_ms,region_flag\n");
    for r in &log.records {
        let f = |v: T| format!("{:.11e}", v.as_f64());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{}\n",
            f(r.t),
            f(r.plant.x),
            f(r.plant.y),
            f(r.plant.psi),
            f(r.plant.v_y),
            f(r.plant.psi_dot),
            f(r.error.e_y),
            f(r.error.e_y_dot),
            f(r.error.e_psi),
            f(r.error.e_psi_dot),
            f(r.delta_f),
            f(r.du),
            r.step_ms,
            u8::from(r.out_of_region),
        ));
    }
    out
}

/// The three bundled scenarios. Geometry: two 3.5 m lanes with marks on
/// the lane centerlines at 0 and 3.5 m and boundaries at -1.75/5.25 m.
pub mod presets {
    use super::*;

    /// Bundled road geometry shared by all three scenarios.
    pub fn road<T: Real>() -> RoadDesc<T> {
        RoadDesc {
            lane_marks: vec![T::zero(), lit(3.5)],
            lane_dist: lit(1.0),
            y_road_min: lit(-1.75),
            y_road_max: lit(5.25),
            amp_lane: lit(0.005),
            road_gain: lit(0.01),
            safety_eps: lit(1.0),
        }
    }

    fn blocking_obstacle<T: Real>() -> ObstacleDesc<T> {
        ObstacleDesc {
            x_obs: lit(80.0),
            y_obs: T::zero(),
            x_dot_obs: T::zero(),
            length_obs: lit(5.0),
            width_obs: lit(2.0),
            amp: lit(100.0),
            shape_c: T::one(),
        }
    }

    fn base<T: Real>(name: &str) -> ScenarioSpec<T> {
        ScenarioSpec {
            name: name.to_string(),
            road: road(),
            ego: EgoInit {
                x: T::zero(),
                y: T::zero(),
                psi: T::zero(),
                v_x: lit(15.0),
            },
            chassis: ChassisParams::default_sedan(),
            kappa: lit(1.3),
            obstacles: vec![WorldObstacle::Static(blocking_obstacle())],
            adhesion: vec![
                MuStep {
                    time: T::zero(),
                    mu: T::one(),
                },
                MuStep {
                    time: T::one(),
                    mu: lit(0.6),
                },
            ],
            v2x_events: vec![V2xEvent {
                time: lit(0.5),
                obstacle: 0,
            }],
            duration: lit(10.0),
            ts: lit(0.01),
            seed: 42,
            controller: ControllerChoice::Proposed,
            planner: PlannerWeights::default_weights(),
        }
    }

    /// Lane change around a static obstacle on a road turning slippery.
    pub fn normal<T: Real>() -> ScenarioSpec<T> {
        base("normal")
    }

    /// Same lane change while a fast vehicle closes in on the target
    /// lane from behind.
    pub fn aggressive<T: Real>() -> ScenarioSpec<T> {
        let mut spec = base("aggressive");
        spec.obstacles.push(WorldObstacle::IdmVehicle {
            lane_y: lit(3.5),
            initial: LongitudinalState {
                x: lit(-30.0),
                v: lit(25.0),
            },
            params: IdmParams {
                a_max: lit(1.5),
                b_comf: lit(2.0),
                v_des: lit(25.0),
                delta_exp: lit(4.0),
                s0: lit(2.0),
                t_gap: lit(1.5),
                length: lit(5.0),
            },
            width: lit(2.0),
            amp: lit(100.0),
            shape_c: T::one(),
        });
        spec.v2x_events.push(V2xEvent {
            time: lit(0.5),
            obstacle: 1,
        });
        spec
    }

    /// The lane change is disturbed by a pedestrian stepping onto the
    /// road from a blind spot at t = 2 s.
    pub fn unexpected<T: Real>() -> ScenarioSpec<T> {
        let mut spec = base("unexpected");
        spec.obstacles.push(WorldObstacle::Pedestrian(PedestrianProfile {
            entry_time: lit(2.0),
            x: lit(60.0),
            start_y: lit(-2.0),
            target_y: lit(5.0),
            accel: T::one(),
            cruise: lit(1.5),
            decel: T::one(),
            width: lit(0.6),
            length: lit(0.6),
            amp: lit(100.0),
            shape_c: T::one(),
        }));
        spec.v2x_events.push(V2xEvent {
            time: lit(2.0),
            obstacle: 1,
        });
        spec
    }
}
