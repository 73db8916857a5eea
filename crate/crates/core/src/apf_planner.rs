//! Artificial-potential-field trajectory selection.
//!
//! The planner scores a finite family of quintic lane-change candidates
//! against a three-term cost: quadratic tracking error to the reference
//! path toward the commanded lane, a lateral-acceleration surrogate on
//! the candidate itself, and the accumulated potential of obstacles,
//! lane marks, and road boundaries. The candidate with the lowest cost
//! becomes the reference `(y_ref, psi_ref, psi_dot_ref)` handed to the
//! tracking controller.

use crate::num::{lit, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("lateral position {y} m is outside the open road interval ({min}, {max})")]
    OutOfRoad { y: f64, min: f64, max: f64 },
    #[error("degenerate convergence coefficient: {0}")]
    DegenerateSigma(String),
    #[error("no feasible candidate: all {0} candidates leave the road or exceed the potential ceiling")]
    NoFeasibleCandidate(usize),
    #[error("invalid planner input: {0}")]
    Invalid(String),
}

/// One obstacle of the potential map. Positions are global road
/// coordinates; `x_dot_obs` is the obstacle's longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleDesc<T> {
    pub x_obs: T,
    pub y_obs: T,
    pub x_dot_obs: T,
    /// Obstacle length (m).
    pub length_obs: T,
    /// Obstacle width (m).
    pub width_obs: T,
    /// Peak potential at the obstacle center.
    pub amp: T,
    /// Shape exponent `c >= 1`.
    pub shape_c: T,
}

impl<T: Real> ObstacleDesc<T> {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.length_obs > T::zero()) || !(self.width_obs > T::zero()) {
            return Err(PlannerError::Invalid("obstacle extent must be > 0".into()));
        }
        if !(self.amp > T::zero()) {
            return Err(PlannerError::Invalid("obstacle amplitude must be > 0".into()));
        }
        if self.shape_c < T::one() {
            return Err(PlannerError::Invalid("shape exponent must be >= 1".into()));
        }
        Ok(())
    }
}

/// Road geometry and lane/boundary potential parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadDesc<T> {
    /// Lateral coordinates of the lane marks. The bundled scenarios put
    /// the marks on the lane centerlines, which doubles as the candidate
    /// target set for the planner.
    pub lane_marks: Vec<T>,
    /// Lane potential length scale d (m).
    pub lane_dist: T,
    pub y_road_min: T,
    pub y_road_max: T,
    /// Peak lane-mark potential.
    pub amp_lane: T,
    /// Road boundary gain eta.
    pub road_gain: T,
    /// Safety margin added to obstacle length once the ego has passed.
    pub safety_eps: T,
}

impl<T: Real> RoadDesc<T> {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.y_road_min < self.y_road_max) {
            return Err(PlannerError::Invalid("road bounds must satisfy min < max".into()));
        }
        for &m in &self.lane_marks {
            if !(m > self.y_road_min && m < self.y_road_max) {
                return Err(PlannerError::Invalid(
                    "lane marks must lie strictly inside the road bounds".into(),
                ));
            }
        }
        if !(self.lane_dist > T::zero()) {
            return Err(PlannerError::Invalid("lane_dist must be > 0".into()));
        }
        if self.safety_eps < T::zero() {
            return Err(PlannerError::Invalid("safety_eps must be >= 0".into()));
        }
        if self.amp_lane < T::zero() || self.road_gain < T::zero() {
            return Err(PlannerError::Invalid(
                "lane amplitude and road gain must be >= 0 to keep the field nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Obstacles plus road: everything the potential field knows about.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialScene<T> {
    pub obstacles: Vec<ObstacleDesc<T>>,
    pub road: RoadDesc<T>,
}

/// Quintic lateral path over normalized progress `s in [0, 1]` with zero
/// first and second derivatives at both ends (smoothstep form).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticRef<T> {
    /// Polynomial coefficients, constant term first.
    pub coeffs: [T; 6],
    pub y_start: T,
    pub y_end: T,
    /// Maneuver length along the road (m).
    pub x_m: T,
}

impl<T: Real> QuinticRef<T> {
    /// Lateral position at progress `s` (clamped to `[0, 1]`).
    pub fn eval(&self, s: T) -> T {
        let s = s.clamp(T::zero(), T::one());
        let mut acc = T::zero();
        for &c in self.coeffs.iter().rev() {
            acc = acc * s + c;
        }
        acc
    }

    /// dy/ds at progress `s`.
    pub fn eval_ds(&self, s: T) -> T {
        let s = s.clamp(T::zero(), T::one());
        let mut acc = T::zero();
        for k in (1..6).rev() {
            acc = acc * s + self.coeffs[k] * lit::<T>(k as f64);
        }
        acc
    }

    /// d2y/ds2 at progress `s`.
    pub fn eval_dss(&self, s: T) -> T {
        let s = s.clamp(T::zero(), T::one());
        let mut acc = T::zero();
        for k in (2..6).rev() {
            acc = acc * s + self.coeffs[k] * lit::<T>((k * (k - 1)) as f64);
        }
        acc
    }
}

/// The unique quintic with `y(0) = y0`, `y(1) = y1`, and zero first and
/// second derivatives at both ends: `y0 + (y1-y0)(10s^3 - 15s^4 + 6s^5)`.
pub fn quintic_path<T: Real>(y0: T, y1: T, x_m: T) -> QuinticRef<T> {
    assert!(x_m > T::zero(), "maneuver length must be positive");
    let d = y1 - y0;
    QuinticRef {
        coeffs: [
            y0,
            T::zero(),
            T::zero(),
            lit::<T>(10.0) * d,
            lit::<T>(-15.0) * d,
            lit::<T>(6.0) * d,
        ],
        y_start: y0,
        y_end: y1,
        x_m,
    }
}

/// Floor applied to the longitudinal convergence coefficient so that the
/// degenerate zero (ego speed equal to obstacle speed at the obstacle
/// abscissa) cannot occur.
const SIGMA_X_FLOOR: f64 = 0.25;

/// Summed obstacle potential at `(x_glo, y_glo)` for an ego moving at
/// `x_dot`. The longitudinal coefficient mixes `(m/s)^2` and `m^2`
/// operands inside the min; that is how the formulation is printed and it
/// is kept literally.
pub fn obstacle_potential<T: Real>(
    scene: &PotentialScene<T>,
    x_glo: T,
    y_glo: T,
    x_dot: T,
) -> Result<T, PlannerError> {
    let mut total = T::zero();
    for obs in &scene.obstacles {
        let dx = x_glo - obs.x_obs;
        let dy = y_glo - obs.y_obs;
        let sigma_x = if x_glo <= obs.x_obs {
            let dv2 = (x_dot - obs.x_dot_obs) * (x_dot - obs.x_dot_obs);
            dv2.min(dx * dx)
        } else {
            let reach = obs.length_obs + scene.road.safety_eps;
            reach * reach
        };
        let sigma_x = sigma_x.max(lit(SIGMA_X_FLOOR));
        let half_w = obs.width_obs / lit::<T>(2.0);
        let sigma_y = half_w * half_w;
        if !(sigma_y > T::zero()) {
            return Err(PlannerError::DegenerateSigma(format!(
                "sigma_y = {} for obstacle at x = {}",
                sigma_y.as_f64(),
                obs.x_obs.as_f64()
            )));
        }
        let two = lit::<T>(2.0);
        let arg = dx * dx / (two * sigma_x) + dy * dy / (two * sigma_y);
        total += obs.amp * (-arg.powf(obs.shape_c)).exp();
    }
    Ok(total)
}

/// Summed lane-mark potential `sum_k A_lane exp(-(y - y_k)^2 / d^2)`.
pub fn lane_potential<T: Real>(road: &RoadDesc<T>, y_glo: T) -> T {
    let mut total = T::zero();
    for &mark in &road.lane_marks {
        let dy = y_glo - mark;
        total += road.amp_lane * (-(dy * dy) / (road.lane_dist * road.lane_dist)).exp();
    }
    total
}

/// Road-boundary potential
/// `eta/2 * (1/(y - y_max) - 1/(y - y_min))^2`, infinite at the
/// boundaries and rejected outside the open interval.
pub fn road_potential<T: Real>(road: &RoadDesc<T>, y_glo: T) -> Result<T, PlannerError> {
    if !(y_glo > road.y_road_min && y_glo < road.y_road_max) {
        return Err(PlannerError::OutOfRoad {
            y: y_glo.as_f64(),
            min: road.y_road_min.as_f64(),
            max: road.y_road_max.as_f64(),
        });
    }
    let term = T::one() / (y_glo - road.y_road_max) - T::one() / (y_glo - road.y_road_min);
    Ok(lit::<T>(0.5) * road.road_gain * term * term)
}

/// Full field `J_syn = J_obs + J_lane + J_road`.
pub fn total_potential<T: Real>(
    scene: &PotentialScene<T>,
    x_glo: T,
    y_glo: T,
    x_dot: T,
) -> Result<T, PlannerError> {
    Ok(obstacle_potential(scene, x_glo, y_glo, x_dot)?
        + lane_potential(&scene.road, y_glo)
        + road_potential(&scene.road, y_glo)?)
}

/// Planner cost weights and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerWeights<T> {
    pub q_traj: T,
    pub r_traj: T,
    pub s_traj: T,
    /// Horizon steps; the trajectory carries `n_traj + 1` samples.
    pub n_traj: usize,
    /// Planner sampling time (s).
    pub ts_plan: T,
}

impl<T: Real> PlannerWeights<T> {
    /// Defaults matched to the bundled scenarios: the interaction weight
    /// dominates obstacle avoidance without pushing the lane-keep
    /// solution off center on an empty road.
    pub fn default_weights() -> Self {
        Self {
            q_traj: lit(1.0),
            r_traj: lit(0.5),
            s_traj: lit(100.0),
            n_traj: 1500,
            ts_plan: lit(0.01),
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.n_traj < 2 {
            return Err(PlannerError::Invalid("n_traj must be >= 2".into()));
        }
        if !(self.ts_plan > T::zero()) {
            return Err(PlannerError::Invalid("ts_plan must be > 0".into()));
        }
        if self.q_traj < T::zero() || self.r_traj < T::zero() || self.s_traj < T::zero() {
            return Err(PlannerError::Invalid("weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Finite candidate family: `target_lanes x target_offsets x lengths`
/// plus a lane-keep candidate at the current lateral position.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSetSpec<T> {
    /// Candidate target lane centerlines (m).
    pub target_lanes: Vec<T>,
    /// Lateral offsets applied around each target lane (m).
    pub target_offsets: Vec<T>,
    /// Maneuver lengths (m).
    pub maneuver_lengths: Vec<T>,
    /// Lane the tracking reference aims at.
    pub commanded_lane: T,
    /// Candidates whose field value exceeds this anywhere are discarded.
    pub potential_ceiling: T,
}

impl<T: Real> CandidateSetSpec<T> {
    pub fn from_road(road: &RoadDesc<T>, commanded_lane: T) -> Self {
        Self {
            target_lanes: road.lane_marks.clone(),
            target_offsets: vec![lit(-0.5), T::zero(), lit(0.5)],
            maneuver_lengths: vec![lit(40.0), lit(60.0), lit(80.0)],
            commanded_lane,
            potential_ceiling: lit(1e6),
        }
    }
}

/// Ego state the planner anchors at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoPlanState<T> {
    pub x: T,
    pub y: T,
    pub v_x: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample<T> {
    pub x_glo: T,
    pub y_glo: T,
    pub psi_ref: T,
    pub psi_dot_ref: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown<T> {
    pub tracking: T,
    pub input: T,
    pub potential: T,
    pub total: T,
}

/// Winning trajectory: `n_traj + 1` samples at `ts_plan` spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory<T> {
    pub samples: Vec<TrajectorySample<T>>,
    pub cost: CostBreakdown<T>,
    /// Terminal lateral target of the winning candidate.
    pub target_y: T,
    /// Maneuver length of the winning candidate (m).
    pub maneuver_length: T,
    /// Index of the winner in the enumerated candidate list.
    pub candidate_index: usize,
}

struct Candidate<T> {
    path: QuinticRef<T>,
    target_y: T,
}

fn enumerate_candidates<T: Real>(ego: &EgoPlanState<T>, spec: &CandidateSetSpec<T>) -> Vec<Candidate<T>> {
    let keep_len = spec.maneuver_lengths.first().copied().unwrap_or_else(|| lit(40.0));
    let mut out = vec![Candidate {
        path: quintic_path(ego.y, ego.y, keep_len),
        target_y: ego.y,
    }];
    for &lane in &spec.target_lanes {
        for &off in &spec.target_offsets {
            for &len in &spec.maneuver_lengths {
                let target = lane + off;
                out.push(Candidate {
                    path: quintic_path(ego.y, target, len),
                    target_y: target,
                });
            }
        }
    }
    out
}

/// Scores every candidate and returns the minimizer; ties break toward
/// the lowest candidate index. Candidate scoring is externally pure:
/// identical inputs always select the same winner.
pub fn plan_trajectory<T: Real>(
    scene: &PotentialScene<T>,
    ego: &EgoPlanState<T>,
    weights: &PlannerWeights<T>,
    spec: &CandidateSetSpec<T>,
) -> Result<PlannedTrajectory<T>, PlannerError> {
    weights.validate()?;
    scene.road.validate()?;
    for obs in &scene.obstacles {
        obs.validate()?;
    }
    if !(ego.y > scene.road.y_road_min && ego.y < scene.road.y_road_max) {
        return Err(PlannerError::OutOfRoad {
            y: ego.y.as_f64(),
            min: scene.road.y_road_min.as_f64(),
            max: scene.road.y_road_max.as_f64(),
        });
    }

    let n = weights.n_traj;
    let ts = weights.ts_plan;
    let step = ego.v_x * ts;
    let candidates = enumerate_candidates(ego, spec);

    let mut best: Option<(usize, CostBreakdown<T>, Vec<T>)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        // reference toward the commanded lane with this candidate's length
        let reference = quintic_path(ego.y, spec.commanded_lane, cand.path.x_m);

        let mut ys = Vec::with_capacity(n + 1);
        let mut feasible = true;
        let mut tracking = T::zero();
        let mut potential = T::zero();
        for k in 0..=n {
            let x = ego.x + step * lit::<T>(k as f64);
            let s = (x - ego.x) / cand.path.x_m;
            let y = cand.path.eval(s);
            ys.push(y);
            if k >= 1 {
                let y_ref = reference.eval(s);
                let e = y - y_ref;
                tracking += e * e;
                match total_potential(scene, x, y, ego.v_x) {
                    Ok(j) if j <= spec.potential_ceiling => potential += j,
                    _ => {
                        feasible = false;
                        break;
                    }
                }
            }
        }
        if !feasible {
            continue;
        }
        let mut input = T::zero();
        for k in 0..n.saturating_sub(1) {
            let u = (ys[k + 2] - lit::<T>(2.0) * ys[k + 1] + ys[k]) / (ts * ts);
            input += u * u;
        }
        let cost = CostBreakdown {
            tracking: weights.q_traj * tracking,
            input: weights.r_traj * input,
            potential: weights.s_traj * potential,
            total: weights.q_traj * tracking + weights.r_traj * input + weights.s_traj * potential,
        };
        let better = match &best {
            None => true,
            Some((_, c, _)) => cost.total < c.total,
        };
        if better {
            best = Some((idx, cost, ys));
        }
    }

    let (idx, cost, ys) = best.ok_or(PlannerError::NoFeasibleCandidate(candidates.len()))?;
    let cand = &candidates[idx];

    // headings from path tangents, yaw-rate reference by first difference
    let mut samples = Vec::with_capacity(n + 1);
    let mut psis = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k < n {
            psis.push((ys[k + 1] - ys[k]).atan2(step));
        } else {
            psis.push(psis[n - 1]);
        }
    }
    for k in 0..=n {
        let psi_dot = if k < n {
            (psis[k + 1] - psis[k]) / ts
        } else {
            T::zero()
        };
        samples.push(TrajectorySample {
            x_glo: ego.x + step * lit::<T>(k as f64),
            y_glo: ys[k],
            psi_ref: psis[k],
            psi_dot_ref: psi_dot,
        });
    }

    Ok(PlannedTrajectory {
        samples,
        cost,
        target_y: cand.target_y,
        maneuver_length: cand.path.x_m,
        candidate_index: idx,
    })
}

/// Regular grid of the full field, for the potential-map export. Cells
/// outside the road or above `cap` saturate at `cap`.
pub struct PotentialGrid<T> {
    pub xs: Vec<T>,
    pub ys: Vec<T>,
    /// Row-major `[iy][ix]` field values.
    pub values: Vec<Vec<T>>,
}

pub fn potential_grid<T: Real>(
    scene: &PotentialScene<T>,
    x_range: (T, T),
    nx: usize,
    ny: usize,
    x_dot: T,
    cap: T,
) -> Result<PotentialGrid<T>, PlannerError> {
    if nx < 10 || ny < 10 {
        return Err(PlannerError::Invalid("grid resolution must be >= 10 per axis".into()));
    }
    let road = &scene.road;
    let xs: Vec<T> = (0..nx)
        .map(|i| x_range.0 + (x_range.1 - x_range.0) * lit::<T>(i as f64 / (nx - 1) as f64))
        .collect();
    let ys: Vec<T> = (0..ny)
        .map(|j| {
            road.y_road_min
                + (road.y_road_max - road.y_road_min) * lit::<T>(j as f64 / (ny - 1) as f64)
        })
        .collect();
    let mut values = Vec::with_capacity(ny);
    for &y in &ys {
        let mut row = Vec::with_capacity(nx);
        for &x in &xs {
            let v = match total_potential(scene, x, y, x_dot) {
                Ok(j) => j.min(cap),
                Err(_) => cap,
            };
            row.push(v);
        }
        values.push(row);
    }
    Ok(PotentialGrid { xs, ys, values })
}
