//! Intelligent Driver Model car following for the surrounding human vehicles.
//!
//! Convention: the relative speed of follower `i` is `dv = v_i - v_{i-1}`
//! (follower minus leader), so `dv > 0` while closing in and the
//! interaction term of the desired gap grows. Some IDM write-ups use the
//! opposite sign; everything here sticks to the convention above.

use crate::num::{lit, Real};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("bumper gap must be positive, got {gap} m")]
    NonPositiveGap { gap: f64 },
    #[error("vehicle {index} collided: post-step bumper gap {gap} m")]
    CollisionDetected { index: usize, gap: f64 },
    #[error("invalid IDM setup: {0}")]
    Invalid(String),
}

/// Per-vehicle car-following parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams<T> {
    /// Maximum acceleration a (m/s^2).
    pub a_max: T,
    /// Desirable (comfortable) deceleration b (m/s^2).
    pub b_comf: T,
    /// Desired free-road speed (m/s).
    pub v_des: T,
    /// Free acceleration exponent.
    pub delta_exp: T,
    /// Jam gap s0 (m).
    pub s0: T,
    /// Time gap (s).
    pub t_gap: T,
    /// Car length l (m).
    pub length: T,
}

impl<T: Real> IdmParams<T> {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |what: &str| Err(TrafficError::Invalid(what.to_string()));
        if !(self.a_max > T::zero()) {
            return bad("a_max must be > 0");
        }
        if !(self.b_comf > T::zero()) {
            return bad("b_comf must be > 0");
        }
        if !(self.v_des > T::zero()) {
            return bad("v_des must be > 0");
        }
        if !(self.s0 > T::zero()) {
            return bad("s0 must be > 0");
        }
        if !(self.t_gap >= T::zero()) {
            return bad("t_gap must be >= 0");
        }
        if !(self.length > T::zero()) {
            return bad("length must be > 0");
        }
        Ok(())
    }
}

/// Longitudinal kinematic state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongitudinalState<T> {
    /// Position of the front bumper along the lane (m).
    pub x: T,
    /// Speed (m/s), never negative.
    pub v: T,
}

/// Desired gap s* of Eq-style IDM: `s0 + v*T + v*dv / (2 sqrt(a b))`,
/// clamped at zero from below so a strongly opening gap cannot flip the
/// sign of the interaction term.
pub fn desired_gap<T: Real>(p: &IdmParams<T>, v: T, dv: T) -> T {
    let interaction = v * dv / (lit::<T>(2.0) * (p.a_max * p.b_comf).sqrt());
    let s_star = p.s0 + v * p.t_gap + interaction;
    s_star.max(T::zero())
}

/// Follower acceleration `a [1 - (v/v_des)^delta - (s*/s)^2]`.
pub fn idm_acceleration<T: Real>(p: &IdmParams<T>, v: T, s: T, dv: T) -> Result<T, TrafficError> {
    if s <= T::zero() {
        return Err(TrafficError::NonPositiveGap { gap: s.as_f64() });
    }
    let free = (v / p.v_des).powf(p.delta_exp);
    let ratio = desired_gap(p, v, dv) / s;
    Ok(p.a_max * (T::one() - free - ratio * ratio))
}

/// Gap at which the IDM acceleration is exactly zero for a steady speed
/// `v < v_des`: `s*(v, 0) / sqrt(1 - (v/v_des)^delta)`. This is the value
/// a follower platoon converges to behind a constant-speed leader (the
/// plain desired gap is not a fixed point of the model).
pub fn equilibrium_gap<T: Real>(p: &IdmParams<T>, v: T) -> Result<T, TrafficError> {
    let free = (v / p.v_des).powf(p.delta_exp);
    if free >= T::one() {
        return Err(TrafficError::Invalid(
            "equilibrium gap undefined at or above the desired speed".to_string(),
        ));
    }
    Ok(desired_gap(p, v, T::zero()) / (T::one() - free).sqrt())
}

/// Piecewise-constant speed profile for the exogenous platoon leader.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile<T> {
    /// `(start_time, speed)` segments, sorted by start time.
    segments: Vec<(T, T)>,
}

impl<T: Real> SpeedProfile<T> {
    pub fn constant(v: T) -> Self {
        Self {
            segments: vec![(T::zero(), v)],
        }
    }

    pub fn piecewise(segments: Vec<(T, T)>) -> Result<Self, TrafficError> {
        if segments.is_empty() {
            return Err(TrafficError::Invalid("empty speed profile".to_string()));
        }
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(TrafficError::Invalid(
                    "profile start times must be strictly increasing".to_string(),
                ));
            }
        }
        for &(_, v) in &segments {
            if v < T::zero() {
                return Err(TrafficError::Invalid("profile speed must be >= 0".to_string()));
            }
        }
        Ok(Self { segments })
    }

    pub fn speed_at(&self, t: T) -> T {
        let mut v = self.segments[0].1;
        for &(start, speed) in &self.segments {
            if t >= start {
                v = speed;
            } else {
                break;
            }
        }
        v
    }
}

/// One vehicle of the platoon.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle<T> {
    pub state: LongitudinalState<T>,
    pub params: IdmParams<T>,
}

/// Ordered car-following platoon; index 0 is the exogenous leader that
/// tracks a speed profile, every later vehicle follows its predecessor
/// with the IDM. Stepping is pure-value: `step` returns a new platoon.
#[derive(Debug, Clone, PartialEq)]
pub struct Platoon<T> {
    vehicles: Vec<Vehicle<T>>,
    leader_profile: SpeedProfile<T>,
    time: T,
}

impl<T: Real> Platoon<T> {
    pub fn new(vehicles: Vec<Vehicle<T>>, leader_profile: SpeedProfile<T>) -> Result<Self, TrafficError> {
        if vehicles.is_empty() {
            return Err(TrafficError::Invalid("platoon needs at least a leader".to_string()));
        }
        for v in &vehicles {
            v.params.validate()?;
            if v.state.v < T::zero() {
                return Err(TrafficError::Invalid("speed must be >= 0".to_string()));
            }
        }
        let platoon = Self {
            vehicles,
            leader_profile,
            time: T::zero(),
        };
        for i in 1..platoon.vehicles.len() {
            let gap = platoon.gap(i);
            if gap <= T::zero() {
                return Err(TrafficError::NonPositiveGap { gap: gap.as_f64() });
            }
        }
        Ok(platoon)
    }

    pub fn vehicles(&self) -> &[Vehicle<T>] {
        &self.vehicles
    }

    pub fn time(&self) -> T {
        self.time
    }

    /// Bumper gap of follower `i`: `x_{i-1} - x_i - l_{i-1}`.
    pub fn gap(&self, i: usize) -> T {
        debug_assert!(i >= 1);
        self.vehicles[i - 1].state.x - self.vehicles[i].state.x - self.vehicles[i - 1].params.length
    }

    /// Semi-implicit Euler step: speeds update first, positions advance
    /// with the updated speeds. Followers read gaps and relative speeds
    /// from the pre-step snapshot.
    pub fn step(&self, dt: T) -> Result<Self, TrafficError> {
        assert!(dt > T::zero(), "dt must be positive");
        let t_next = self.time + dt;
        let mut next = self.clone();
        next.time = t_next;

        // Leader: exogenous profile.
        let v_lead = self.leader_profile.speed_at(t_next);
        next.vehicles[0].state.v = v_lead;
        next.vehicles[0].state.x = self.vehicles[0].state.x + v_lead * dt;

        for i in 1..self.vehicles.len() {
            let me = &self.vehicles[i];
            let ahead = &self.vehicles[i - 1];
            let s = self.gap(i);
            let dv = me.state.v - ahead.state.v;
            let a = idm_acceleration(&me.params, me.state.v, s, dv)?;
            let v_new = (me.state.v + a * dt).max(T::zero());
            next.vehicles[i].state.v = v_new;
            next.vehicles[i].state.x = me.state.x + v_new * dt;
        }

        for i in 1..next.vehicles.len() {
            let gap = next.gap(i);
            if gap <= T::zero() {
                return Err(TrafficError::CollisionDetected {
                    index: i,
                    gap: gap.as_f64(),
                });
            }
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> IdmParams<f64> {
        IdmParams {
            a_max: 1.5,
            b_comf: 2.0,
            v_des: 30.0,
            delta_exp: 4.0,
            s0: 2.0,
            t_gap: 1.5,
            length: 5.0,
        }
    }

    #[test]
    fn desired_gap_at_rest_is_jam_gap() {
        assert_eq!(desired_gap(&params(), 0.0, 0.0), 2.0);
    }

    #[test]
    fn desired_gap_steady_following() {
        // 2 + 15 * 1.5, interaction term zero
        assert_eq!(desired_gap(&params(), 15.0, 0.0), 24.5);
    }

    #[test]
    fn desired_gap_closing_in() {
        // hand evaluation: 2 + 22.5 + 45 / (2 sqrt(3))
        let expect = 2.0 + 15.0 * 1.5 + 15.0 * 3.0 / (2.0 * 3.0f64.sqrt());
        let got = desired_gap(&params(), 15.0, 3.0);
        assert_relative_eq!(got, expect, max_relative = 1e-12);
        assert_relative_eq!(got, 37.4904, epsilon = 1e-4);
    }

    #[test]
    fn desired_gap_clamps_at_zero() {
        // strongly opening gap would make s* negative without the clamp
        let got = desired_gap(&params(), 10.0, -20.0);
        assert_eq!(got, 0.0);
    }

    #[test]
    fn acceleration_free_road_at_desired_speed() {
        let a = idm_acceleration(&params(), 30.0, 1e9, 0.0).unwrap();
        assert!(a.abs() < 1e-8);
    }

    #[test]
    fn acceleration_from_standstill_is_max() {
        let a = idm_acceleration(&params(), 0.0, 1e9, 0.0).unwrap();
        assert_relative_eq!(a, 1.5, epsilon = 1e-8);
    }

    #[test]
    fn acceleration_closing_in_hand_value() {
        let p = params();
        let s_star = desired_gap(&p, 15.0, 3.0);
        let expect = 1.5 * (1.0 - (15.0f64 / 30.0).powi(4) - (s_star / 30.0).powi(2));
        let got = idm_acceleration(&p, 15.0, 30.0, 3.0).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
        assert_relative_eq!(got, -0.9363, epsilon = 1e-4);
    }

    #[test]
    fn non_positive_gap_is_an_error() {
        assert!(matches!(
            idm_acceleration(&params(), 10.0, 0.0, 0.0),
            Err(TrafficError::NonPositiveGap { .. })
        ));
        assert!(matches!(
            idm_acceleration(&params(), 10.0, -3.0, 0.0),
            Err(TrafficError::NonPositiveGap { .. })
        ));
    }

    #[test]
    fn acceleration_monotone_in_dv_and_gap() {
        let p = params();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let dv = -5.0 + k as f64 * 0.5;
            let a = idm_acceleration(&p, 15.0, 30.0, dv).unwrap();
            assert!(a < prev, "acceleration must strictly decrease in dv");
            prev = a;
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 1..30 {
            let s = 5.0 * k as f64;
            let a = idm_acceleration(&p, 15.0, s, 2.0).unwrap();
            assert!(a > prev, "acceleration must strictly increase in gap");
            prev = a;
        }
    }

    #[test]
    fn zero_acceleration_at_equilibrium_gap() {
        let p = params();
        for &v in &[5.0, 12.0, 20.0, 28.0] {
            let s_eq = equilibrium_gap(&p, v).unwrap();
            let a = idm_acceleration(&p, v, s_eq, 0.0).unwrap();
            assert!(a.abs() < 1e-12, "a({v}) = {a} at s_eq = {s_eq}");
        }
        assert!(equilibrium_gap(&p, 30.0).is_err());
    }

    #[test]
    fn leader_advances_with_constant_profile() {
        let pl = Platoon::new(
            vec![Vehicle {
                state: LongitudinalState { x: 0.0, v: 20.0 },
                params: params(),
            }],
            SpeedProfile::constant(20.0),
        )
        .unwrap();
        let next = pl.step(0.1).unwrap();
        assert_relative_eq!(next.vehicles()[0].state.x, 2.0, max_relative = 1e-12);
        assert_eq!(next.vehicles()[0].state.v, 20.0);
    }

    #[test]
    fn equilibrium_is_a_fixed_point_to_first_order() {
        let p = params();
        let v = 20.0;
        let s_eq = equilibrium_gap(&p, v).unwrap();
        let pl = Platoon::new(
            vec![
                Vehicle {
                    state: LongitudinalState { x: 0.0, v },
                    params: p,
                },
                Vehicle {
                    state: LongitudinalState { x: -(s_eq + p.length), v },
                    params: p,
                },
            ],
            SpeedProfile::constant(v),
        )
        .unwrap();
        let dt = 0.1;
        let next = pl.step(dt).unwrap();
        let gap = next.gap(1);
        // gap preserved to O(dt^2)
        assert!((gap - s_eq).abs() < dt * dt, "gap drift {}", (gap - s_eq).abs());
    }

    #[test]
    fn two_car_platoon_converges_to_equilibrium() {
        let p = params();
        let pl = Platoon::new(
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
        let mut pl = pl;
        let dt = 0.1;
        for _ in 0..3000 {
            pl = pl.step(dt).unwrap();
        }
        let s_eq = equilibrium_gap(&p, 20.0).unwrap();
        assert!((pl.gap(1) - s_eq).abs() < 0.01, "gap {} vs s_eq {}", pl.gap(1), s_eq);
        assert!((pl.vehicles()[1].state.v - 20.0).abs() < 1e-3);
    }

    #[test]
    fn speeds_never_negative() {
        // follower starts fast right behind a slow leader and must brake hard
        let p = params();
        let mut pl = Platoon::new(
            vec![
                Vehicle {
                    state: LongitudinalState { x: 0.0, v: 2.0 },
                    params: p,
                },
                Vehicle {
                    state: LongitudinalState { x: -40.0, v: 25.0 },
                    params: p,
                },
            ],
            SpeedProfile::constant(2.0),
        )
        .unwrap();
        for _ in 0..2000 {
            pl = pl.step(0.1).unwrap();
            assert!(pl.vehicles()[1].state.v >= 0.0);
        }
    }

    #[test]
    fn works_at_f32() {
        let p = IdmParams::<f32> {
            a_max: 1.5,
            b_comf: 2.0,
            v_des: 30.0,
            delta_exp: 4.0,
            s0: 2.0,
            t_gap: 1.5,
            length: 5.0,
        };
        assert!((desired_gap(&p, 15.0, 0.0) - 24.5).abs() < 1e-5);
    }
}
