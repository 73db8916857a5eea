//! The proposed offline controller and the three baselines.
//!
//! All four controllers expose one trait so the simulator can swap them
//! freely. Every controller applies the same physical steering clip
//! after integrating its command, which keeps the comparisons fair.

use super::{lookup_gain, solve_rmpc_sdp, refined_inverse, LookupTable, RmpcWeights, VertexSet};
use crate::num::{lit, Real};
use crate::sdp::SdpSettings;
use crate::vehicle_model::{ErrorState, Matrix5, Vector5};
use nalgebra::{DMatrix, DVector};
use std::time::Instant;

/// Physical steering range (rad), applied after integration everywhere.
pub const STEERING_LIMIT: f64 = 0.5;

/// Mutable controller memory.
#[derive(Debug, Clone)]
pub struct ControllerState<T> {
    /// Previously applied steering angle (rad).
    pub delta_f: T,
    /// Lookup-table index used on the previous step, if any.
    pub last_index: Option<usize>,
    /// Wall-clock time of the last internal solve (ms); zero for table
    /// lookups.
    pub last_solve_ms: f64,
}

impl<T: Real> Default for ControllerState<T> {
    fn default() -> Self {
        Self {
            delta_f: T::zero(),
            last_index: None,
            last_solve_ms: 0.0,
        }
    }
}

/// One control step's outcome.
#[derive(Debug, Clone, Copy)]
pub struct ControlOutput<T> {
    /// Steering command after integration and the physical clip (rad).
    pub delta_f: T,
    /// Applied steering change this step (rad).
    pub du_applied: T,
    /// Feedback command before any clipping (rad or rad/step).
    pub du_raw: T,
    pub table_index: Option<usize>,
    pub out_of_region: bool,
    /// Set when the controller fell back to a degraded mode (infeasible
    /// online solve, singular steady-state system).
    pub degraded: bool,
}

/// Lateral tracking controller interface used by the simulator.
pub trait LateralController<T: Real> {
    fn name(&self) -> &'static str;
    /// Computes the steering command from the tracking error and the
    /// current yaw-rate reference sample.
    fn step(&mut self, err: &ErrorState<T>, psi_dot_ref: T) -> ControlOutput<T>;
    fn reset(&mut self);
    fn state(&self) -> &ControllerState<T>;
}

fn augmented_state<T: Real>(err: &ErrorState<T>, delta_f: T, psi_dot_ref: T) -> DVector<T> {
    DVector::from_vec(vec![
        err.e_y,
        err.e_y_dot,
        err.e_psi,
        err.e_psi_dot,
        delta_f,
        psi_dot_ref,
    ])
}

/// Integrates a rate command into the steering state under both clips.
fn apply_rate<T: Real>(cs: &mut ControllerState<T>, du_raw: T, du_max: T) -> (T, T) {
    let du = du_raw.clamp(-du_max, du_max);
    let limit = lit::<T>(STEERING_LIMIT);
    let next = (cs.delta_f + du).clamp(-limit, limit);
    let applied = next - cs.delta_f;
    cs.delta_f = next;
    (next, applied)
}

/// The proposed controller: augmented-model gains from the offline
/// nested-ellipsoid table.
pub struct OfflineRmpcController<T> {
    table: LookupTable<T>,
    du_max: T,
    cs: ControllerState<T>,
}

impl<T: Real> OfflineRmpcController<T> {
    pub fn new(table: LookupTable<T>, du_max: T) -> Self {
        assert_eq!(table.state_dim(), 6, "augmented table required");
        assert!(!table.is_empty());
        Self {
            table,
            du_max,
            cs: ControllerState::default(),
        }
    }

    pub fn table(&self) -> &LookupTable<T> {
        &self.table
    }
}

impl<T: Real> LateralController<T> for OfflineRmpcController<T> {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn step(&mut self, err: &ErrorState<T>, psi_dot_ref: T) -> ControlOutput<T> {
        let xi = augmented_state(err, self.cs.delta_f, psi_dot_ref);
        let (entry, index, out_of_region) = lookup_gain(&self.table, &xi);
        let du_raw = (&entry.k_gain * &xi)[(0, 0)];
        let (delta_f, du_applied) = apply_rate(&mut self.cs, du_raw, self.du_max);
        self.cs.last_index = Some(index);
        self.cs.last_solve_ms = 0.0;
        ControlOutput {
            delta_f,
            du_applied,
            du_raw,
            table_index: Some(index),
            out_of_region,
            degraded: false,
        }
    }

    fn reset(&mut self) {
        self.cs = ControllerState::default();
    }

    fn state(&self) -> &ControllerState<T> {
        &self.cs
    }
}

/// Baseline without the augmented model: 4-state gains command the
/// steering angle directly, so the steering rate is emergent and
/// unconstrained.
pub struct OfflineNoAmController<T> {
    table: LookupTable<T>,
    cs: ControllerState<T>,
}

impl<T: Real> OfflineNoAmController<T> {
    pub fn new(table: LookupTable<T>) -> Self {
        assert_eq!(table.state_dim(), 4, "4-state table required");
        assert!(!table.is_empty());
        Self {
            table,
            cs: ControllerState::default(),
        }
    }
}

impl<T: Real> LateralController<T> for OfflineNoAmController<T> {
    fn name(&self) -> &'static str {
        "offline-no-am"
    }

    fn step(&mut self, err: &ErrorState<T>, _psi_dot_ref: T) -> ControlOutput<T> {
        let xi = err.as_vector();
        let xi = DVector::from_vec(vec![xi[0], xi[1], xi[2], xi[3]]);
        let (entry, index, out_of_region) = lookup_gain(&self.table, &xi);
        let u_raw = (&entry.k_gain * &xi)[(0, 0)];
        let limit = lit::<T>(STEERING_LIMIT);
        let next = u_raw.clamp(-limit, limit);
        let du = next - self.cs.delta_f;
        self.cs.delta_f = next;
        self.cs.last_index = Some(index);
        self.cs.last_solve_ms = 0.0;
        ControlOutput {
            delta_f: next,
            du_applied: du,
            du_raw: du,
            table_index: Some(index),
            out_of_region,
            degraded: false,
        }
    }

    fn reset(&mut self) {
        self.cs = ControllerState::default();
    }

    fn state(&self) -> &ControllerState<T> {
        &self.cs
    }
}

/// Offset baseline: table gains plus a steady-state rate offset that
/// places the closed-loop equilibrium at zero lateral error for the
/// current yaw-rate reference.
pub struct OffsetOfflineController<T> {
    table: LookupTable<T>,
    a_ext: DMatrix<T>,
    b_ext: DMatrix<T>,
    e_ext: DMatrix<T>,
    du_max: T,
    cs: ControllerState<T>,
}

impl<T: Real> OffsetOfflineController<T> {
    pub fn new(
        table: LookupTable<T>,
        a_ext: &Matrix5<T>,
        b_ext: &Vector5<T>,
        e_ext: &Vector5<T>,
        du_max: T,
    ) -> Self {
        assert_eq!(table.state_dim(), 6, "augmented table required");
        Self {
            table,
            a_ext: DMatrix::from_fn(5, 5, |i, j| a_ext[(i, j)]),
            b_ext: DMatrix::from_fn(5, 1, |i, _| b_ext[i]),
            e_ext: DMatrix::from_fn(5, 1, |i, _| e_ext[i]),
            du_max,
            cs: ControllerState::default(),
        }
    }

    /// Solves the steady-state condition on the extended model in a
    /// least-squares sense: find `(xi_ss, du_ss)` with
    /// `xi_ss = A xi_ss + B (K5 xi_ss + K6 psi_dot_ref + du_ss) + E psi_dot_ref`
    /// and zero steady lateral error. Returns `None` when the system is
    /// rank deficient (the caller falls back to a zero offset).
    pub fn steady_state_offset(&self, k_gain: &DMatrix<T>, psi_dot_ref: T) -> Option<T> {
        let k5 = DMatrix::from_fn(1, 5, |_, j| k_gain[(0, j)]);
        let k6 = k_gain[(0, 5)];
        let mut sys = DMatrix::zeros(6, 6);
        let closed = DMatrix::identity(5, 5) - &self.a_ext - &self.b_ext * &k5;
        sys.view_mut((0, 0), (5, 5)).copy_from(&closed);
        sys.view_mut((0, 5), (5, 1)).copy_from(&(-&self.b_ext));
        sys[(5, 0)] = T::one();
        let mut rhs = DVector::zeros(6);
        let forcing = (&self.b_ext * k6 + &self.e_ext) * psi_dot_ref;
        for i in 0..5 {
            rhs[i] = forcing[(i, 0)];
        }
        let svd = sys.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= smax * lit::<T>(1e-10) {
            return None;
        }
        let sol = svd.solve(&rhs, smax * lit::<T>(1e-12)).ok()?;
        Some(sol[5])
    }
}

impl<T: Real> LateralController<T> for OffsetOfflineController<T> {
    fn name(&self) -> &'static str {
        "offset-offline"
    }

    fn step(&mut self, err: &ErrorState<T>, psi_dot_ref: T) -> ControlOutput<T> {
        let xi = augmented_state(err, self.cs.delta_f, psi_dot_ref);
        let (entry, index, out_of_region) = lookup_gain(&self.table, &xi);
        let feedback = (&entry.k_gain * &xi)[(0, 0)];
        let (offset, degraded) = match self.steady_state_offset(&entry.k_gain, psi_dot_ref) {
            Some(o) => (o, false),
            None => (T::zero(), true),
        };
        let du_raw = feedback + offset;
        let (delta_f, du_applied) = apply_rate(&mut self.cs, du_raw, self.du_max);
        self.cs.last_index = Some(index);
        self.cs.last_solve_ms = 0.0;
        ControlOutput {
            delta_f,
            du_applied,
            du_raw,
            table_index: Some(index),
            out_of_region,
            degraded,
        }
    }

    fn reset(&mut self) {
        self.cs = ControllerState::default();
    }

    fn state(&self) -> &ControllerState<T> {
        &self.cs
    }
}

/// Online baseline: the full synthesis problem is solved from scratch at
/// the measured state on every step.
pub struct OnlineRmpcController<T: Real> {
    vertices: VertexSet<T>,
    weights: RmpcWeights<T>,
    settings: SdpSettings<T>,
    du_max: T,
    cs: ControllerState<T>,
}

impl<T: Real> OnlineRmpcController<T> {
    pub fn new(vertices: VertexSet<T>, weights: RmpcWeights<T>, settings: SdpSettings<T>) -> Self {
        let du_max = weights.du_max;
        Self {
            vertices,
            weights,
            settings,
            du_max,
            cs: ControllerState::default(),
        }
    }
}

impl<T: Real> LateralController<T> for OnlineRmpcController<T> {
    fn name(&self) -> &'static str {
        "online"
    }

    fn step(&mut self, err: &ErrorState<T>, psi_dot_ref: T) -> ControlOutput<T> {
        let xi = augmented_state(err, self.cs.delta_f, psi_dot_ref);
        let started = Instant::now();
        let solved = solve_rmpc_sdp(&xi, &self.vertices, &self.weights, None, &self.settings);
        self.cs.last_solve_ms = started.elapsed().as_secs_f64() * 1e3;
        match solved {
            Ok(sol) => {
                let q_inv = match refined_inverse(&sol.q) {
                    Some(qi) => qi,
                    None => {
                        // hold the previous steering in degraded mode
                        let delta_f = self.cs.delta_f;
                        return ControlOutput {
                            delta_f,
                            du_applied: T::zero(),
                            du_raw: T::zero(),
                            table_index: None,
                            out_of_region: false,
                            degraded: true,
                        };
                    }
                };
                let k = &sol.y * q_inv;
                let du_raw = (&k * &xi)[(0, 0)];
                let (delta_f, du_applied) = apply_rate(&mut self.cs, du_raw, self.du_max);
                ControlOutput {
                    delta_f,
                    du_applied,
                    du_raw,
                    table_index: None,
                    out_of_region: false,
                    degraded: false,
                }
            }
            Err(_) => ControlOutput {
                delta_f: self.cs.delta_f,
                du_applied: T::zero(),
                du_raw: T::zero(),
                table_index: None,
                out_of_region: true,
                degraded: true,
            },
        }
    }

    fn reset(&mut self) {
        self.cs = ControllerState::default();
    }

    fn state(&self) -> &ControllerState<T> {
        &self.cs
    }
}
