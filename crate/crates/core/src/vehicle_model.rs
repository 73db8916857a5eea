//! Lateral tracking-error model of the ego vehicle and its polytopic
//! LPV uncertainty description.
//!
//! The chain is: continuous error dynamics -> forward-Euler discretization
//! -> extension with the previous steering angle (input becomes the
//! steering rate) -> augmentation with the yaw-rate reference. Forward
//! Euler keeps every matrix entry affine in the cornering stiffnesses, so
//! the four stiffness corners cover the whole uncertainty box exactly.
//!
//! State ordering is fixed everywhere, including persistence:
//! `[e_y, e_y_dot, e_psi, e_psi_dot, delta_f, psi_dot_ref]`.

use crate::num::{lit, Real};
use nalgebra::{Matrix4, Matrix6, SMatrix, Vector4, Vector6};
use thiserror::Error;

pub type Matrix5<T> = SMatrix<T, 5, 5>;
pub type Vector5<T> = SMatrix<T, 5, 1>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("longitudinal speed must be positive, got {v_x} m/s")]
    SingularSpeed { v_x: f64 },
    #[error("invalid chassis parameters: {0}")]
    Invalid(String),
}

/// Single-track chassis parameters at a fixed longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChassisParams<T> {
    /// Total mass (kg).
    pub m: T,
    /// Yaw inertia (kg m^2).
    pub i_z: T,
    /// CG to front axle (m).
    pub l_f: T,
    /// CG to rear axle (m).
    pub l_r: T,
    /// Front cornering stiffness per tire pair (N/rad).
    pub c_f: T,
    /// Rear cornering stiffness per tire pair (N/rad).
    pub c_r: T,
    /// Longitudinal speed (m/s); the model is singular at zero.
    pub v_x: T,
}

impl<T: Real> ChassisParams<T> {
    /// Mid-size sedan defaults used by the bundled scenarios.
    pub fn default_sedan() -> Self {
        Self {
            m: lit(1500.0),
            i_z: lit(2500.0),
            l_f: lit(1.2),
            l_r: lit(1.4),
            c_f: lit(80_000.0),
            c_r: lit(80_000.0),
            v_x: lit(15.0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::Invalid(what.to_string()));
        if !(self.m > T::zero()) {
            return bad("m must be > 0");
        }
        if !(self.i_z > T::zero()) {
            return bad("i_z must be > 0");
        }
        if !(self.l_f > T::zero()) || !(self.l_r > T::zero()) {
            return bad("axle distances must be > 0");
        }
        if !(self.c_f > T::zero()) || !(self.c_r > T::zero()) {
            return bad("cornering stiffnesses must be > 0");
        }
        if !(self.v_x > T::zero()) {
            return Err(ModelError::SingularSpeed {
                v_x: self.v_x.as_f64(),
            });
        }
        Ok(())
    }

    pub fn with_stiffness(&self, c_f: T, c_r: T) -> Self {
        Self { c_f, c_r, ..*self }
    }
}

/// Tracking-error state `[e_y, e_y_dot, e_psi, e_psi_dot]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState<T> {
    pub e_y: T,
    pub e_y_dot: T,
    pub e_psi: T,
    pub e_psi_dot: T,
}

impl<T: Real> ErrorState<T> {
    pub fn as_vector(&self) -> Vector4<T> {
        Vector4::new(self.e_y, self.e_y_dot, self.e_psi, self.e_psi_dot)
    }
}

/// Discrete-time 4-state tracking error model.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel<T> {
    pub a_d: Matrix4<T>,
    pub b_d: Vector4<T>,
    pub e_d: Vector4<T>,
    /// Sampling time (s).
    pub ts: T,
}

/// Six-state augmented model `[error state, delta_f, psi_dot_ref]` with
/// the steering rate as input.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel<T> {
    pub a: Matrix6<T>,
    pub b: Vector6<T>,
}

/// Multiplicative stiffness uncertainty box
/// `C_nominal / kappa <= C <= kappa * C_nominal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyBox<T> {
    pub kappa: T,
    pub c_f_nominal: T,
    pub c_r_nominal: T,
}

impl<T: Real> UncertaintyBox<T> {
    pub fn new(kappa: T, c_f_nominal: T, c_r_nominal: T) -> Result<Self, ModelError> {
        if kappa < T::one() {
            return Err(ModelError::Invalid("kappa must be >= 1".to_string()));
        }
        Ok(Self {
            kappa,
            c_f_nominal,
            c_r_nominal,
        })
    }

    /// `(low, high)` endpoints for the front stiffness.
    pub fn c_f_range(&self) -> (T, T) {
        (self.c_f_nominal / self.kappa, self.kappa * self.c_f_nominal)
    }

    pub fn c_r_range(&self) -> (T, T) {
        (self.c_r_nominal / self.kappa, self.kappa * self.c_r_nominal)
    }
}

/// Four-vertex polytope of augmented models, one per stiffness corner in
/// the fixed order `(--, -+, +-, ++)` for front/rear.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeModel<T> {
    pub vertices: [AugmentedModel<T>; 4],
    /// Stiffness corner `(c_f, c_r)` that produced each vertex.
    pub corners: [(T, T); 4],
    pub ts: T,
}

/// Continuous-time matrices `(A_c, B_c, E_c)` of the tracking error model.
pub fn continuous_error_dynamics<T: Real>(
    p: &ChassisParams<T>,
) -> Result<(Matrix4<T>, Vector4<T>, Vector4<T>), ModelError> {
    if p.v_x <= T::zero() {
        return Err(ModelError::SingularSpeed {
            v_x: p.v_x.as_f64(),
        });
    }
    p.validate()?;
    let two = lit::<T>(2.0);
    let sum_c = two * (p.c_f + p.c_r);
    let diff_lc = two * (p.l_f * p.c_f - p.l_r * p.c_r);
    let sum_l2c = two * (p.l_f * p.l_f * p.c_f + p.l_r * p.l_r * p.c_r);

    let mut a = Matrix4::zeros();
    a[(0, 1)] = T::one();
    a[(1, 1)] = -sum_c / (p.m * p.v_x);
    a[(1, 2)] = sum_c / p.m;
    a[(1, 3)] = -diff_lc / (p.m * p.v_x);
    a[(2, 3)] = T::one();
    a[(3, 1)] = -diff_lc / (p.i_z * p.v_x);
    a[(3, 2)] = diff_lc / p.i_z;
    a[(3, 3)] = -sum_l2c / (p.i_z * p.v_x);

    let b = Vector4::new(T::zero(), two * p.c_f / p.m, T::zero(), two * p.l_f * p.c_f / p.i_z);
    let e = Vector4::new(
        T::zero(),
        -(diff_lc / (p.m * p.v_x) + p.v_x),
        T::zero(),
        -sum_l2c / (p.i_z * p.v_x),
    );
    Ok((a, b, e))
}

/// Forward-Euler discretization `A_d = I + ts A_c`, `B_d = ts B_c`,
/// `E_d = ts E_c`.
pub fn discretize<T: Real>(
    a_c: &Matrix4<T>,
    b_c: &Vector4<T>,
    e_c: &Vector4<T>,
    ts: T,
) -> DiscreteModel<T> {
    assert!(ts > T::zero(), "sampling time must be positive");
    DiscreteModel {
        a_d: Matrix4::identity() + a_c * ts,
        b_d: b_c * ts,
        e_d: e_c * ts,
        ts,
    }
}

/// Extended 5-state form: the state gains the previous input `delta_f`
/// and the control input becomes the steering rate `du`.
pub fn extend_model<T: Real>(d: &DiscreteModel<T>) -> (Matrix5<T>, Vector5<T>, Vector5<T>) {
    let mut a = Matrix5::zeros();
    a.fixed_view_mut::<4, 4>(0, 0).copy_from(&d.a_d);
    a.fixed_view_mut::<4, 1>(0, 4).copy_from(&d.b_d);
    a[(4, 4)] = T::one();

    let mut b = Vector5::zeros();
    b.fixed_view_mut::<4, 1>(0, 0).copy_from(&d.b_d);
    b[4] = T::one();

    let mut e = Vector5::zeros();
    e.fixed_view_mut::<4, 1>(0, 0).copy_from(&d.e_d);
    (a, b, e)
}

/// Augmented 6-state form carrying the yaw-rate reference as a state
/// with the constant-reference assumption `psi_dot_ref(k+1) = psi_dot_ref(k)`.
pub fn augment_model<T: Real>(
    a_ext: &Matrix5<T>,
    b_ext: &Vector5<T>,
    e_ext: &Vector5<T>,
) -> AugmentedModel<T> {
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<5, 5>(0, 0).copy_from(a_ext);
    a.fixed_view_mut::<5, 1>(0, 5).copy_from(e_ext);
    a[(5, 5)] = T::one();

    let mut b = Vector6::zeros();
    b.fixed_view_mut::<5, 1>(0, 0).copy_from(b_ext);
    AugmentedModel { a, b }
}

/// Builds the augmented model for one chassis in a single call.
pub fn augmented_from_chassis<T: Real>(
    p: &ChassisParams<T>,
    ts: T,
) -> Result<AugmentedModel<T>, ModelError> {
    let (a_c, b_c, e_c) = continuous_error_dynamics(p)?;
    let d = discretize(&a_c, &b_c, &e_c, ts);
    let (a_ext, b_ext, e_ext) = extend_model(&d);
    Ok(augment_model(&a_ext, &b_ext, &e_ext))
}

/// Stiffness corners in the fixed order `(--, -+, +-, ++)`.
pub fn stiffness_corners<T: Real>(u: &UncertaintyBox<T>) -> [(T, T); 4] {
    let (f_lo, f_hi) = u.c_f_range();
    let (r_lo, r_hi) = u.c_r_range();
    [(f_lo, r_lo), (f_lo, r_hi), (f_hi, r_lo), (f_hi, r_hi)]
}

/// Four augmented vertex models at the stiffness corners.
pub fn polytope_vertices<T: Real>(
    p: &ChassisParams<T>,
    u: &UncertaintyBox<T>,
    ts: T,
) -> Result<PolytopeModel<T>, ModelError> {
    if u.kappa < T::one() {
        return Err(ModelError::Invalid("kappa must be >= 1".to_string()));
    }
    let corners = stiffness_corners(u);
    let mut vertices = Vec::with_capacity(4);
    for &(c_f, c_r) in &corners {
        vertices.push(augmented_from_chassis(&p.with_stiffness(c_f, c_r), ts)?);
    }
    let vertices: [AugmentedModel<T>; 4] = vertices.try_into().expect("exactly four corners");
    Ok(PolytopeModel {
        vertices,
        corners,
        ts,
    })
}

/// Four discrete 4-state vertex models (no extension or augmentation),
/// used by the controller variant that keeps the steering angle as input.
pub fn error_polytope_vertices<T: Real>(
    p: &ChassisParams<T>,
    u: &UncertaintyBox<T>,
    ts: T,
) -> Result<[DiscreteModel<T>; 4], ModelError> {
    let corners = stiffness_corners(u);
    let mut out = Vec::with_capacity(4);
    for &(c_f, c_r) in &corners {
        let (a_c, b_c, e_c) = continuous_error_dynamics(&p.with_stiffness(c_f, c_r))?;
        out.push(discretize(&a_c, &b_c, &e_c, ts));
    }
    Ok(out.try_into().expect("exactly four corners"))
}
