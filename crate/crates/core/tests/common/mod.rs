//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use nalgebra::{DMatrix, DVector};
use rmpc_core::lmi_rmpc::{
    build_offline_table, synthesis_vertex_set, LookupTable, RmpcWeights, VertexSet,
    REFERENCE_FORGETTING,
};
use rmpc_core::sdp::SdpSettings;
use rmpc_core::vehicle_model::{
    error_polytope_vertices, polytope_vertices, ChassisParams, UncertaintyBox,
};

pub const TS: f64 = 0.01;
pub const SHRINK: f64 = 0.85;

pub fn chassis() -> ChassisParams<f64> {
    ChassisParams::default_sedan()
}

pub fn seed6() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 0.0, 0.1, 0.0, 0.0, 0.05])
}

pub fn seed4() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 0.0, 0.1, 0.0])
}

/// Synthesis vertex set of the augmented model at uncertainty `kappa`.
pub fn vertices6(kappa: f64) -> VertexSet<f64> {
    let p = chassis();
    let u = UncertaintyBox::new(kappa, p.c_f, p.c_r).unwrap();
    let poly = polytope_vertices(&p, &u, TS).unwrap();
    synthesis_vertex_set(&poly, REFERENCE_FORGETTING)
}

pub fn vertices4(kappa: f64) -> VertexSet<f64> {
    let p = chassis();
    let u = UncertaintyBox::new(kappa, p.c_f, p.c_r).unwrap();
    let models = error_polytope_vertices(&p, &u, TS).unwrap();
    VertexSet::from_error_models(&models)
}

pub fn default_table6(entries: usize) -> LookupTable<f64> {
    build_offline_table(
        &seed6(),
        entries,
        &vertices6(1.3),
        &RmpcWeights::default_augmented(),
        SHRINK,
        TS,
        &SdpSettings::default(),
    )
    .unwrap()
}

pub fn default_table4(entries: usize) -> LookupTable<f64> {
    build_offline_table(
        &seed4(),
        entries,
        &vertices4(1.3),
        &RmpcWeights::default_error_only(),
        SHRINK,
        TS,
        &SdpSettings::default(),
    )
    .unwrap()
}

/// Independent discrete-Riccati value-iteration oracle. Returns the cost
/// matrix and the LQR gain in the `u = -K x` convention.
pub fn dare_value_iteration(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: f64,
    tol: f64,
    max_iter: usize,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let mut p = q.clone();
    for _ in 0..max_iter {
        let btp = b.transpose() * &p;
        let denom = r + (&btp * b)[(0, 0)];
        let gain = &btp * a / denom; // 1 x n
        let next = a.transpose() * &p * a - (a.transpose() * &p * b) * &gain + q;
        let next = (&next + next.transpose()) * 0.5;
        let delta = (&next - &p).norm();
        p = next;
        if delta < tol {
            let btp = b.transpose() * &p;
            let denom = r + (&btp * b)[(0, 0)];
            let gain = &btp * a / denom;
            return Some((p, gain));
        }
    }
    None
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}
