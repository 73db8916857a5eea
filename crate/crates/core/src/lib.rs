//! Robust lateral MPC synthesis and closed-loop driving simulation.
//!
//! The crate implements a hierarchical highway-driving stack:
//!
//! * [`traffic_idm`] — Intelligent Driver Model platoons for the
//!   surrounding human vehicles;
//! * [`vehicle_model`] — lateral tracking-error models of the ego vehicle
//!   and their four-vertex stiffness-uncertainty polytope;
//! * [`apf_planner`] — artificial-potential-field trajectory selection
//!   over quintic lane-change candidates;
//! * [`sdp`] — a dense primal-dual interior-point solver for linear
//!   matrix inequality problems;
//! * [`lmi_rmpc`] — offline robust-MPC synthesis (nested invariant
//!   ellipsoids with a gain lookup table) plus the three baseline
//!   controllers;
//! * [`sim_engine`] — the closed-loop scenario simulator and metrics;
//! * [`scenario`] — the plain-text scenario file format.
//!
//! All numeric modules are generic over the scalar type through
//! [`num::Real`]; the aliases below fix the default `f64` precision used
//! by the command-line tools.

// validation uses `!(x > 0)` so NaN parameters fail instead of passing
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod num;

pub mod apf_planner;
pub mod lmi_rmpc;
pub mod scenario;
pub mod sdp;
pub mod sim_engine;
pub mod traffic_idm;
pub mod vehicle_model;

pub use num::Real;

/// Default scalar used by synthesis, simulation, and the CLI.
pub type Scalar = f64;

pub type ChassisParams64 = vehicle_model::ChassisParams<Scalar>;
pub type AugmentedModel64 = vehicle_model::AugmentedModel<Scalar>;
pub type PolytopeModel64 = vehicle_model::PolytopeModel<Scalar>;
pub type LookupTable64 = lmi_rmpc::LookupTable<Scalar>;
pub type RmpcWeights64 = lmi_rmpc::RmpcWeights<Scalar>;
pub type ScenarioSpec64 = sim_engine::ScenarioSpec<Scalar>;
pub type SimLog64 = sim_engine::SimLog<Scalar>;
pub type Metrics64 = sim_engine::Metrics<Scalar>;
