//! Offline robust-MPC synthesis over the stiffness polytope.
//!
//! The worst-case infinite-horizon tracking problem is relaxed to a
//! linear SDP in `(gamma, Q, Y)`: minimize the cost bound `gamma`
//! subject to the input-rate LMI, the one-step state-bound LMIs at the
//! four polytope vertices, the Lyapunov-decrease LMIs at the vertices,
//! and membership of the seed state in the ellipsoid `{x : x'Q^-1 x <= 1}`.
//! Solving that problem along a shrinking sequence of seed states, with
//! each ellipsoid forced inside its predecessor, yields the nested
//! lookup table; at runtime the innermost ellipsoid containing the state
//! selects the stored gain `K = Y Q^-1`.
//!
//! One modeling note: the augmented model carries the yaw-rate reference
//! as a marginally stable state (its transition entry is exactly one)
//! that the input cannot reach. A nonzero reference therefore keeps the
//! tracked errors away from zero forever and the infinite-horizon bound
//! has no finite value; as stated, the synthesis problem has empty
//! interior. The synthesis model consequently applies a reference
//! forgetting factor `lambda` slightly below one to that single entry
//! (see [`synthesis_vertex_set`]); the plant, the runtime state, and the
//! model builders are untouched.

mod controllers;
mod persist;

pub use controllers::{
    ControlOutput, ControllerState, LateralController, OfflineNoAmController,
    OfflineRmpcController, OffsetOfflineController, OnlineRmpcController,
};
pub use persist::TableFormatError;

use crate::num::{lit, Real};
use crate::sdp::{self, AffineBlock, SdpError, SdpProblem, SdpSettings};
use crate::vehicle_model::{DiscreteModel, PolytopeModel};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RmpcError {
    #[error("synthesis infeasible at table entry {entry}")]
    Infeasible { entry: usize },
    #[error("SDP backend failed: {0}")]
    SolverFailure(String),
    #[error("state weight has eigenvalue {min_eig} below -1e-10; no real square root")]
    WeightRootFailure { min_eig: f64 },
    #[error("steady-state system is rank deficient")]
    SteadyStateSingular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// Cost weights and constraint bounds of the synthesis problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpcWeights<T> {
    /// State weight, `dim x dim` symmetric PSD.
    pub q_bar: DMatrix<T>,
    /// Scalar input weight, positive.
    pub r_bar: T,
    /// Input bound: steering-rate bound for the augmented design,
    /// steering-angle bound for the 4-state variant (rad).
    pub du_max: T,
    /// Component-wise state bounds.
    pub xi_max: DVector<T>,
}

impl<T: Real> RmpcWeights<T> {
    /// Defaults for the 6-state augmented design: lateral and heading
    /// errors dominate, the input rate stays at realistic steering
    /// hardware levels.
    pub fn default_augmented() -> Self {
        let mut q_bar = DMatrix::zeros(6, 6);
        for (i, v) in [10.0, 1.0, 10.0, 1.0, 0.1, 1e-9].iter().enumerate() {
            q_bar[(i, i)] = lit(*v);
        }
        Self {
            q_bar,
            r_bar: lit(50.0),
            du_max: lit(0.02),
            xi_max: DVector::from_vec(vec![lit(1.5), lit(3.0), lit(0.3), lit(1.0), lit(0.5), lit(1.0)]),
        }
    }

    /// Defaults for the 4-state variant where the steering angle itself
    /// is the input. The small input weight makes this baseline
    /// tracking-prioritized; with no rate in the model its steering rate
    /// is emergent and unconstrained.
    pub fn default_error_only() -> Self {
        let mut q_bar = DMatrix::zeros(4, 4);
        for (i, v) in [50.0, 1.0, 25.0, 1.0].iter().enumerate() {
            q_bar[(i, i)] = lit(*v);
        }
        Self {
            q_bar,
            r_bar: lit(1.0),
            du_max: lit(0.5),
            xi_max: DVector::from_vec(vec![lit(1.5), lit(3.0), lit(0.3), lit(1.0)]),
        }
    }

    pub fn dim(&self) -> usize {
        self.q_bar.nrows()
    }

    pub fn validate(&self) -> Result<(), RmpcError> {
        let n = self.dim();
        if self.q_bar.ncols() != n || self.xi_max.len() != n {
            return Err(RmpcError::DimensionMismatch(
                "q_bar and xi_max must share the state dimension".to_string(),
            ));
        }
        if !(self.r_bar > T::zero()) || !(self.du_max > T::zero()) {
            return Err(RmpcError::DimensionMismatch(
                "r_bar and du_max must be positive".to_string(),
            ));
        }
        for i in 0..n {
            if !(self.xi_max[i] > T::zero()) {
                return Err(RmpcError::DimensionMismatch(
                    "xi_max must be positive component-wise".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Symmetric square root of the state weight. Eigenvalues below
    /// `-1e-10` are rejected, small negatives clamp to zero.
    pub fn sqrt_q_bar(&self) -> Result<DMatrix<T>, RmpcError> {
        let es = sdp::symmetrize(&self.q_bar).symmetric_eigen();
        let mut vals = es.eigenvalues.clone();
        for v in vals.iter_mut() {
            if *v < -lit::<T>(1e-10) {
                return Err(RmpcError::WeightRootFailure {
                    min_eig: v.as_f64(),
                });
            }
            *v = v.max(T::zero()).sqrt();
        }
        let vecs = es.eigenvectors;
        Ok(&vecs * DMatrix::from_diagonal(&vals) * vecs.transpose())
    }
}

/// Vertex systems the synthesis runs on: four `(A, B)` pairs of one
/// shared state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet<T> {
    pub dim: usize,
    pub a: Vec<DMatrix<T>>,
    /// Input columns, `dim x 1`.
    pub b: Vec<DMatrix<T>>,
}

impl<T: Real> VertexSet<T> {
    pub fn from_polytope(p: &PolytopeModel<T>) -> Self {
        let a = p
            .vertices
            .iter()
            .map(|v| DMatrix::from_fn(6, 6, |i, j| v.a[(i, j)]))
            .collect();
        let b = p
            .vertices
            .iter()
            .map(|v| DMatrix::from_fn(6, 1, |i, _| v.b[i]))
            .collect();
        Self { dim: 6, a, b }
    }

    pub fn from_error_models(ms: &[DiscreteModel<T>; 4]) -> Self {
        let a = ms
            .iter()
            .map(|m| DMatrix::from_fn(4, 4, |i, j| m.a_d[(i, j)]))
            .collect();
        let b = ms
            .iter()
            .map(|m| DMatrix::from_fn(4, 1, |i, _| m.b_d[i]))
            .collect();
        Self { dim: 4, a, b }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Reference-forgetting factor used by the synthesis model; see the
/// module documentation.
pub const REFERENCE_FORGETTING: f64 = 0.99;

/// Copies the augmented polytope and replaces the yaw-rate-reference
/// transition entry by `lambda < 1` on every vertex.
pub fn synthesis_vertex_set<T: Real>(p: &PolytopeModel<T>, lambda: T) -> VertexSet<T> {
    assert!(
        lambda > T::zero() && lambda < T::one(),
        "forgetting factor must lie in (0, 1)"
    );
    let mut vs = VertexSet::from_polytope(p);
    for a in vs.a.iter_mut() {
        a[(5, 5)] = lambda;
    }
    vs
}

// --- numeric LMI assembly (used by tests and post-solve verification) ---

/// Input-rate block `[[du_max^2, Y'], [Y, Q]]`.
pub fn assemble_input_lmi<T: Real>(q: &DMatrix<T>, y: &DMatrix<T>, du_max: T) -> DMatrix<T> {
    let n = q.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = du_max * du_max;
    for i in 0..n {
        m[(0, 1 + i)] = y[(0, i)];
        m[(1 + i, 0)] = y[(0, i)];
        for j in 0..n {
            m[(1 + i, 1 + j)] = q[(i, j)];
        }
    }
    m
}

/// One-step state-bound blocks, one per vertex:
/// `[[diag(xi_max^2), (A Q + B Y)'], [A Q + B Y, Q]]`.
pub fn assemble_state_lmis<T: Real>(
    q: &DMatrix<T>,
    y: &DMatrix<T>,
    vertices: &VertexSet<T>,
    xi_max: &DVector<T>,
) -> Vec<DMatrix<T>> {
    let n = q.nrows();
    let mut out = Vec::with_capacity(vertices.len());
    for v in 0..vertices.len() {
        let aq_by = &vertices.a[v] * q + &vertices.b[v] * y;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            m[(i, i)] = xi_max[i] * xi_max[i];
            for j in 0..n {
                m[(n + i, j)] = aq_by[(i, j)];
                m[(j, n + i)] = aq_by[(i, j)];
                m[(n + i, n + j)] = q[(i, j)];
            }
        }
        out.push(m);
    }
    out
}

/// Lyapunov-decrease blocks, one per vertex:
/// rows `[Q; A Q + B Y; sqrt(Q_bar) Q; sqrt(R_bar) Y]` against
/// `diag(Q, Q, gamma I, gamma)`.
pub fn assemble_stability_lmis<T: Real>(
    q: &DMatrix<T>,
    y: &DMatrix<T>,
    gamma: T,
    vertices: &VertexSet<T>,
    weights: &RmpcWeights<T>,
) -> Result<Vec<DMatrix<T>>, RmpcError> {
    let n = q.nrows();
    let root_q = weights.sqrt_q_bar()?;
    let root_r = weights.r_bar.sqrt();
    let dim = 3 * n + 1;
    let mut out = Vec::with_capacity(vertices.len());
    for v in 0..vertices.len() {
        let aq_by = &vertices.a[v] * q + &vertices.b[v] * y;
        let wq = &root_q * q;
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = q[(i, j)];
                m[(n + i, n + j)] = q[(i, j)];
                m[(n + i, j)] = aq_by[(i, j)];
                m[(j, n + i)] = aq_by[(i, j)];
                m[(2 * n + i, j)] = wq[(i, j)];
                m[(j, 2 * n + i)] = wq[(i, j)];
            }
            m[(2 * n + i, 2 * n + i)] = gamma;
            m[(3 * n, i)] = root_r * y[(0, i)];
            m[(i, 3 * n)] = root_r * y[(0, i)];
        }
        m[(3 * n, 3 * n)] = gamma;
        out.push(m);
    }
    Ok(out)
}

/// Seed-membership block `[[1, xi'], [xi, Q]]`, the Schur form of
/// `xi' Q^-1 xi <= 1`.
pub fn assemble_initial_state_lmi<T: Real>(xi: &DVector<T>, q: &DMatrix<T>) -> DMatrix<T> {
    let n = q.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = T::one();
    for i in 0..n {
        m[(0, 1 + i)] = xi[i];
        m[(1 + i, 0)] = xi[i];
        for j in 0..n {
            m[(1 + i, 1 + j)] = q[(i, j)];
        }
    }
    m
}

// --- affine assembly for the solver ---

/// Variable layout: `gamma`, then the upper triangle of `Q` row-major,
/// then `Y`.
struct VarMap {
    n: usize,
}

impl VarMap {
    fn gamma(&self) -> usize {
        0
    }

    fn q(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // offset of row i in the packed upper triangle
        1 + i * self.n - i * (i + 1) / 2 + j
    }

    fn y(&self, i: usize) -> usize {
        1 + self.n * (self.n + 1) / 2 + i
    }

    fn total(&self) -> usize {
        1 + self.n * (self.n + 1) / 2 + self.n
    }
}

/// Zeros with ones at `(i, j)` and `(j, i)`.
fn sym_unit<T: Real>(dim: usize, i: usize, j: usize) -> DMatrix<T> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(i, j)] = T::one();
    m[(j, i)] = T::one();
    m
}

/// Places `m` into a `dim x dim` zero matrix at `(row0, col0)`.
fn embed<T: Real>(dim: usize, row0: usize, col0: usize, m: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((row0, col0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

/// Places `m` at `(row0, col0)` and its transpose at `(col0, row0)`.
fn embed_sym<T: Real>(dim: usize, row0: usize, col0: usize, m: &DMatrix<T>) -> DMatrix<T> {
    let mut out = embed(dim, row0, col0, m);
    out.view_mut((col0, row0), (m.ncols(), m.nrows()))
        .copy_from(&m.transpose());
    out
}

struct Assembled<T> {
    problem: SdpProblem<T>,
    vm: VarMap,
    /// Basis `G` of the change of variables `Q = G Qh G'`, `Y = Yh G'`.
    basis: Option<DMatrix<T>>,
}

/// Smallest allowed eigenvalue of `Q` on an unpreconditioned solve.
const Q_FLOOR: f64 = 1e-10;

/// Relative floor on the preconditioned ellipsoid: each entry may thin
/// its predecessor by at most this factor in any direction.
const HAT_FLOOR: f64 = 1e-6;

/// Relative nesting margin `Q <= (1 - margin) Q_prev` keeping solver
/// slack clear of the nesting tolerance.
const NESTING_MARGIN: f64 = 1e-9;

/// Assembles the synthesis SDP. When a nesting predecessor is given the
/// problem is posed in coordinates normalized by its Cholesky factor, so
/// deeply nested (thin) ellipsoids stay well conditioned and the nesting
/// constraint itself becomes `Qh <= (1 - margin) I`.
fn assemble_problem<T: Real>(
    xi: &DVector<T>,
    vertices: &VertexSet<T>,
    weights: &RmpcWeights<T>,
    nesting: Option<&DMatrix<T>>,
) -> Result<Assembled<T>, RmpcError> {
    let n = vertices.dim;
    weights.validate()?;
    if weights.dim() != n || xi.len() != n {
        return Err(RmpcError::DimensionMismatch(format!(
            "state dim {n} vs weights {} vs seed {}",
            weights.dim(),
            xi.len()
        )));
    }
    let vm = VarMap { n };
    let mut objective = DVector::zeros(vm.total());
    objective[vm.gamma()] = T::one();
    let mut problem = SdpProblem::new(vm.total(), objective);

    let root_q = weights.sqrt_q_bar()?;
    let root_r = weights.r_bar.sqrt();

    let basis = match nesting {
        Some(q_prev) => {
            let chol = sdp::symmetrize(q_prev)
                .cholesky()
                .ok_or_else(|| RmpcError::Internal("nesting predecessor not PD".to_string()))?;
            Some(chol.l().clone_owned())
        }
        None => None,
    };

    let nverts = vertices.len();
    let input_dim = n + 1;
    let state_dim = 2 * n;
    let stab_dim = 3 * n + 1;
    let init_dim = n + 1;

    let mut input_blk = AffineBlock::new(input_dim);
    let mut f0 = DMatrix::zeros(input_dim, input_dim);
    f0[(0, 0)] = weights.du_max * weights.du_max;
    input_blk.set_constant(f0);

    let mut state_blks: Vec<AffineBlock<T>> = (0..nverts)
        .map(|v| {
            let mut blk = AffineBlock::new(state_dim);
            let mut f0 = DMatrix::zeros(state_dim, state_dim);
            for i in 0..n {
                f0[(i, i)] = weights.xi_max[i] * weights.xi_max[i];
            }
            blk.set_constant(f0);
            let _ = v;
            blk
        })
        .collect();

    let mut stab_blks: Vec<AffineBlock<T>> = (0..nverts)
        .map(|_| AffineBlock::new(stab_dim))
        .collect();

    let mut init_blk = AffineBlock::new(init_dim);
    let mut f0 = DMatrix::zeros(init_dim, init_dim);
    f0[(0, 0)] = T::one();
    for i in 0..n {
        f0[(0, 1 + i)] = xi[i];
        f0[(1 + i, 0)] = xi[i];
    }
    init_blk.set_constant(f0);

    let mut floor_blk = AffineBlock::new(n);
    let mut nest_blk = nesting.map(|_| AffineBlock::new(n));
    match &nest_blk {
        Some(_) => {
            floor_blk.set_constant(DMatrix::identity(n, n) * lit::<T>(-HAT_FLOOR));
        }
        None => {
            floor_blk.set_constant(DMatrix::identity(n, n) * lit::<T>(-Q_FLOOR));
        }
    }
    if let Some(blk) = nest_blk.as_mut() {
        blk.set_constant(DMatrix::identity(n, n) * (T::one() - lit::<T>(NESTING_MARGIN)));
    }

    // contribution of one symmetric Q-direction `s` and one Y-direction
    // row `r` to every block
    let mut push_direction = |var: usize, s: Option<&DMatrix<T>>, r: Option<&DMatrix<T>>| {
        if let Some(s) = s {
            input_blk.add_coeff(var, embed(input_dim, 1, 1, s));
            init_blk.add_coeff(var, embed(init_dim, 1, 1, s));
            for v in 0..nverts {
                let a_s = &vertices.a[v] * s;
                state_blks[v].add_coeff(
                    var,
                    embed(state_dim, n, n, s) + embed_sym(state_dim, n, 0, &a_s),
                );
                stab_blks[v].add_coeff(
                    var,
                    embed(stab_dim, 0, 0, s)
                        + embed(stab_dim, n, n, s)
                        + embed_sym(stab_dim, n, 0, &a_s)
                        + embed_sym(stab_dim, 2 * n, 0, &(&root_q * s)),
                );
            }
        }
        if let Some(r) = r {
            input_blk.add_coeff(var, embed_sym(input_dim, 0, 1, r));
            for v in 0..nverts {
                let b_r = &vertices.b[v] * r;
                state_blks[v].add_coeff(var, embed_sym(state_dim, n, 0, &b_r));
                stab_blks[v].add_coeff(
                    var,
                    embed_sym(stab_dim, n, 0, &b_r)
                        + embed_sym(stab_dim, 3 * n, 0, &(r * root_r)),
                );
            }
        }
    };

    for i in 0..n {
        for j in i..n {
            // dQ/dq_ij in original coordinates
            let s: DMatrix<T> = match &basis {
                Some(g) => {
                    let gi = DMatrix::from_fn(n, 1, |r, _| g[(r, i)]);
                    let gj = DMatrix::from_fn(n, 1, |r, _| g[(r, j)]);
                    if i == j {
                        &gi * gj.transpose()
                    } else {
                        &gi * gj.transpose() + &gj * gi.transpose()
                    }
                }
                None => sym_unit(n, i, j),
            };
            push_direction(vm.q(i, j), Some(&s), None);
            floor_blk.add_coeff(vm.q(i, j), sym_unit(n, i, j));
            if let Some(blk) = nest_blk.as_mut() {
                blk.add_coeff(vm.q(i, j), -sym_unit::<T>(n, i, j));
            }
        }
        let r: DMatrix<T> = match &basis {
            Some(g) => DMatrix::from_fn(1, n, |_, c| g[(c, i)]),
            None => {
                let mut r = DMatrix::zeros(1, n);
                r[(0, i)] = T::one();
                r
            }
        };
        push_direction(vm.y(i), None, Some(&r));
    }

    // gamma enters only the Lyapunov blocks
    for blk in stab_blks.iter_mut() {
        let mut g = DMatrix::zeros(stab_dim, stab_dim);
        for i in 0..n {
            g[(2 * n + i, 2 * n + i)] = T::one();
        }
        g[(3 * n, 3 * n)] = T::one();
        blk.add_coeff(vm.gamma(), g);
    }

    problem.add_block(input_blk);
    for blk in state_blks {
        problem.add_block(blk);
    }
    for blk in stab_blks {
        problem.add_block(blk);
    }
    problem.add_block(init_blk);
    problem.add_block(floor_blk);
    if let Some(blk) = nest_blk {
        problem.add_block(blk);
    }

    Ok(Assembled { problem, vm, basis })
}

/// One synthesis solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpcSolution<T> {
    pub gamma: T,
    pub q: DMatrix<T>,
    /// `1 x n`.
    pub y: DMatrix<T>,
}

/// Post-solve absolute feasibility requirement on every block.
const BLOCK_FEAS_TOL: f64 = 1e-7;

/// Minimizes `gamma` over the assembled LMIs at seed state `xi`.
pub fn solve_rmpc_sdp<T: Real>(
    xi: &DVector<T>,
    vertices: &VertexSet<T>,
    weights: &RmpcWeights<T>,
    nesting: Option<&DMatrix<T>>,
    settings: &SdpSettings<T>,
) -> Result<RmpcSolution<T>, RmpcError> {
    let assembled = assemble_problem(xi, vertices, weights, nesting)?;
    let sol = match sdp::solve(&assembled.problem, settings) {
        Ok(s) => s,
        Err(SdpError::Infeasible { .. }) => return Err(RmpcError::Infeasible { entry: 0 }),
        Err(e) => return Err(RmpcError::SolverFailure(e.to_string())),
    };
    for (b, eig) in assembled.problem.block_min_eigs(&sol.x).iter().enumerate() {
        if *eig < -lit::<T>(BLOCK_FEAS_TOL) {
            return Err(RmpcError::SolverFailure(format!(
                "block {b} infeasible after solve: min eig {}",
                eig.as_f64()
            )));
        }
    }
    let vm = assembled.vm;
    let n = vm.n;
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            q[(i, j)] = sol.x[vm.q(i, j)];
            q[(j, i)] = sol.x[vm.q(i, j)];
        }
    }
    let mut y = DMatrix::zeros(1, n);
    for i in 0..n {
        y[(0, i)] = sol.x[vm.y(i)];
    }
    if let Some(g) = &assembled.basis {
        q = g * q * g.transpose();
        q = sdp::symmetrize(&q);
        y *= g.transpose();
    }
    Ok(RmpcSolution {
        gamma: sol.x[vm.gamma()],
        q,
        y,
    })
}

/// Inverse with one step of iterative refinement.
fn refined_inverse<T: Real>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let inv = m.clone().lu().try_inverse()?;
    let residual = DMatrix::identity(m.nrows(), m.nrows()) - m * &inv;
    Some(&inv + &inv * residual)
}

/// One nested-ellipsoid entry of the lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidEntry<T> {
    pub q: DMatrix<T>,
    pub q_inv: DMatrix<T>,
    /// `1 x n`.
    pub y: DMatrix<T>,
    /// `K = Y Q^-1`, `1 x n`.
    pub k_gain: DMatrix<T>,
    pub gamma: T,
    pub seed_state: DVector<T>,
}

impl<T: Real> EllipsoidEntry<T> {
    /// Ellipsoid membership value `xi' Q^-1 xi`.
    pub fn membership(&self, xi: &DVector<T>) -> T {
        (&self.q_inv * xi).dot(xi)
    }
}

/// Synthesis metadata stored with every table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta<T> {
    pub state_dim: usize,
    pub ts: T,
    pub weight_digest: u64,
    pub polytope_digest: u64,
    /// Entry index where synthesis went infeasible and stopped, if any.
    pub truncated_at: Option<usize>,
}

/// Ordered nested ellipsoids, outermost first.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable<T> {
    pub entries: Vec<EllipsoidEntry<T>>,
    pub meta: TableMeta<T>,
}

impl<T: Real> LookupTable<T> {
    pub fn state_dim(&self) -> usize {
        self.meta.state_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// FNV-1a over a canonical 17-significant-digit rendering, used to tie
/// tables to the weights and polytope that produced them.
pub fn digest_f64_slice(values: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in format!("{v:.16e};").bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn weights_digest<T: Real>(w: &RmpcWeights<T>) -> u64 {
    let mut vals: Vec<f64> = w.q_bar.iter().map(|v| v.as_f64()).collect();
    vals.push(w.r_bar.as_f64());
    vals.push(w.du_max.as_f64());
    vals.extend(w.xi_max.iter().map(|v| v.as_f64()));
    digest_f64_slice(vals)
}

fn vertices_digest<T: Real>(vs: &VertexSet<T>) -> u64 {
    let mut vals: Vec<f64> = Vec::new();
    for a in &vs.a {
        vals.extend(a.iter().map(|v| v.as_f64()));
    }
    for b in &vs.b {
        vals.extend(b.iter().map(|v| v.as_f64()));
    }
    digest_f64_slice(vals)
}

/// Builds the offline lookup table: entry 0 from `xi0`, entry k from the
/// shrunk seed `shrink * seed(k-1)` with the nesting constraint
/// `Q(k-1) >= Q(k)`. Infeasibility at entry 0 aborts; at a later entry
/// it truncates the table and records the truncation point.
pub fn build_offline_table<T: Real>(
    xi0: &DVector<T>,
    n_entries: usize,
    vertices: &VertexSet<T>,
    weights: &RmpcWeights<T>,
    shrink: T,
    ts: T,
    settings: &SdpSettings<T>,
) -> Result<LookupTable<T>, RmpcError> {
    if n_entries == 0 {
        return Err(RmpcError::DimensionMismatch("n_entries must be >= 1".to_string()));
    }
    if !(shrink > T::zero() && shrink < T::one()) {
        return Err(RmpcError::DimensionMismatch("shrink must lie in (0, 1)".to_string()));
    }
    let mut entries: Vec<EllipsoidEntry<T>> = Vec::with_capacity(n_entries);
    let mut truncated_at = None;
    let mut seed = xi0.clone();
    for k in 0..n_entries {
        let nesting = entries.last().map(|e: &EllipsoidEntry<T>| e.q.clone());
        let solved = solve_rmpc_sdp(&seed, vertices, weights, nesting.as_ref(), settings);
        let sol = match solved {
            Ok(s) => s,
            Err(RmpcError::Infeasible { .. }) if k > 0 => {
                truncated_at = Some(k);
                break;
            }
            Err(RmpcError::Infeasible { .. }) => return Err(RmpcError::Infeasible { entry: 0 }),
            Err(e) => return Err(e),
        };
        let q_inv = refined_inverse(&sol.q)
            .ok_or_else(|| RmpcError::Internal("stored Q is numerically singular".to_string()))?;
        let k_gain = &sol.y * &q_inv;
        let entry = EllipsoidEntry {
            q: sol.q,
            q_inv,
            y: sol.y,
            k_gain,
            gamma: sol.gamma,
            seed_state: seed.clone(),
        };
        // the shrunk seed must stay inside the ellipsoid just solved
        let next = &seed * shrink;
        if entry.membership(&next) > T::one() + lit::<T>(1e-6) {
            return Err(RmpcError::Internal(
                "shrunk seed left the freshly solved ellipsoid".to_string(),
            ));
        }
        entries.push(entry);
        seed = next;
    }
    Ok(LookupTable {
        meta: TableMeta {
            state_dim: vertices.dim,
            ts,
            weight_digest: weights_digest(weights),
            polytope_digest: vertices_digest(vertices),
            truncated_at,
        },
        entries,
    })
}

/// Innermost entry whose ellipsoid contains `xi`; falls back to entry 0
/// with the out-of-region flag when no ellipsoid contains the state.
pub fn lookup_gain<'a, T: Real>(
    table: &'a LookupTable<T>,
    xi: &DVector<T>,
) -> (&'a EllipsoidEntry<T>, usize, bool) {
    assert!(!table.is_empty(), "lookup on an empty table");
    for k in (0..table.entries.len()).rev() {
        let e = &table.entries[k];
        if e.membership(xi) <= T::one() + lit::<T>(1e-8) {
            return (e, k, false);
        }
    }
    (&table.entries[0], 0, true)
}
