//! Dense semidefinite programming for linear matrix inequalities.
//!
//! Problems are stated in inequality form: minimize `c . x` subject to
//! `F0 + sum_i x_i F_i >= 0` (positive semidefinite) for every block.
//! The solver is an infeasible-start primal-dual interior-point method
//! with the HKM direction and Mehrotra predictor-corrector steps, the
//! classic recipe for small dense problems. Blocks are scaled by their
//! diagonal magnitudes up front so constraints with wildly different
//! units (input bounds vs. state bounds) iterate well together.
//!
//! Everything is deterministic: no randomness, no parallelism, fixed
//! evaluation order.

use crate::num::{lit, Real};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("problem is infeasible (certificate residual {certificate_residual:.3e})")]
    Infeasible { certificate_residual: f64 },
    #[error("solver did not converge in {iterations} iterations (gap {gap:.3e}, feas {feas:.3e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        feas: f64,
    },
    #[error("objective unbounded below")]
    Unbounded,
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// One affine symmetric block `F0 + sum_i x_i F_i`.
#[derive(Debug, Clone)]
pub struct AffineBlock<T> {
    pub dim: usize,
    pub f0: DMatrix<T>,
    /// Sparse-in-variables coefficient list `(variable index, matrix)`.
    pub coeffs: Vec<(usize, DMatrix<T>)>,
}

impl<T: Real> AffineBlock<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            f0: DMatrix::zeros(dim, dim),
            coeffs: Vec::new(),
        }
    }

    pub fn set_constant(&mut self, f0: DMatrix<T>) {
        debug_assert_eq!(f0.nrows(), self.dim);
        self.f0 = symmetrize(&f0);
    }

    /// Adds `m * x[var]` to the block; repeated indices accumulate.
    pub fn add_coeff(&mut self, var: usize, m: DMatrix<T>) {
        debug_assert_eq!(m.nrows(), self.dim);
        let m = symmetrize(&m);
        if let Some((_, existing)) = self.coeffs.iter_mut().find(|(v, _)| *v == var) {
            *existing += m;
        } else {
            self.coeffs.push((var, m));
        }
    }

    /// Block value at `x`.
    pub fn value(&self, x: &DVector<T>) -> DMatrix<T> {
        let mut v = self.f0.clone();
        for (i, f) in &self.coeffs {
            v += f * x[*i];
        }
        v
    }
}

/// Linear SDP: minimize `objective . x` over the PSD blocks.
#[derive(Debug, Clone)]
pub struct SdpProblem<T> {
    pub num_vars: usize,
    pub objective: DVector<T>,
    pub blocks: Vec<AffineBlock<T>>,
}

impl<T: Real> SdpProblem<T> {
    pub fn new(num_vars: usize, objective: DVector<T>) -> Self {
        debug_assert_eq!(objective.len(), num_vars);
        Self {
            num_vars,
            objective,
            blocks: Vec::new(),
        }
    }

    pub fn add_block(&mut self, block: AffineBlock<T>) {
        self.blocks.push(block);
    }

    /// Smallest eigenvalue of each block at `x`, in block order.
    pub fn block_min_eigs(&self, x: &DVector<T>) -> Vec<T> {
        self.blocks.iter().map(|b| min_eig(&b.value(x))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SdpSettings<T> {
    pub max_iter: usize,
    /// Relative duality-gap tolerance.
    pub gap_tol: T,
    /// Relative primal/dual feasibility tolerance.
    pub feas_tol: T,
    /// Normalized infeasibility-certificate threshold.
    pub infeas_tol: T,
}

impl<T: Real> Default for SdpSettings<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gap_tol: lit(1e-8),
            feas_tol: lit(1e-8),
            infeas_tol: lit(1e-9),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution<T> {
    pub x: DVector<T>,
    pub objective: T,
    pub iterations: usize,
    /// Final relative duality gap.
    pub gap: T,
    /// Final relative feasibility residual (max of primal and dual).
    pub feasibility: T,
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn min_eig<T: Real>(m: &DMatrix<T>) -> T {
    let es = symmetrize(m).symmetric_eigen();
    es.eigenvalues
        .iter()
        .cloned()
        .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a })
}

/// Largest step `alpha` with `s + alpha * ds >= 0`, capped at `cap`.
fn max_step<T: Real>(s: &DMatrix<T>, ds: &DMatrix<T>, cap: T) -> T {
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => return T::zero(),
    };
    let l = chol.l();
    // W = L^-1 ds L^-T via two triangular solves
    let u = l.solve_lower_triangular(ds).expect("lower solve");
    let w = l
        .solve_lower_triangular(&u.transpose())
        .expect("lower solve");
    let lam = min_eig(&w);
    if lam >= -lit::<T>(1e-14) {
        cap
    } else {
        (-T::one() / lam).min(cap)
    }
}

struct Scaled<T> {
    blocks: Vec<AffineBlock<T>>,
}

/// Diagonal scaling that normalizes each block's dominant diagonal
/// magnitude to about one.
fn scale_blocks<T: Real>(blocks: &[AffineBlock<T>]) -> Scaled<T> {
    let mut scaled = Vec::with_capacity(blocks.len());
    for b in blocks {
        let n = b.dim;
        let mut s = DVector::from_element(n, T::one());
        for k in 0..n {
            let mut mag = b.f0[(k, k)].abs();
            for (_, f) in &b.coeffs {
                mag = mag.max(f[(k, k)].abs());
            }
            s[k] = mag.max(T::one()).sqrt();
        }
        let apply = |m: &DMatrix<T>| DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (s[i] * s[j]));
        let mut nb = AffineBlock::new(n);
        nb.f0 = apply(&b.f0);
        nb.coeffs = b.coeffs.iter().map(|(i, f)| (*i, apply(f))).collect();
        scaled.push(nb);
    }
    Scaled { blocks: scaled }
}

/// Solves the linear SDP. Returns the minimizer, or a typed error for
/// infeasible and non-converged problems.
pub fn solve<T: Real>(
    problem: &SdpProblem<T>,
    settings: &SdpSettings<T>,
) -> Result<SdpSolution<T>, SdpError> {
    let m = problem.num_vars;
    if m == 0 {
        return Err(SdpError::Invalid("no decision variables".to_string()));
    }
    for b in &problem.blocks {
        if b.dim == 0 {
            return Err(SdpError::Invalid("empty block".to_string()));
        }
        if b.coeffs.is_empty() {
            // pure constant block: only admissible when already PSD
            if min_eig(&b.f0) < -lit::<T>(1e-12) {
                return Err(SdpError::Infeasible {
                    certificate_residual: 0.0,
                });
            }
        }
        for (i, _) in &b.coeffs {
            if *i >= m {
                return Err(SdpError::Invalid(format!("variable index {i} out of range")));
            }
        }
    }

    // Conic mapping: maximize b.y with slack Z = C - sum_i y_i A_i >= 0,
    // where y = x, b = -objective, A_i = -F_i, C = F0, so Z = F(y). The
    // matching primal is min tr(C X) s.t. tr(A_i X) = b_i, X >= 0, and
    // tr(X Z) = tr(C X) - b.y is the duality gap. The code keeps the F_i
    // directly and folds the A_i sign into each formula.
    let mut scaled = scale_blocks(
        &problem
            .blocks
            .iter()
            .filter(|b| !b.coeffs.is_empty())
            .cloned()
            .collect::<Vec<_>>(),
    );
    // equilibrate the variables: unit dominant coefficient norm per column
    let mut var_scale = vec![T::one(); m];
    {
        let mut mags = vec![T::zero(); m];
        for b in &scaled.blocks {
            for (i, f) in &b.coeffs {
                mags[*i] = mags[*i].max(f.norm());
            }
        }
        for i in 0..m {
            if mags[i] > lit::<T>(1e-30) {
                var_scale[i] = T::one() / mags[i];
            }
        }
        for b in scaled.blocks.iter_mut() {
            for (i, f) in b.coeffs.iter_mut() {
                *f *= var_scale[*i];
            }
        }
    }
    let blocks = &scaled.blocks;
    let nblk = blocks.len();
    if nblk == 0 {
        return Ok(SdpSolution {
            x: DVector::zeros(m),
            objective: T::zero(),
            iterations: 0,
            gap: T::zero(),
            feasibility: T::zero(),
        });
    }

    let b_vec: DVector<T> =
        DVector::from_fn(m, |i, _| -problem.objective[i] * var_scale[i]);
    let c_mats: Vec<DMatrix<T>> = blocks.iter().map(|blk| blk.f0.clone()).collect();

    let n_total: usize = blocks.iter().map(|b| b.dim).sum();
    let n_total_t = lit::<T>(n_total as f64);

    // starting point
    let mut y = DVector::<T>::zeros(m);
    let mut xs: Vec<DMatrix<T>> = Vec::with_capacity(nblk);
    let mut zs: Vec<DMatrix<T>> = Vec::with_capacity(nblk);
    for (k, blk) in blocks.iter().enumerate() {
        let mut mag = T::one() + c_mats[k].norm();
        for (_, f) in &blk.coeffs {
            mag = mag.max(f.norm());
        }
        xs.push(DMatrix::identity(blk.dim, blk.dim) * mag);
        zs.push(DMatrix::identity(blk.dim, blk.dim) * mag);
    }

    let b_norm = T::one() + b_vec.norm();
    let c_norm = T::one()
        + c_mats
            .iter()
            .fold(T::zero(), |acc, c| acc + c.norm_squared())
            .sqrt();

    let mut last_gap = T::max_value().unwrap();
    let mut last_feas = T::max_value().unwrap();

    for iter in 0..settings.max_iter {
        // residuals
        let mut rp = b_vec.clone();
        for (k, blk) in blocks.iter().enumerate() {
            for (i, a) in &blk.coeffs {
                rp[*i] += a.dot(&xs[k]);
            }
        }
        let mut fds: Vec<DMatrix<T>> = Vec::with_capacity(nblk);
        let mut fd_norm2 = T::zero();
        for (k, blk) in blocks.iter().enumerate() {
            let mut fd = &c_mats[k] - &zs[k];
            for (i, a) in &blk.coeffs {
                fd += a * y[*i];
            }
            fd_norm2 += fd.norm_squared();
            fds.push(fd);
        }

        let cgap: T = (0..nblk)
            .map(|k| xs[k].dot(&zs[k]))
            .fold(T::zero(), |a, b| a + b);
        let obj_p: T = (0..nblk)
            .map(|k| c_mats[k].dot(&xs[k]))
            .fold(T::zero(), |a, b| a + b);
        let obj_d: T = b_vec.dot(&y);
        // the residual-corrected gap bounds the true suboptimality of y
        // even when the internal primal iterate is still infeasible
        let corrected = cgap.abs() + rp.dot(&y).abs();
        let rel_gap = corrected / (T::one() + obj_p.abs() + obj_d.abs());
        let rel_p = rp.norm() / b_norm;
        let rel_d = fd_norm2.sqrt() / c_norm;
        last_gap = rel_gap;
        last_feas = rel_p.max(rel_d);

        if rel_gap <= settings.gap_tol && rel_d <= settings.feas_tol {
            let x = DVector::from_fn(m, |i, _| y[i] * var_scale[i]);
            let objective = problem.objective.dot(&x);
            return Ok(SdpSolution {
                x,
                objective,
                iterations: iter,
                gap: rel_gap,
                feasibility: last_feas,
            });
        }

        // infeasibility certificate: X >= 0 with A(X) ~ 0 and tr(CX) > 0
        let x_mag = xs
            .iter()
            .fold(T::zero(), |acc, x| acc + x.norm_squared())
            .sqrt();
        if x_mag > lit::<T>(1e8) {
            let mut amax = T::zero();
            let mut ip = DVector::<T>::zeros(m);
            for (k, blk) in blocks.iter().enumerate() {
                for (i, a) in &blk.coeffs {
                    ip[*i] += a.dot(&xs[k]);
                }
            }
            for i in 0..m {
                amax = amax.max(ip[i].abs());
            }
            let cx: T = (0..nblk)
                .map(|k| c_mats[k].dot(&xs[k]))
                .fold(T::zero(), |a, b| a + b);
            if amax / x_mag <= settings.infeas_tol && cx / x_mag <= -settings.infeas_tol {
                return Err(SdpError::Infeasible {
                    certificate_residual: (amax / x_mag).as_f64(),
                });
            }
        }
        if obj_d.abs() > lit::<T>(1e18) {
            return Err(SdpError::Unbounded);
        }

        let mu = cgap / n_total_t;

        // factor Z per block
        let mut zinvs: Vec<DMatrix<T>> = Vec::with_capacity(nblk);
        for z in &zs {
            match z.clone().cholesky() {
                Some(ch) => zinvs.push(ch.inverse()),
                None => {
                    return Err(SdpError::NotConverged {
                        iterations: iter,
                        gap: last_gap.as_f64(),
                        feas: last_feas.as_f64(),
                    })
                }
            }
        }

        // Schur complement M_ij = sum_b tr(A_i Z^-1 A_j X)
        let mut mmat = DMatrix::<T>::zeros(m, m);
        for (k, blk) in blocks.iter().enumerate() {
            let g_block: Vec<DMatrix<T>> = blk
                .coeffs
                .iter()
                .map(|(_, a)| &zinvs[k] * a * &xs[k])
                .collect();
            for (p, (i, _)) in blk.coeffs.iter().enumerate() {
                for (j, aj) in &blk.coeffs {
                    if *j > *i {
                        continue;
                    }
                    mmat[(*i, *j)] += aj.dot(&g_block[p].transpose());
                }
            }
        }
        for i in 0..m {
            for j in (i + 1)..m {
                mmat[(i, j)] = mmat[(j, i)];
            }
        }

        let mchol = {
            match mmat.clone().cholesky() {
                Some(c) => c,
                None => {
                    let ridge = lit::<T>(1e-10) * (T::one() + mmat.diagonal().abs().max());
                    match (&mmat + DMatrix::identity(m, m) * ridge).cholesky() {
                        Some(c) => c,
                        None => {
                            return Err(SdpError::NotConverged {
                                iterations: iter,
                                gap: last_gap.as_f64(),
                                feas: last_feas.as_f64(),
                            })
                        }
                    }
                }
            }
        };

        // Schur solves with two rounds of iterative refinement; M turns
        // ill-conditioned as mu collapses and raw solves stall the
        // primal residual.
        let solve_refined = |q: &DVector<T>| -> DVector<T> {
            let mut dy = mchol.solve(q);
            for _ in 0..2 {
                let r = q - &mmat * &dy;
                dy += mchol.solve(&r);
            }
            dy
        };

        // rhs for a given sigma*mu and optional corrector cross term
        let build_rhs = |sigma_mu: T,
                         corr: Option<(&Vec<DMatrix<T>>, &Vec<DMatrix<T>>)>|
         -> DVector<T> {
            let mut q = DVector::<T>::zeros(m);
            for (k, blk) in blocks.iter().enumerate() {
                let fd_x = &zinvs[k] * &fds[k] * &xs[k];
                let cross = corr.map(|(dzp, dxp)| &zinvs[k] * &dzp[k] * &dxp[k]);
                for (i, a) in &blk.coeffs {
                    let mut v = sigma_mu * a.dot(&zinvs[k]);
                    v -= a.dot(&fd_x.transpose());
                    if let Some(cr) = &cross {
                        v -= a.dot(&cr.transpose());
                    }
                    q[*i] += v;
                }
            }
            q + &b_vec
        };

        let directions = |dy: &DVector<T>,
                          sigma_mu: T,
                          corr: Option<(&Vec<DMatrix<T>>, &Vec<DMatrix<T>>)>|
         -> (Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
            let mut dzs = Vec::with_capacity(nblk);
            let mut dxs = Vec::with_capacity(nblk);
            for (k, blk) in blocks.iter().enumerate() {
                let mut dz = fds[k].clone();
                for (i, a) in &blk.coeffs {
                    dz += a * dy[*i];
                }
                let mut dx = &zinvs[k] * sigma_mu - &xs[k] - &zinvs[k] * &dz * &xs[k];
                if let Some((dzp, dxp)) = corr {
                    dx -= &zinvs[k] * &dzp[k] * &dxp[k];
                }
                dxs.push(symmetrize(&dx));
                dzs.push(symmetrize(&dz));
            }
            (dzs, dxs)
        };

        // predictor (affine direction, sigma = 0)
        let q_aff = build_rhs(T::zero(), None);
        let dy_aff = solve_refined(&q_aff);
        let (dz_aff, dx_aff) = directions(&dy_aff, T::zero(), None);

        let mut ap_aff = T::one();
        let mut ad_aff = T::one();
        for k in 0..nblk {
            ap_aff = ap_aff.min(max_step(&xs[k], &dx_aff[k], T::one()));
            ad_aff = ad_aff.min(max_step(&zs[k], &dz_aff[k], T::one()));
        }
        let mut gap_aff = T::zero();
        for k in 0..nblk {
            let xa = &xs[k] + &dx_aff[k] * ap_aff;
            let za = &zs[k] + &dz_aff[k] * ad_aff;
            gap_aff += xa.dot(&za);
        }
        let mu_aff = gap_aff / n_total_t;
        let ratio = (mu_aff / mu).max(T::zero());
        let mut sigma = (ratio * ratio * ratio).min(T::one());
        if rel_d > rel_gap * lit::<T>(10.0) {
            sigma = sigma.max(lit::<T>(0.5));
        }

        // corrector
        let q_cor = build_rhs(sigma * mu, Some((&dz_aff, &dx_aff)));
        let dy = solve_refined(&q_cor);
        let (dzs, dxs) = directions(&dy, sigma * mu, Some((&dz_aff, &dx_aff)));

        let tau = lit::<T>(0.95);
        let mut ap = T::max_value().unwrap();
        let mut ad = T::max_value().unwrap();
        for k in 0..nblk {
            ap = ap.min(max_step(&xs[k], &dxs[k], T::one() / tau));
            ad = ad.min(max_step(&zs[k], &dzs[k], T::one() / tau));
        }
        let ap = (tau * ap).min(T::one());
        let ad = (tau * ad).min(T::one());

        for k in 0..nblk {
            xs[k] = symmetrize(&(&xs[k] + &dxs[k] * ap));
            zs[k] = symmetrize(&(&zs[k] + &dzs[k] * ad));
        }
        y += dy * ad;
        // env-gated iteration trace for solver diagnostics
        if std::env::var_os("RMPC_SDP_TRACE").is_some() {
            eprintln!(
                "sdp it {iter:3} gap {:9.2e} rp {:9.2e} rd {:9.2e} mu {:9.2e} sigma {:7.2e} ap {:6.3} ad {:6.3}",
                rel_gap.as_f64(),
                rel_p.as_f64(),
                rel_d.as_f64(),
                mu.as_f64(),
                sigma.as_f64(),
                ap.as_f64(),
                ad.as_f64()
            );
        }
    }

    Err(SdpError::NotConverged {
        iterations: settings.max_iter,
        gap: last_gap.as_f64(),
        feas: last_feas.as_f64(),
    })
}
