//! Primal-dual interior point for the lifted beamforming SDP.
//!
//! The maximization over `(t, V)` is written in the "dual" standard form
//! `max bᵀy  s.t.  C - Σ y_i A_i = Z ⪰ 0` with a Hermitian block `Z = V` and
//! a non-negative block `z_l = Tr(R_l V) - t`. The free variables are `t` and
//! the real/imaginary parts of the strictly lower triangle of `V`; the
//! diagonal is pinned to `d`, so `V` stays feasible by construction. The
//! paired minimization carries `X ⪰ 0`, `x ≥ 0`, for which a strictly feasible
//! start is available in closed form.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use super::linalg::{
    hermitian_cholesky, hermitian_eig, hermitian_part, inner, max_asymmetry, CMatrix,
};
use super::{SolveReport, SolveStatus, SolverTolerances};
use crate::error::SolverError;

/// Step-to-boundary fraction.
const STEP_FRACTION: f64 = 0.98;
/// Iterate past the requested tolerances by this factor so the recovered
/// `t = min_l Tr(R_l V)` meets them with room to spare.
const INNER_TARGET: f64 = 0.1;
/// Give up after this many iterations without any drop in
/// `max(gap, primal infeasibility)`.
const STALL_ITERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    dim: usize,
    t_coeff: f64,
    objective: CMatrix,
    gain_constraints: Vec<CMatrix>,
    diag_value: f64,
}

impl SdpProblem {
    /// Maximize `t_coeff·t + ⟨objective, V⟩` subject to
    /// `Tr(R_l V) ≥ t` for every `R_l`, `V(n, n) = diag_value`, `V ⪰ 0`.
    pub fn new(
        objective: CMatrix,
        t_coeff: f64,
        gain_constraints: Vec<CMatrix>,
        diag_value: f64,
    ) -> Result<Self, SolverError> {
        let dim = objective.nrows();
        let bad = |msg: String| Err(SolverError::InvalidProblem(msg));
        if dim == 0 || !objective.is_square() {
            return bad("objective must be a non-empty square matrix".into());
        }
        if gain_constraints.is_empty() {
            return bad("at least one gain constraint is required".into());
        }
        if !(t_coeff.is_finite() && t_coeff > 0.0) {
            return bad(format!("t coefficient must be positive, got {t_coeff}"));
        }
        if !(diag_value.is_finite() && diag_value > 0.0) {
            return bad(format!("diagonal value must be positive, got {diag_value}"));
        }
        let hermitian = |m: &CMatrix| {
            let scale = m.iter().map(|v| v.norm()).fold(1.0, f64::max);
            max_asymmetry(m) <= 1e-12 * scale
        };
        if !hermitian(&objective) {
            return bad("objective matrix is not Hermitian".into());
        }
        for (l, r) in gain_constraints.iter().enumerate() {
            if r.nrows() != dim || r.ncols() != dim {
                return bad(format!("gain matrix {l} has the wrong shape"));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return bad(format!("gain matrix {l} has non-finite entries"));
            }
            if !hermitian(r) {
                return bad(format!("gain matrix {l} is not Hermitian"));
            }
        }
        Ok(Self {
            dim,
            t_coeff,
            objective,
            gain_constraints,
            diag_value,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_coeff(&self) -> f64 {
        self.t_coeff
    }

    pub fn objective(&self) -> &CMatrix {
        &self.objective
    }

    pub fn gain_constraints(&self) -> &[CMatrix] {
        &self.gain_constraints
    }

    pub fn diag_value(&self) -> f64 {
        self.diag_value
    }

    /// `t_coeff·t + ⟨objective, V⟩`.
    pub fn evaluate(&self, t: f64, v: &CMatrix) -> f64 {
        self.t_coeff * t + inner(&self.objective, v)
    }

    /// `min_l Tr(R_l V)`: the largest `t` feasible for a given `V`.
    pub fn best_t(&self, v: &CMatrix) -> f64 {
        self.gain_constraints
            .iter()
            .map(|r| inner(r, v))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Objectives of one interior-point iterate: `primal` is the maximization
/// value, `dual` the value of the paired minimization (an upper bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateObjectives {
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub t: f64,
    pub v: CMatrix,
    pub report: SolveReport,
    pub history: Vec<IterateObjectives>,
}

/// Layout of `report.kkt_residuals`: one entry per gain constraint
/// (`max(0, t - Tr(R_l V))`), one per diagonal entry (`|V(n,n) - d|`), the
/// PSD violation `max(0, -λ_min(V))`, and the relative primal infeasibility
/// of the dual certificate.
pub fn solve_sdp(p: &SdpProblem, tol: &SolverTolerances) -> Result<SdpSolution, SolverError> {
    let sol = solve_sdp_best_effort(p, tol);
    match sol.report.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::MaxIter => Err(SolverError::MaxIter(sol.report)),
        SolveStatus::Infeasible => Err(SolverError::Infeasible(sol.report)),
        SolveStatus::NumericalFailure => Err(SolverError::NumericalFailure(sol.report)),
    }
}

/// Like [`solve_sdp`] but always returns the most accurate iterate seen,
/// with its status in the report. `V` is feasible whatever the status,
/// since the diagonal is pinned and `V` is kept strictly inside the cone.
pub fn solve_sdp_best_effort(p: &SdpProblem, tol: &SolverTolerances) -> SdpSolution {
    Ipm::new(p).run(tol)
}

struct Ipm<'a> {
    p: &'a SdpProblem,
    n: usize,
    nl: usize,
    m: usize,
    pairs: Vec<(usize, usize)>,
    /// `m × L` block of the linear constraint map.
    a_lp: DMatrix<f64>,
    c_lp: DVector<f64>,
    b: DVector<f64>,
    constant: f64,
}

struct Direction {
    dx_psd: CMatrix,
    dx_lp: DVector<f64>,
    dy: DVector<f64>,
    dz_psd: CMatrix,
    dz_lp: DVector<f64>,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let n = p.dim;
        let nl = p.gain_constraints.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|q| (0..q).map(move |pp| (pp, q)))
            .collect();
        let m = 1 + 2 * pairs.len();
        let d = p.diag_value;

        let mut a_lp = DMatrix::zeros(m, nl);
        let mut c_lp = DVector::zeros(nl);
        for (l, r) in p.gain_constraints.iter().enumerate() {
            a_lp[(0, l)] = 1.0;
            for (k, &(pp, q)) in pairs.iter().enumerate() {
                a_lp[(1 + 2 * k, l)] = -2.0 * r[(q, pp)].re;
                a_lp[(2 + 2 * k, l)] = -2.0 * r[(q, pp)].im;
            }
            c_lp[l] = d * r.trace().re;
        }
        let mut b = DVector::zeros(m);
        b[0] = p.t_coeff;
        for (k, &(pp, q)) in pairs.iter().enumerate() {
            b[1 + 2 * k] = 2.0 * p.objective[(q, pp)].re;
            b[2 + 2 * k] = 2.0 * p.objective[(q, pp)].im;
        }
        let constant = d * p.objective.trace().re;
        Self {
            p,
            n,
            nl,
            m,
            pairs,
            a_lp,
            c_lp,
            b,
            constant,
        }
    }

    /// `V(y) = dI + Σ y_k E_k`.
    fn v_of(&self, y: &DVector<f64>) -> CMatrix {
        let mut v = CMatrix::identity(self.n, self.n) * Complex64::new(self.p.diag_value, 0.0);
        self.add_offdiag(&mut v, y);
        v
    }

    fn add_offdiag(&self, v: &mut CMatrix, y: &DVector<f64>) {
        for (k, &(pp, q)) in self.pairs.iter().enumerate() {
            let e = Complex64::new(y[1 + 2 * k], y[2 + 2 * k]);
            v[(q, pp)] += e;
            v[(pp, q)] += e.conj();
        }
    }

    fn z_lp(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.c_lp - self.a_lp.tr_mul(y)
    }

    /// Linear map of the minimization: `A(X, x)`.
    fn apply_a(&self, x_psd: &CMatrix, x_lp: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a_lp * x_lp;
        for (k, &(pp, q)) in self.pairs.iter().enumerate() {
            out[1 + 2 * k] -= (x_psd[(pp, q)] + x_psd[(q, pp)]).re;
            out[2 + 2 * k] -= x_psd[(q, pp)].im - x_psd[(pp, q)].im;
        }
        out
    }

    /// Schur complement `⟨E_i, X E_j Z^{-1}⟩` plus the non-negative block.
    fn schur(
        &self,
        x_psd: &CMatrix,
        zinv: &CMatrix,
        x_lp: &DVector<f64>,
        z_lp: &DVector<f64>,
    ) -> DMatrix<f64> {
        let m = self.m;
        let mut mat = DMatrix::zeros(m, m);
        let g_entry = |j: usize, a: usize, c: usize| -> Complex64 {
            let (pp, q) = self.pairs[(j - 1) / 2];
            if (j - 1) % 2 == 0 {
                x_psd[(a, pp)] * zinv[(q, c)] + x_psd[(a, q)] * zinv[(pp, c)]
            } else {
                Complex64::new(0.0, 1.0)
                    * (x_psd[(a, q)] * zinv[(pp, c)] - x_psd[(a, pp)] * zinv[(q, c)])
            }
        };
        for j in 1..m {
            for i in 1..m {
                let (pp, q) = self.pairs[(i - 1) / 2];
                let val = if (i - 1) % 2 == 0 {
                    (g_entry(j, pp, q) + g_entry(j, q, pp)).re
                } else {
                    g_entry(j, q, pp).im - g_entry(j, pp, q).im
                };
                mat[(i, j)] = val;
            }
        }
        let ratio = x_lp.component_div(z_lp);
        let scaled = DMatrix::from_fn(m, self.nl, |i, l| self.a_lp[(i, l)] * ratio[l]);
        mat += scaled * self.a_lp.transpose();
        (&mat + mat.transpose()) * 0.5
    }

    fn initial_point(&self) -> (CMatrix, DVector<f64>, DVector<f64>) {
        let nl = self.nl as f64;
        let x_lp = DVector::from_element(self.nl, self.p.t_coeff / nl);
        // Off-diagonal of X is pinned by the equality constraints; the
        // diagonal is free and chosen to make X diagonally dominant.
        let mut b_mat = self.p.objective.clone();
        for (l, r) in self.p.gain_constraints.iter().enumerate() {
            b_mat += r * Complex64::new(x_lp[l], 0.0);
        }
        let mut x_psd = -b_mat;
        for i in 0..self.n {
            let row: f64 = (0..self.n).filter(|&j| j != i).map(|j| x_psd[(i, j)].norm()).sum();
            x_psd[(i, i)] = Complex64::new(1.0 + row, 0.0);
        }
        let mut y = DVector::zeros(self.m);
        let min_c = self.c_lp.iter().copied().fold(f64::INFINITY, f64::min);
        y[0] = min_c - 1.0;
        (x_psd, x_lp, y)
    }

    fn direction(
        &self,
        chol: &Solver,
        x_psd: &CMatrix,
        x_lp: &DVector<f64>,
        zinv: &CMatrix,
        z_lp: &DVector<f64>,
        rp: &DVector<f64>,
        target: f64,
        corr: Option<(&CMatrix, &DVector<f64>)>,
    ) -> Option<Direction> {
        let mut g_psd = zinv * Complex64::new(target, 0.0) - x_psd;
        let mut g_lp = DVector::from_fn(self.nl, |l, _| target / z_lp[l] - x_lp[l]);
        if let Some((c_psd, c_lp)) = corr {
            g_psd -= c_psd * zinv;
            g_lp -= c_lp.component_div(z_lp);
        }
        let rhs = rp - self.apply_a(&g_psd, &g_lp);
        let dy = chol.solve(&rhs)?;
        let mut dz_psd = CMatrix::zeros(self.n, self.n);
        self.add_offdiag(&mut dz_psd, &dy);
        let dz_lp = -self.a_lp.tr_mul(&dy);
        let dx_psd = hermitian_part(&(g_psd - x_psd * &dz_psd * zinv));
        let dx_lp = g_lp - x_lp.component_mul(&dz_lp).component_div(z_lp);
        Some(Direction {
            dx_psd,
            dx_lp,
            dy,
            dz_psd,
            dz_lp,
        })
    }

    fn run(&self, tol: &SolverTolerances) -> SdpSolution {
        let (mut x_psd, mut x_lp, mut y) = self.initial_point();
        let mut history = Vec::new();
        let b_norm = 1.0 + self.b.norm();
        let dim_total = (self.n + self.nl) as f64;
        let mut status = SolveStatus::MaxIter;
        let mut iterations = 0;
        let mut best: Option<Best> = None;
        let mut stalled = 0;

        for iter in 0..=tol.max_iter {
            iterations = iter;
            let z_psd = self.v_of(&y);
            let z_lp = self.z_lp(&y);
            let dobj = self.b.dot(&y) + self.constant;
            let pobj = self.primal_objective(&x_psd, &x_lp);
            let rp = &self.b - self.apply_a(&x_psd, &x_lp);
            let pinf = rp.norm() / b_norm;
            if !(dobj.is_finite() && pobj.is_finite()) {
                status = SolveStatus::NumericalFailure;
                break;
            }
            history.push(IterateObjectives {
                primal: dobj,
                dual: pobj,
            });
            let gap = (pobj - dobj).abs() / pobj.abs().max(dobj.abs()).max(1.0);
            if best.as_ref().is_none_or(|b| gap.max(pinf) < b.gap.max(b.pinf)) {
                stalled = 0;
                best = Some(Best {
                    x_psd: x_psd.clone(),
                    x_lp: x_lp.clone(),
                    y: y.clone(),
                    gap,
                    pinf,
                });
            } else {
                stalled += 1;
            }
            if gap <= INNER_TARGET * tol.gap_tol && pinf <= INNER_TARGET * tol.feas_tol {
                status = SolveStatus::Optimal;
                break;
            }
            if iter == tol.max_iter {
                break;
            }
            if stalled >= STALL_ITERS {
                status = SolveStatus::NumericalFailure;
                break;
            }

            let mu = (inner(&x_psd, &z_psd) + x_lp.dot(&z_lp)) / dim_total;
            let Some(zinv) = hermitian_cholesky(&z_psd).map(|c| c.inverse()) else {
                status = SolveStatus::NumericalFailure;
                break;
            };
            let schur = self.schur(&x_psd, &zinv, &x_lp, &z_lp);
            let Some(chol) = Solver::new(schur) else {
                status = SolveStatus::NumericalFailure;
                break;
            };

            let Some(aff) = self.direction(&chol, &x_psd, &x_lp, &zinv, &z_lp, &rp, 0.0, None)
            else {
                status = SolveStatus::NumericalFailure;
                break;
            };
            let ap = max_step(&x_psd, &aff.dx_psd, &x_lp, &aff.dx_lp).min(1.0);
            let ad = max_step(&z_psd, &aff.dz_psd, &z_lp, &aff.dz_lp).min(1.0);
            let mu_aff = (inner(
                &(&x_psd + &aff.dx_psd * Complex64::new(ap, 0.0)),
                &(&z_psd + &aff.dz_psd * Complex64::new(ad, 0.0)),
            ) + (&x_lp + &aff.dx_lp * ap).dot(&(&z_lp + &aff.dz_lp * ad)))
                / dim_total;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let corr_psd = &aff.dx_psd * &aff.dz_psd;
            let corr_lp = aff.dx_lp.component_mul(&aff.dz_lp);
            let Some(dir) = self.direction(
                &chol,
                &x_psd,
                &x_lp,
                &zinv,
                &z_lp,
                &rp,
                sigma * mu,
                Some((&corr_psd, &corr_lp)),
            ) else {
                status = SolveStatus::NumericalFailure;
                break;
            };
            // A common step length keeps the iterates better centred than
            // separate primal and dual steps on these degenerate problems.
            let step = (STEP_FRACTION
                * max_step(&x_psd, &dir.dx_psd, &x_lp, &dir.dx_lp)
                    .min(max_step(&z_psd, &dir.dz_psd, &z_lp, &dir.dz_lp)))
            .min(1.0);
            if !step.is_finite() {
                status = SolveStatus::NumericalFailure;
                break;
            }
            x_psd += &dir.dx_psd * Complex64::new(step, 0.0);
            x_psd = hermitian_part(&x_psd);
            x_lp += &dir.dx_lp * step;
            y += &dir.dy * step;
        }

        let Some(best) = best else {
            return self.report(&x_psd, &x_lp, &y, f64::INFINITY, status, iterations, history);
        };
        // Stalling near the boundary after the requested accuracy was reached
        // still counts as converged.
        if status != SolveStatus::Optimal && best.gap <= tol.gap_tol && best.pinf <= tol.feas_tol {
            status = SolveStatus::Optimal;
        }
        self.report(&best.x_psd, &best.x_lp, &best.y, best.gap, status, iterations, history)
    }

    fn primal_objective(&self, x_psd: &CMatrix, x_lp: &DVector<f64>) -> f64 {
        self.p.diag_value * x_psd.trace().re + self.c_lp.dot(x_lp) + self.constant
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        x_psd: &CMatrix,
        x_lp: &DVector<f64>,
        y: &DVector<f64>,
        iterate_gap: f64,
        status: SolveStatus,
        iterations: usize,
        history: Vec<IterateObjectives>,
    ) -> SdpSolution {
        let b_norm = 1.0 + self.b.norm();
        let v = self.v_of(y);
        let t = self.p.best_t(&v);
        let objective = self.p.evaluate(t, &v);
        let pobj = self.primal_objective(x_psd, x_lp);
        let duality_gap = ((pobj - objective).max(0.0)
            / pobj.abs().max(objective.abs()).max(1.0))
        .min(iterate_gap);
        let rp = &self.b - self.apply_a(x_psd, x_lp);

        let mut kkt_residuals = Vec::with_capacity(self.nl + self.n + 2);
        for r in &self.p.gain_constraints {
            kkt_residuals.push((t - inner(r, &v)).max(0.0));
        }
        for i in 0..self.n {
            kkt_residuals.push((v[(i, i)].re - self.p.diag_value).abs());
        }
        kkt_residuals.push((-hermitian_eig(&v).min()).max(0.0));
        kkt_residuals.push(rp.norm() / b_norm);

        SdpSolution {
            t,
            v,
            report: SolveReport {
                status,
                objective,
                duality_gap,
                iterations,
                kkt_residuals,
            },
            history,
        }
    }
}

struct Best {
    x_psd: CMatrix,
    x_lp: DVector<f64>,
    y: DVector<f64>,
    gap: f64,
    pinf: f64,
}

/// Cholesky of the Schur complement with an LU fallback.
enum Solver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Solver {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(Solver::Chol(c));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(Solver::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let out = match self {
            Solver::Chol(c) => c.solve(rhs),
            Solver::Lu(lu) => lu.solve(rhs)?,
        };
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Largest `α` keeping `X + α·ΔX ⪰ 0` and `x + α·Δx ≥ 0` (may be infinite).
fn max_step(x_psd: &CMatrix, dx_psd: &CMatrix, x_lp: &DVector<f64>, dx_lp: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (v, dv) in x_lp.iter().zip(dx_lp.iter()) {
        if *dv < 0.0 {
            alpha = alpha.min(-v / dv);
        }
    }
    let scaled = match hermitian_cholesky(x_psd) {
        Some(chol) => {
            let l = chol.l();
            let t = l
                .solve_lower_triangular(dx_psd)
                .expect("Cholesky factor is non-singular");
            l.solve_lower_triangular(&t.adjoint())
                .expect("Cholesky factor is non-singular")
        }
        // Cholesky can reject a matrix whose smallest eigenvalue is positive
        // but tiny next to its largest; scale by the eigendecomposition.
        None => {
            let eig = hermitian_eig(x_psd);
            if eig.min() <= 0.0 {
                return 0.0;
            }
            let inv_sqrt: Vec<f64> = eig.values.iter().map(|v| 1.0 / v.sqrt()).collect();
            let q = &eig.vectors;
            let mut w = q.adjoint() * dx_psd * q;
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    w[(r, c)] *= inv_sqrt[r] * inv_sqrt[c];
                }
            }
            hermitian_part(&w)
        }
    };
    let lmin = hermitian_eig(&scaled).min();
    if lmin < 0.0 {
        alpha = alpha.min(-1.0 / lmin);
    }
    alpha
}
