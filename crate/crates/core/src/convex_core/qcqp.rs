//! Log-barrier method for the position subproblem.
//!
//! Variables are `(x, t)`. Every constraint is concave in `(x, t)`:
//! `r_l = xᵀA_l x + b_lᵀx + c_l - t`, `x_n`, `D - x_n` and
//! `x_n - x_{n-1} - d_min`, so the barrier `-t - μ Σ log r_i` is convex.
//! Damped Newton steps centre the iterate for a fixed barrier weight `μ`,
//! then `μ` shrinks tenfold. At a centred point the multipliers
//! `λ_i = μ / r_i` make the Lagrangian stationary and the duality gap equals
//! `μ` times the number of barrier terms.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::linalg::symmetric_eig;
use super::{SolveReport, SolveStatus, SolverTolerances};
use crate::error::SolverError;

/// Factor applied to the barrier weight `μ` after each centring.
const MU_DECREASE: f64 = 0.1;
/// Newton decrement, relative to `μ`, at which an intermediate centring
/// stops. `φ/μ` is self-concordant, so the decrement is only meaningful in
/// units of `μ`.
const CENTERED: f64 = 1e-3;
/// Weight of the strictly interior center when blending it with a hint.
const HINT_BLEND: f64 = 1e-3;

/// `xᵀA x + bᵀx + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl QuadConstraint {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x).dot(x) + self.b.dot(x) + self.c
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x * 2.0 + &self.b
    }
}

/// Maximize `t` subject to `q_l(x) ≥ t`, `0 ≤ x_n ≤ upper` and
/// `x_n - x_{n-1} ≥ min_spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpProblem {
    dim: usize,
    constraints: Vec<QuadConstraint>,
    upper: f64,
    min_spacing: f64,
}

impl QcqpProblem {
    /// Rejects problems without quadratic constraints (the objective would be
    /// unbounded) and any `A` whose largest eigenvalue exceeds `1e-9`.
    pub fn new(
        dim: usize,
        constraints: Vec<QuadConstraint>,
        upper: f64,
        min_spacing: f64,
    ) -> Result<Self, SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidProblem(msg));
        if dim == 0 {
            return bad("dimension must be positive".into());
        }
        if constraints.is_empty() {
            return bad("no quadratic constraints: t is unbounded".into());
        }
        if !(upper.is_finite() && upper > 0.0) {
            return bad(format!("upper bound must be positive, got {upper}"));
        }
        if !(min_spacing.is_finite() && min_spacing >= 0.0) {
            return bad(format!("minimum spacing must be non-negative, got {min_spacing}"));
        }
        for (l, q) in constraints.iter().enumerate() {
            if q.a.nrows() != dim || q.a.ncols() != dim || q.b.len() != dim {
                return bad(format!("constraint {l} has the wrong shape"));
            }
            if q.a.iter().chain(q.b.iter()).any(|v| !v.is_finite()) || !q.c.is_finite() {
                return bad(format!("constraint {l} has non-finite data"));
            }
            let scale = q.a.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if (&q.a - q.a.transpose()).amax() > 1e-12 * scale {
                return bad(format!("constraint {l}: A is not symmetric"));
            }
            let top = *symmetric_eig(&q.a).0.last().expect("dim > 0");
            if top > 1e-9 {
                return bad(format!(
                    "constraint {l}: A is not negative semidefinite (λ_max = {top:e})"
                ));
            }
        }
        Ok(Self {
            dim,
            constraints,
            upper,
            min_spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[QuadConstraint] {
        &self.constraints
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    /// `min_l q_l(x)`.
    pub fn best_t(&self, x: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|q| q.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    fn spare_length(&self) -> f64 {
        self.upper - (self.dim - 1) as f64 * self.min_spacing
    }

    /// Equal margins on every linear constraint.
    fn center(&self) -> DVector<f64> {
        let gap = self.spare_length() / (self.dim + 1) as f64;
        DVector::from_fn(self.dim, |n, _| {
            gap * (n + 1) as f64 + n as f64 * self.min_spacing
        })
    }

    /// Slacks of the lower bounds, upper bounds, then spacings.
    fn linear_slacks(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = self.dim;
        let mut out = Vec::with_capacity(3 * n - 1);
        out.extend(x.iter().copied());
        out.extend(x.iter().map(|v| self.upper - v));
        out.extend((1..n).map(|i| x[i] - x[i - 1] - self.min_spacing));
        out
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.linear_slacks(x).iter().all(|&s| s > 0.0)
    }

    fn n_barrier_terms(&self) -> usize {
        self.constraints.len() + 3 * self.dim - 1
    }
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub t: f64,
    pub x: Vec<f64>,
    pub report: SolveReport,
}

pub fn solve_qcqp(p: &QcqpProblem, tol: &SolverTolerances) -> Result<QcqpSolution, SolverError> {
    solve_qcqp_from(p, tol, None)
}

/// Like [`solve_qcqp`] but starts near `hint` when it is feasible.
///
/// Layout of `report.kkt_residuals`: complementarity `λ_i·r_i` for every
/// barrier term (quadratic constraints, lower bounds, upper bounds, spacings)
/// followed by the infinity norm of the Lagrangian gradient.
pub fn solve_qcqp_from(
    p: &QcqpProblem,
    tol: &SolverTolerances,
    hint: Option<&[f64]>,
) -> Result<QcqpSolution, SolverError> {
    let n = p.dim;
    let spare = p.spare_length();
    let scale_tol = 1e-12 * p.upper.max(1.0);
    if spare < -scale_tol {
        return Err(SolverError::Infeasible(SolveReport {
            status: SolveStatus::Infeasible,
            objective: f64::NEG_INFINITY,
            duality_gap: f64::INFINITY,
            iterations: 0,
            kkt_residuals: vec![-spare],
        }));
    }
    if spare <= scale_tol {
        // Only one point satisfies the ordering and the box.
        let x = DVector::from_fn(n, |i, _| i as f64 * p.min_spacing);
        let t = p.best_t(&x);
        return Ok(QcqpSolution {
            t,
            x: x.iter().copied().collect(),
            report: SolveReport {
                status: SolveStatus::Optimal,
                objective: t,
                duality_gap: 0.0,
                iterations: 0,
                kkt_residuals: vec![0.0; p.n_barrier_terms() + 1],
            },
        });
    }

    let center = p.center();
    let x_ref = match hint {
        Some(h) if h.len() == n => {
            let h = DVector::from_column_slice(h);
            let blended = &h * (1.0 - HINT_BLEND) + &center * HINT_BLEND;
            if p.strictly_feasible(&blended) {
                blended
            } else {
                center
            }
        }
        _ => center,
    };
    let mut shifted = Shifted::new(p, &x_ref);
    let m = p.n_barrier_terms();
    let nq = p.constraints.len();
    let mut z = DVector::zeros(n + 1);
    z[n] = p.best_t(&x_ref) - 1.0;
    // Linear slacks are carried as variables and updated along each step.
    // Recomputing `D - x_n` from `x` would round a slack near the boundary to
    // a few ulps of `D`, while a large multiplier needs it far smaller.
    let mut lin = DVector::from_vec(p.linear_slacks(&x_ref));
    let lin_jac = shifted.jacobian(&z).rows(nq, m - nq).into_owned();
    // Large enough that the first centring is dominated by the barrier, so
    // the start needs no long damped-Newton walk along `t`.
    let mut mu = 10.0 * z[n].abs().max(1.0) / m as f64;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut c = shifted.slacks(&z, &lin);
    let mut lambda = c.map(|v| mu / v);
    let mut stationarity = f64::INFINITY;

    'outer: loop {
        shifted.recenter(&mut z);
        let t_scale = 1.0 + z[n].abs();
        let last_stage = m as f64 * mu <= tol.gap_tol * t_scale && mu <= tol.feas_tol;
        loop {
            c = shifted.slacks(&z, &lin);
            let jac = shifted.jacobian(&z);
            let inv = c.map(|v| 1.0 / v);
            // ∇φ for φ = -t - μ Σ log c_i.
            let mut grad = -jac.tr_mul(&inv) * mu;
            grad[n] -= 1.0;
            if !grad.amax().is_finite() {
                status = SolveStatus::NumericalFailure;
                break 'outer;
            }

            let mut h = DMatrix::zeros(n + 1, n + 1);
            for (l, q) in p.constraints.iter().enumerate() {
                let mut block = h.view_mut((0, 0), (n, n));
                block -= &q.a * (2.0 * mu * inv[l]);
            }
            let weights = inv.map(|v| v * v * mu);
            let scaled = DMatrix::from_fn(m, n + 1, |i, j| jac[(i, j)] * weights[i]);
            let jdj = jac.tr_mul(&scaled);
            h += &jdj;

            if last_stage {
                if let Some(l) = refine_multipliers(&jac, &jdj, &inv, &weights, &grad, mu) {
                    let mut residual = -jac.tr_mul(&l);
                    residual[n] -= 1.0;
                    stationarity = residual.amax();
                    lambda = l;
                    let complementarity = lambda.component_mul(&c).amax();
                    if stationarity <= tol.feas_tol
                        && complementarity <= tol.feas_tol
                        && lambda.dot(&c) <= tol.gap_tol * (1.0 + z[n].abs())
                    {
                        status = SolveStatus::Optimal;
                        break 'outer;
                    }
                }
            }
            if iterations == tol.max_iter {
                break 'outer;
            }
            iterations += 1;

            let Some(dz) = solve_spd(h, &-&grad) else {
                status = SolveStatus::NumericalFailure;
                break 'outer;
            };
            let decrement = -grad.dot(&dz);
            if !last_stage && decrement <= CENTERED * mu {
                break;
            }

            let dlin = &lin_jac * &dz;
            let merit = |zz: &DVector<f64>, ll: &DVector<f64>| -> Option<f64> {
                let cc = shifted.slacks(zz, ll);
                if cc.iter().any(|&v| v <= 0.0) {
                    return None;
                }
                Some(-zz[n] - mu * cc.iter().map(|v| v.ln()).sum::<f64>())
            };
            let f0 = merit(&z, &lin).expect("iterate is strictly feasible");
            // Rounding in the merit once the barrier term is tiny next to t.
            let noise = 16.0 * f64::EPSILON * f0.abs().max(1.0);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = &z + &dz * alpha;
                let trial_lin = &lin + &dlin * alpha;
                if let Some(f1) = merit(&trial, &trial_lin) {
                    if f1 <= f0 - 0.25 * alpha * decrement + noise {
                        moved = trial != z || trial_lin != lin;
                        z = trial;
                        lin = trial_lin;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                if last_stage {
                    // Centred to working precision without certifying.
                    status = SolveStatus::NumericalFailure;
                    break 'outer;
                }
                break;
            }
        }
        mu *= MU_DECREASE;
    }

    let x = &z.rows(0, n).into_owned() + &shifted.x_ref;
    let mut kkt_residuals: Vec<f64> = lambda
        .iter()
        .zip(c.iter())
        .map(|(l, ci)| (l * ci).abs())
        .collect();
    kkt_residuals.push(stationarity);
    let t_best = p.best_t(&x);
    let report = SolveReport {
        status,
        objective: t_best,
        duality_gap: lambda.dot(&c).abs() / (1.0 + t_best.abs()),
        iterations,
        kkt_residuals,
    };
    match status {
        SolveStatus::Optimal => Ok(QcqpSolution {
            t: t_best,
            x: x.iter().copied().collect(),
            report,
        }),
        SolveStatus::MaxIter => Err(SolverError::MaxIter(report)),
        SolveStatus::Infeasible => Err(SolverError::Infeasible(report)),
        SolveStatus::NumericalFailure => Err(SolverError::NumericalFailure(report)),
    }
}

/// Multipliers `λ = μ/c + δ` with the smallest `D⁻¹`-weighted correction
/// `δ = D J (JᵀD J)⁻¹ r` that zeroes the Lagrangian gradient `r`, where
/// `D = diag(μ/c²)`. `μ/c` alone inherits the rounding of tiny slacks.
/// Returns `None` if the correction makes a multiplier negative.
fn refine_multipliers(
    jac: &DMatrix<f64>,
    jdj: &DMatrix<f64>,
    inv: &DVector<f64>,
    weights: &DVector<f64>,
    grad: &DVector<f64>,
    mu: f64,
) -> Option<DVector<f64>> {
    let w = solve_spd(jdj.clone(), grad)?;
    let delta = (jac * w).component_mul(weights);
    let lambda = inv * mu + delta;
    lambda.iter().all(|&l| l >= 0.0).then_some(lambda)
}

/// The problem re-expanded around `x_ref` in the variable `d = x - x_ref`.
/// Surrogate constants can be large next to their value, so expanding
/// around a nearby point avoids cancellation when evaluating constraints.
struct Shifted<'a> {
    p: &'a QcqpProblem,
    x_ref: DVector<f64>,
    /// `(q_l(x_ref), ∇q_l(x_ref))`.
    local: Vec<(f64, DVector<f64>)>,
}

impl<'a> Shifted<'a> {
    fn new(p: &'a QcqpProblem, x_ref: &DVector<f64>) -> Self {
        let local = p
            .constraints
            .iter()
            .map(|q| (q.eval(x_ref), q.gradient(x_ref)))
            .collect();
        Self {
            p,
            x_ref: x_ref.clone(),
            local,
        }
    }

    /// Moves the expansion point to `x_ref + d` and resets `d` to zero. The
    /// new constants come from the old expansion, which is exact for
    /// quadratics, so no cancellation-prone evaluation is repeated.
    fn recenter(&mut self, z: &mut DVector<f64>) {
        let n = self.p.dim;
        let d = z.rows(0, n).into_owned();
        for (q, (v, g)) in self.p.constraints.iter().zip(self.local.iter_mut()) {
            let ad = &q.a * &d;
            *v += g.dot(&d) + ad.dot(&d);
            *g += ad * 2.0;
        }
        self.x_ref += d;
        z.rows_mut(0, n).fill(0.0);
    }

    /// All constraint values at `z = (d, t)`: quadratic, then the carried
    /// linear slacks `lin` (lower, upper, spacing).
    fn slacks(&self, z: &DVector<f64>, lin: &DVector<f64>) -> DVector<f64> {
        let n = self.p.dim;
        let d = z.rows(0, n).into_owned();
        let t = z[n];
        let mut out: Vec<f64> = self
            .p
            .constraints
            .iter()
            .zip(&self.local)
            .map(|(q, (v, g))| v + g.dot(&d) + (&q.a * &d).dot(&d) - t)
            .collect();
        out.extend(lin.iter().copied());
        DVector::from_vec(out)
    }

    /// Rows are constraint gradients with respect to `(d, t)`.
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.p.dim;
        let d = z.rows(0, n).into_owned();
        let m = self.p.n_barrier_terms();
        let mut jac = DMatrix::zeros(m, n + 1);
        let nq = self.p.constraints.len();
        for (l, (q, (_, g))) in self.p.constraints.iter().zip(&self.local).enumerate() {
            let grad = g + &q.a * &d * 2.0;
            for j in 0..n {
                jac[(l, j)] = grad[j];
            }
            jac[(l, n)] = -1.0;
        }
        for i in 0..n {
            jac[(nq + i, i)] = 1.0;
            jac[(nq + n + i, i)] = -1.0;
        }
        for i in 1..n {
            jac[(nq + 2 * n + i - 1, i)] = 1.0;
            jac[(nq + 2 * n + i - 1, i - 1)] = -1.0;
        }
        jac
    }
}

/// Solves `K d = r` for symmetric positive semidefinite `K`. A common shift
/// of all positions can leave `K` singular to working precision, so a
/// growing multiple of the identity is added until Cholesky succeeds.
fn solve_spd(mut k: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = k.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for step in 0..12 {
        if let Some(ch) = Cholesky::new(k.clone()) {
            let d = ch.solve(rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        let next = scale * f64::EPSILON * 10f64.powi(step);
        for i in 0..k.nrows() {
            k[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}
