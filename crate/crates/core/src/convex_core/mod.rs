//! Small dense convex solvers used by the weight and position updates.
//!
//! * [`solve_sdp`]: primal-dual interior point (HKM direction, Mehrotra
//!   predictor-corrector) for max `c_t·t + ⟨C, V⟩` subject to
//!   `Tr(R_l V) ≥ t`, `V(n, n) = d` and `V ⪰ 0` over complex Hermitian `V`.
//! * [`solve_qcqp`]: log-barrier method for max `t` subject to concave
//!   quadratic constraints `xᵀA x + bᵀx + c ≥ t`, the box `[0, D]` and the
//!   ordering `x_n - x_{n-1} ≥ d_min`.
//!
//! Both are deterministic: fixed iteration schedules, no randomness.

mod dump;
mod linalg;
mod qcqp;
mod sdp;

pub use dump::{write_qcqp, write_sdp};
pub use linalg::{
    hermitian_cholesky, hermitian_eig, hermitian_part, inner, max_asymmetry, principal_singular_pair,
    symmetric_eig, CMatrix, HermitianEig, SingularPair,
};
pub use qcqp::{solve_qcqp, solve_qcqp_from, QcqpProblem, QcqpSolution, QuadConstraint};
pub use sdp::{solve_sdp, solve_sdp_best_effort, IterateObjectives, SdpProblem, SdpSolution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    /// Duality gap relative to `max(1, |p|, |d|)`.
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Non-negative residual per constraint (see each solver for the layout).
    pub kkt_residuals: Vec<f64>,
}

impl SolveReport {
    pub fn max_residual(&self) -> f64 {
        self.kkt_residuals.iter().copied().fold(0.0, f64::max)
    }
}
