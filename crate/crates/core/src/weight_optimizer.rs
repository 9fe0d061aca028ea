//! Weight update for fixed antenna positions.
//!
//! The beamformer is lifted to `V = ωω^H` with `V(n,n) = 1/N`. The rank-one
//! requirement is moved into the objective as `ρ·f(V)` with
//! `f(V) = Tr(V) - σ_max(V)`, and `f` is replaced at every iteration by its
//! linearization around the current point, which majorizes it. Each
//! iteration is therefore one SDP and the penalized objective
//! `t - ρ·f(V)` never decreases.

use log::debug;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array_model::{min_gain, steering_vector, PositionVector, SampleGrid, WeightVector};
use crate::convex_core::{
    hermitian_eig, inner, principal_singular_pair, solve_sdp_best_effort, CMatrix, SdpProblem,
    SolveStatus, SolverTolerances,
};
use crate::error::SolverError;

/// Eigenvalue gap below which the principal eigenvector is considered
/// arbitrary.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// Relative duality gap up to which a stalled SDP solve is still used as an
/// SCA candidate. The candidate is feasible by construction and is only kept
/// if it does not lower the penalized objective.
pub const STALLED_GAP_TOL: f64 = 1e-6;

/// `f(V) = Tr(V) - σ_max(V)`; zero exactly for rank-one PSD matrices.
pub fn rank_penalty(v: &CMatrix) -> f64 {
    v.trace().re - principal_singular_pair(v).sigma
}

/// Local point of the penalty linearization.
#[derive(Debug, Clone)]
pub struct PenaltyState {
    pub rho: f64,
    pub v_current: CMatrix,
    /// Unit singular vector of the largest singular value of `v_current`.
    pub s_current: DVector<Complex64>,
    pub sigma_current: f64,
}

impl PenaltyState {
    pub fn new(rho: f64, v: CMatrix) -> Self {
        let pair = principal_singular_pair(&v);
        Self {
            rho,
            sigma_current: pair.sigma,
            v_current: v,
            s_current: pair.left,
        }
    }
}

/// First-order expansion of `f` at a local point:
/// `f̃(V) = Tr(V) - σ(V⁽ⁱ⁾) - Re⟨ss^H, V - V⁽ⁱ⁾⟩`.
#[derive(Debug, Clone)]
pub struct LinearizedPenalty {
    anchor: CMatrix,
    sigma_anchor: f64,
    s: DVector<Complex64>,
}

impl LinearizedPenalty {
    pub fn eval(&self, v: &CMatrix) -> f64 {
        let diff = v - &self.anchor;
        let quad = self.s.dotc(&(&diff * &self.s)).re;
        v.trace().re - self.sigma_anchor - quad
    }

    /// Hermitian `C` with `-ρ·f̃(V) = ⟨C, V⟩ + const`.
    pub fn objective_matrix(&self, rho: f64) -> CMatrix {
        let n = self.s.len();
        (&self.s * self.s.adjoint() - CMatrix::identity(n, n)) * Complex64::new(rho, 0.0)
    }
}

pub fn linearize_penalty(state: &PenaltyState) -> LinearizedPenalty {
    LinearizedPenalty {
        anchor: state.v_current.clone(),
        sigma_anchor: state.sigma_current,
        s: state.s_current.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightScaOptions {
    pub rho: f64,
    /// Stop once the penalized objective improves by less than this.
    pub sca_tol: f64,
    pub max_iter: usize,
    /// `f(V)` at or below this counts as rank one.
    pub rank_tol: f64,
    /// Double `ρ` every 10 iterations (capped at 1e4).
    pub rho_ramp: bool,
    /// Candidates drawn when the principal eigenvector is degenerate.
    pub randomization_trials: usize,
    pub seed: u64,
    pub solver: SolverTolerances,
}

impl Default for WeightScaOptions {
    fn default() -> Self {
        Self {
            rho: 20.0,
            sca_tol: 0.01,
            max_iter: 100,
            rank_tol: 1e-3,
            rho_ramp: false,
            randomization_trials: 100,
            seed: 0,
            solver: SolverTolerances::default(),
        }
    }
}

/// One SCA iterate; iteration 0 is the starting point `ωω^H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTraceRecord {
    pub iteration: usize,
    pub t: f64,
    pub penalty: f64,
    /// `t - ρ·f(V)`.
    pub objective: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct WeightScaOutcome {
    pub weights: WeightVector,
    pub v_final: CMatrix,
    pub rank_penalty: f64,
    /// `rank_penalty <= rank_tol`.
    pub rank_one: bool,
    /// The principal eigenvector was degenerate and randomization was used.
    pub degenerate: bool,
    /// The extracted weights were worse on the grid than the starting
    /// weights, which were returned instead.
    pub kept_initial: bool,
    pub min_gain: f64,
    pub trace: Vec<WeightTraceRecord>,
}

/// `R_l = a(x, θ_l) a(x, θ_l)^H` for every grid angle.
pub fn gain_matrices(x: &PositionVector, grid: &SampleGrid, wavelength: f64) -> Vec<CMatrix> {
    grid.angles()
        .iter()
        .map(|&theta| {
            let a = DVector::from_vec(steering_vector(x, theta, wavelength));
            &a * a.adjoint()
        })
        .collect()
}

fn outer(w: &WeightVector) -> CMatrix {
    let v = DVector::from_vec(w.weights());
    &v * v.adjoint()
}

pub fn sca_weights(
    x: &PositionVector,
    wavelength: f64,
    grid: &SampleGrid,
    w_init: &WeightVector,
    opts: &WeightScaOptions,
) -> Result<WeightScaOutcome, SolverError> {
    let n = x.len();
    if w_init.len() != n {
        return Err(SolverError::InvalidProblem(format!(
            "{} weights for {n} antennas",
            w_init.len()
        )));
    }
    if !(opts.rho >= 0.0) {
        return Err(SolverError::InvalidProblem(format!(
            "penalty must be non-negative, got {}",
            opts.rho
        )));
    }
    let init_gain = min_gain(w_init, x, grid, wavelength);
    let gains = gain_matrices(x, grid, wavelength);
    let diag = 1.0 / n as f64;
    let best_t = |v: &CMatrix| gains.iter().map(|r| inner(r, v)).fold(f64::INFINITY, f64::min);

    let mut rho = opts.rho;
    let mut v = outer(w_init);
    let mut t = best_t(&v);
    let mut penalty = rank_penalty(&v);
    let mut trace = vec![WeightTraceRecord {
        iteration: 0,
        t,
        penalty,
        objective: t - rho * penalty,
        rho,
    }];

    if n > 1 {
        for iter in 1..=opts.max_iter {
            let current = t - rho * penalty;
            let lin = linearize_penalty(&PenaltyState::new(rho, v.clone()));
            let problem = SdpProblem::new(lin.objective_matrix(rho), 1.0, gains.clone(), diag)?;
            let sol = solve_sdp_best_effort(&problem, &opts.solver);
            let report = &sol.report;
            if report.status != SolveStatus::Optimal {
                if report.duality_gap > STALLED_GAP_TOL {
                    return Err(match report.status {
                        SolveStatus::MaxIter => SolverError::MaxIter(sol.report),
                        SolveStatus::Infeasible => SolverError::Infeasible(sol.report),
                        _ => SolverError::NumericalFailure(sol.report),
                    });
                }
                debug!(
                    "weight SCA iteration {iter}: SDP stalled at gap {:.3e}",
                    report.duality_gap
                );
            }
            let new_penalty = rank_penalty(&sol.v);
            let candidate = sol.t - rho * new_penalty;
            if candidate < current {
                // Solver inexactness at the fixed point; the previous iterate stands.
                debug!("weight SCA stopped at iteration {iter}: {candidate} < {current}");
                break;
            }
            v = sol.v;
            t = sol.t;
            penalty = new_penalty;
            trace.push(WeightTraceRecord {
                iteration: iter,
                t,
                penalty,
                objective: candidate,
                rho,
            });
            if candidate - current < opts.sca_tol {
                break;
            }
            if opts.rho_ramp && iter % 10 == 0 {
                rho = (rho * 2.0).min(1e4);
            }
        }
    }

    let extracted = extract_weights(&v);
    let mut degenerate = extracted.degenerate;
    let mut weights = extracted.weights;
    if degenerate {
        weights = gaussian_randomization(
            &v,
            x,
            grid,
            wavelength,
            opts.randomization_trials.max(1),
            opts.seed,
        );
    }
    let mut gain = min_gain(&weights, x, grid, wavelength);
    let mut kept_initial = false;
    if gain < init_gain {
        weights = w_init.clone();
        gain = init_gain;
        kept_initial = true;
        degenerate = false;
    }
    Ok(WeightScaOutcome {
        weights,
        rank_one: penalty <= opts.rank_tol,
        rank_penalty: penalty,
        v_final: v,
        degenerate,
        kept_initial,
        min_gain: gain,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct ExtractedWeights {
    pub weights: WeightVector,
    /// The top two eigenvalues are closer than [`DEGENERACY_GAP`].
    pub degenerate: bool,
}

/// Phases of `√σ_max · u_max`, the scaled principal eigenvector.
pub fn extract_weights(v: &CMatrix) -> ExtractedWeights {
    let n = v.nrows();
    let eig = hermitian_eig(v);
    let scale = Complex64::new(eig.max().max(0.0).sqrt(), 0.0);
    let u: Vec<Complex64> = eig.vectors.column(n - 1).iter().map(|&c| c * scale).collect();
    let degenerate = n > 1 && eig.values[n - 1] - eig.values[n - 2] < DEGENERACY_GAP;
    ExtractedWeights {
        weights: WeightVector::from_complex(&u).expect("eigenvector entries are finite"),
        degenerate,
    }
}

/// Draws `trials` vectors `U Λ^{1/2} r` with `r ~ CN(0, I)`, projects each to
/// unit modulus and keeps the one with the largest minimum gain on the grid.
/// Trial `k` uses stream `k` of a ChaCha generator seeded with `seed`.
pub fn gaussian_randomization(
    v: &CMatrix,
    x: &PositionVector,
    grid: &SampleGrid,
    wavelength: f64,
    trials: usize,
    seed: u64,
) -> WeightVector {
    let n = v.nrows();
    let eig = hermitian_eig(v);
    let factor = CMatrix::from_fn(n, n, |r, c| {
        eig.vectors[(r, c)] * Complex64::new(eig.values[c].max(0.0).sqrt(), 0.0)
    });
    let mut best: Option<(f64, WeightVector)> = None;
    for trial in 0..trials.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let r = DVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let sample = &factor * r;
        let w = WeightVector::from_complex(sample.as_slice()).expect("finite sample");
        let g = min_gain(&w, x, grid, wavelength);
        if best.as_ref().map_or(true, |(bg, _)| g > *bg) {
            best = Some((g, w));
        }
    }
    best.expect("at least one trial").1
}
