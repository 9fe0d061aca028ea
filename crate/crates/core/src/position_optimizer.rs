//! Position update for fixed weights.
//!
//! Every pairwise cosine in the beam gain is bounded from below by its
//! second-order expansion with curvature 1, which turns the gain at each
//! angle into a concave quadratic of the positions. Maximizing the minimum
//! of these quadratics is a concave QCQP; iterating from the previous
//! solution gives a non-decreasing true minimum gain.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::array_model::{
    is_feasible, min_gain, ArrayConfig, PositionVector, SampleGrid, WeightVector,
};
use crate::convex_core::{
    solve_qcqp_from, symmetric_eig, QcqpProblem, QuadConstraint, SolverTolerances,
};
use crate::error::{Error, ModelError};

/// `cos z0 - sin z0 · (z - z0) - (z - z0)² / 2`, a global lower bound on
/// `cos z` that touches it at `z0`.
pub fn cosine_minorant(z: f64, z0: f64) -> f64 {
    let d = z - z0;
    z0.cos() - z0.sin() * d - 0.5 * d * d
}

/// `xᵀA x + bᵀx + c`, a lower bound on the beam gain at one angle that is
/// tight at `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurrogate {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    /// `(2π/λ) cos θ`.
    pub alpha: f64,
    pub anchor: Vec<f64>,
}

impl QuadraticSurrogate {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        (&self.a * &x).dot(&x) + self.b.dot(&x) + self.c
    }

    pub fn to_constraint(&self) -> QuadConstraint {
        QuadConstraint {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c,
        }
    }
}

/// Surrogate of `|ω^H a(x, θ)|²` around `anchor`.
///
/// With `u_pq = α(x_p - x_q) - (φ_p - φ_q)` evaluated at the anchor:
/// `A = -α²(I - 11ᵀ/N)`,
/// `b_p = (2α/N) Σ_q [α(x_p - x_q) - sin u_pq]`,
/// `c = (1/N) Σ_pq [cos u_pq + α(x_p - x_q) sin u_pq - (α(x_p - x_q))²/2]`.
pub fn build_surrogate(
    w: &WeightVector,
    anchor: &PositionVector,
    theta: f64,
    wavelength: f64,
) -> QuadraticSurrogate {
    let alpha = 2.0 * PI / wavelength * theta.cos();
    let (phi, x) = (w.phases(), anchor.coords());
    let n = x.len();
    let nf = n as f64;
    let a = DMatrix::from_fn(n, n, |r, c| {
        let w = if r == c { 1.0 - 1.0 / nf } else { -1.0 / nf };
        -alpha * alpha * w
    });
    let mut b = DVector::zeros(n);
    let mut c = 0.0;
    for p in 0..n {
        for q in 0..n {
            let ax = alpha * (x[p] - x[q]);
            let u = ax - (phi[p] - phi[q]);
            let s = u.sin();
            b[p] += ax - s;
            c += u.cos() + ax * s - 0.5 * ax * ax;
        }
    }
    b *= 2.0 * alpha / nf;
    QuadraticSurrogate {
        a,
        b,
        c: c / nf,
        alpha,
        anchor: x.to_vec(),
    }
}

/// True when every eigenvalue of `A` is at most `1e-9` (relative to its
/// largest entry, floor 1).
pub fn certify_nsd(s: &QuadraticSurrogate) -> bool {
    let scale = s.a.amax().max(1.0);
    symmetric_eig(&s.a)
        .0
        .last()
        .map_or(true, |&top| top <= 1e-9 * scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionScaOptions {
    /// Stop once the true minimum gain improves by less than this.
    pub sca_tol: f64,
    pub max_iter: usize,
    pub solver: SolverTolerances,
}

impl Default for PositionScaOptions {
    fn default() -> Self {
        Self {
            sca_tol: 0.01,
            max_iter: 100,
            solver: SolverTolerances::default(),
        }
    }
}

/// One SCA iterate; iteration 0 is the starting point, where the surrogate
/// value equals the true minimum gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionTraceRecord {
    pub iteration: usize,
    pub surrogate_t: f64,
    pub min_gain: f64,
}

#[derive(Debug, Clone)]
pub struct PositionScaOutcome {
    pub positions: PositionVector,
    pub min_gain: f64,
    pub trace: Vec<PositionTraceRecord>,
    /// A QCQP solution lowered the true minimum gain and was discarded.
    pub rejected_step: bool,
}

pub fn sca_positions(
    w: &WeightVector,
    x_init: &PositionVector,
    grid: &SampleGrid,
    cfg: &ArrayConfig,
    opts: &PositionScaOptions,
) -> Result<PositionScaOutcome, Error> {
    let n = cfg.n_antennas;
    if x_init.len() != n || w.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            got: if x_init.len() != n { x_init.len() } else { w.len() },
        }
        .into());
    }
    let report = is_feasible(x_init, cfg);
    if !report.feasible {
        return Err(Error::InfeasibleStart(format!("{:?}", report.violations)));
    }
    let lambda = cfg.wavelength;
    let mut x = x_init.clone();
    let mut gain = min_gain(w, &x, grid, lambda);
    let mut trace = vec![PositionTraceRecord {
        iteration: 0,
        surrogate_t: gain,
        min_gain: gain,
    }];
    let mut rejected_step = false;

    if n > 1 {
        for iter in 1..=opts.max_iter {
            let constraints = grid
                .angles()
                .iter()
                .map(|&theta| build_surrogate(w, &x, theta, lambda).to_constraint())
                .collect();
            let problem = QcqpProblem::new(n, constraints, cfg.aperture, cfg.min_spacing)?;
            let sol = solve_qcqp_from(&problem, &opts.solver, Some(x.coords()))?;
            let candidate = PositionVector::new(sol.x)?;
            let new_gain = min_gain(w, &candidate, grid, lambda);
            if new_gain < gain || !is_feasible(&candidate, cfg).feasible {
                debug!("position SCA stopped at iteration {iter}: {new_gain} < {gain}");
                rejected_step = true;
                break;
            }
            let improvement = new_gain - gain;
            x = candidate;
            gain = new_gain;
            trace.push(PositionTraceRecord {
                iteration: iter,
                surrogate_t: sol.t,
                min_gain: gain,
            });
            if improvement < opts.sca_tol {
                break;
            }
        }
    }
    Ok(PositionScaOutcome {
        positions: x,
        min_gain: gain,
        trace,
        rejected_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::beam_gain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minorant_examples() {
        assert_eq!(cosine_minorant(0.0, 0.0), 1.0);
        assert!((cosine_minorant(1.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((cosine_minorant(PI, PI) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn minorant_is_global_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1_000_000 {
            let z: f64 = rng.random_range(-20.0..20.0);
            let z0: f64 = rng.random_range(-20.0..20.0);
            assert!(cosine_minorant(z, z0) <= z.cos() + 1e-12);
        }
    }

    #[test]
    fn surrogate_tight_and_below_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lambda = 0.3;
        for _ in 0..200 {
            let n = rng.random_range(2..7);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            xs.sort_by(f64::total_cmp);
            let x0 = PositionVector::new(xs).unwrap();
            let w = WeightVector::from_phases((0..n).map(|_| rng.random_range(-PI..PI)).collect())
                .unwrap();
            let theta = rng.random_range(0.0..PI);
            let s = build_surrogate(&w, &x0, theta, lambda);
            let g0 = beam_gain(&w, &x0, theta, lambda);
            assert!((s.eval(x0.coords()) - g0).abs() < 1e-9 * g0.max(1.0));
            assert!(certify_nsd(&s));
            for _ in 0..20 {
                let mut ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
                ys.sort_by(f64::total_cmp);
                let y = PositionVector::new(ys).unwrap();
                assert!(s.eval(y.coords()) <= beam_gain(&w, &y, theta, lambda) + 1e-9);
            }
        }
    }

    #[test]
    fn surrogate_curvature_spectrum() {
        let n = 5;
        let lambda = 0.25;
        let theta = 0.6;
        let x = PositionVector::new(vec![0.0, 0.2, 0.5, 0.7, 1.0]).unwrap();
        let s = build_surrogate(&WeightVector::uniform(n), &x, theta, lambda);
        let alpha = 2.0 * PI / lambda * f64::cos(theta);
        let (vals, _) = symmetric_eig(&s.a);
        assert!(vals[n - 1].abs() < 1e-9 * alpha * alpha);
        for v in &vals[..n - 1] {
            assert!((v + alpha * alpha).abs() < 1e-9 * alpha * alpha);
        }
    }

    #[test]
    fn broadside_surrogate_is_constant() {
        let x = PositionVector::new(vec![0.0, 0.4, 0.9]).unwrap();
        let w = WeightVector::from_phases(vec![0.0, 0.5, 1.0]).unwrap();
        let s = build_surrogate(&w, &x, PI / 2.0, 0.3);
        assert!(s.a.amax() < 1e-20 && s.b.amax() < 1e-12);
        assert!((s.c - beam_gain(&w, &x, PI / 2.0, 0.3)).abs() < 1e-12);
    }

    #[test]
    fn rejects_infeasible_start() {
        let cfg = ArrayConfig::new(3, 1.0, 0.3, 0.15).unwrap();
        let x = PositionVector::new(vec![0.0, 0.1, 0.5]).unwrap();
        let grid = SampleGrid::from_angles(vec![0.5]);
        let err = sca_positions(
            &WeightVector::uniform(3),
            &x,
            &grid,
            &cfg,
            &PositionScaOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InfeasibleStart(_)));
    }

    #[test]
    fn two_antennas_match_spacing_search() {
        // With N = 2 the gain depends only on x2 - x1, so a 1-D scan over
        // [d_min, D] gives the optimum for fixed weights.
        let lambda = 1.0;
        let cfg = ArrayConfig::new(2, 4.0, lambda, 0.5).unwrap();
        let grid = SampleGrid::from_angles(
            (0..61).map(|k| (60.0 + k as f64).to_radians()).collect(),
        );
        let w = WeightVector::uniform(2);
        let mut best = f64::NEG_INFINITY;
        for k in 0..=3500 {
            let d = 0.5 + 1e-3 * k as f64;
            let x = PositionVector::new(vec![0.0, d]).unwrap();
            best = best.max(min_gain(&w, &x, &grid, lambda));
        }
        // Every spacing of at least one wavelength puts a null inside the
        // region, so the start is taken below that plateau where the local
        // method has a slope to follow.
        let x0 = PositionVector::new(vec![1.0, 1.8]).unwrap();
        let out = sca_positions(&w, &x0, &grid, &cfg, &PositionScaOptions::default()).unwrap();
        let gains: Vec<f64> = out.trace.iter().map(|r| r.min_gain).collect();
        assert!(gains.windows(2).all(|p| p[1] >= p[0] - 1e-9));
        assert!(is_feasible(&out.positions, &cfg).feasible);
        assert!((out.min_gain - best).abs() < 1e-2, "{} vs {best}", out.min_gain);
    }

    #[test]
    fn broadside_single_angle_keeps_positions() {
        let cfg = ArrayConfig::new(3, 2.0, 0.5, 0.25).unwrap();
        let x0 = PositionVector::new(vec![0.5, 1.0, 1.5]).unwrap();
        let grid = SampleGrid::from_angles(vec![PI / 2.0]);
        let w = WeightVector::uniform(3);
        let out = sca_positions(&w, &x0, &grid, &cfg, &PositionScaOptions::default()).unwrap();
        assert!((out.min_gain - 3.0).abs() < 1e-12);
        assert!(out.trace.len() <= 2);
    }

    #[test]
    fn hand_built_convex_surrogate_fails_certification() {
        let s = QuadraticSurrogate {
            a: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
            c: 0.0,
            alpha: 1.0,
            anchor: vec![0.0, 1.0],
        };
        assert!(!certify_nsd(&s));
        let flat = QuadraticSurrogate {
            a: DMatrix::zeros(2, 2),
            ..s
        };
        assert!(certify_nsd(&flat));
    }

    #[test]
    fn two_antenna_curvature_matrix() {
        let x = PositionVector::new(vec![0.0, 0.8]).unwrap();
        let s = build_surrogate(&WeightVector::uniform(2), &x, 0.4, 0.5);
        let a2 = s.alpha * s.alpha;
        let expected = DMatrix::from_row_slice(2, 2, &[-0.5 * a2, 0.5 * a2, 0.5 * a2, -0.5 * a2]);
        assert!((&s.a - expected).amax() < 1e-12 * a2);
    }

    #[test]
    fn single_antenna_is_returned_unchanged() {
        let cfg = ArrayConfig::new(1, 1.0, 0.3, 0.15).unwrap();
        let x = PositionVector::new(vec![0.4]).unwrap();
        let grid = SampleGrid::from_angles(vec![0.3, 1.0]);
        let out = sca_positions(
            &WeightVector::uniform(1),
            &x,
            &grid,
            &cfg,
            &PositionScaOptions::default(),
        )
        .unwrap();
        assert_eq!(out.positions, x);
        assert!((out.min_gain - 1.0).abs() < 1e-15);
    }
}
