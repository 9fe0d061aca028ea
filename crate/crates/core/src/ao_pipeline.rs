//! Alternating optimization driver and the two reference schemes.
//!
//! [`run_ao`] alternates the weight update (positions fixed) and the position
//! update (weights fixed), warm-starting each from the previous outer
//! iterate. [`run_fpa_baseline`] keeps a half-wavelength array and only
//! updates weights; [`run_mafab_baseline`] keeps the initial weights and only
//! moves antennas.

use std::fmt;
use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DVector;
use thiserror::Error;

use crate::array_model::{
    discretize, is_feasible, min_gain, ArrayConfig, CoverageSpec, PositionVector, SampleGrid,
    WeightVector,
};
use crate::convex_core::{solve_sdp, CMatrix, SdpProblem, SolverTolerances};
use crate::error::{Error, ModelError, SolverError};
use crate::position_optimizer::{sca_positions, PositionScaOptions, PositionTraceRecord};
use crate::to_db;
use crate::weight_optimizer::{
    gain_matrices, gaussian_randomization, sca_weights, WeightScaOptions, WeightTraceRecord,
};

/// Allowed drop of the outer objective before an iteration is rejected.
pub const DEGRADATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoConfig {
    pub rho: f64,
    pub ao_tol: f64,
    pub sca_tol_v: f64,
    pub sca_tol_x: f64,
    pub max_ao_iters: usize,
    pub randomization_trials: usize,
    pub seed: u64,
    pub max_sca_iters: usize,
    pub rank_tol: f64,
    pub rho_ramp: bool,
    pub solver: SolverTolerances,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            rho: 20.0,
            ao_tol: 1e-5,
            sca_tol_v: 0.01,
            sca_tol_x: 0.01,
            max_ao_iters: 50,
            randomization_trials: 100,
            seed: 0,
            max_sca_iters: 100,
            rank_tol: 1e-3,
            rho_ramp: false,
            solver: SolverTolerances::default(),
        }
    }
}

impl AoConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("ao_tol", self.ao_tol),
            ("sca_tol_v", self.sca_tol_v),
            ("sca_tol_x", self.sca_tol_x),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            out.push(format!("rho must be non-negative, got {}", self.rho));
        }
        if self.randomization_trials == 0 {
            out.push("randomization_trials must be at least 1".into());
        }
        if self.max_ao_iters == 0 {
            out.push("max_ao_iters must be at least 1".into());
        }
        if self.max_sca_iters == 0 {
            out.push("max_sca_iters must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.violations().as_slice() {
            [] => Ok(()),
            v => Err(ModelError::InvalidArray(v.join("; "))),
        }
    }

    pub fn weight_options(&self) -> WeightScaOptions {
        WeightScaOptions {
            rho: self.rho,
            sca_tol: self.sca_tol_v,
            max_iter: self.max_sca_iters,
            rank_tol: self.rank_tol,
            rho_ramp: self.rho_ramp,
            randomization_trials: self.randomization_trials,
            seed: self.seed,
            solver: self.solver,
        }
    }

    pub fn position_options(&self) -> PositionScaOptions {
        PositionScaOptions {
            sca_tol: self.sca_tol_x,
            max_iter: self.max_sca_iters,
            solver: self.solver,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Proposed,
    Fpa,
    MaFab,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Fpa, Scheme::MaFab];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Fpa => "fpa",
            Scheme::MaFab => "mafab",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Validation,
    Initialization,
    Weights,
    Positions,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validation => "validation",
            Stage::Initialization => "initialization",
            Stage::Weights => "weight update",
            Stage::Positions => "position update",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub init: Duration,
    pub weights: Duration,
    pub positions: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AoFlags {
    /// An outer iteration lowered the objective and was discarded.
    pub degraded: bool,
    /// The last weight update ended above the rank tolerance.
    pub not_rank_one: bool,
    /// Weight extraction fell back to Gaussian randomization at least once.
    pub randomized_extraction: bool,
}

/// Traces collected so far; kept on failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AoTraces {
    /// True minimum gain after every outer iteration, starting with the
    /// initial point.
    pub ao_trace: Vec<f64>,
    pub weight_traces: Vec<Vec<WeightTraceRecord>>,
    pub position_traces: Vec<Vec<PositionTraceRecord>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoResult {
    pub scheme: Scheme,
    pub weights: WeightVector,
    pub positions: PositionVector,
    /// `min_gain(weights, positions, grid)`, recomputed after the run.
    pub min_gain: f64,
    pub traces: AoTraces,
    pub rank_penalty: Option<f64>,
    pub seed: u64,
    pub flags: AoFlags,
    pub timings: StageTimings,
}

impl AoResult {
    pub fn min_gain_db(&self) -> f64 {
        to_db(self.min_gain)
    }

    /// Outer iterations after the initial point.
    pub fn iterations(&self) -> usize {
        self.traces.ao_trace.len().saturating_sub(1)
    }

    pub fn ao_trace(&self) -> &[f64] {
        &self.traces.ao_trace
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{scheme}: {stage} failed: {source}")]
pub struct AoError {
    pub scheme: Scheme,
    pub stage: Stage,
    #[source]
    pub source: Error,
    pub partial: Box<AoTraces>,
}

/// Equal spacing `x_n = nD/(N+1)`.
pub fn init_positions(cfg: &ArrayConfig) -> Result<PositionVector, ModelError> {
    let n = cfg.n_antennas;
    let step = cfg.aperture / (n + 1) as f64;
    if n > 1 && step < cfg.min_spacing {
        return Err(ModelError::InvalidArray(format!(
            "equal spacing D/(N+1) = {step} is below the minimum spacing {}; \
             use a smaller minimum spacing or a larger aperture",
            cfg.min_spacing
        )));
    }
    PositionVector::new((1..=n).map(|k| k as f64 * step).collect())
}

/// `x_n = (n-1)λ/2`.
pub fn fpa_positions(cfg: &ArrayConfig) -> PositionVector {
    PositionVector::new(
        (0..cfg.n_antennas)
            .map(|k| k as f64 * cfg.wavelength / 2.0)
            .collect(),
    )
    .expect("finite, sorted")
}

/// Solves the plain relaxation at `x0` and draws Gaussian candidates from it.
pub fn init_weights(
    x0: &PositionVector,
    grid: &SampleGrid,
    wavelength: f64,
    trials: usize,
    seed: u64,
    tol: &SolverTolerances,
) -> Result<WeightVector, SolverError> {
    let n = x0.len();
    if n == 1 {
        return Ok(WeightVector::uniform(1));
    }
    let problem = SdpProblem::new(
        CMatrix::zeros(n, n),
        1.0,
        gain_matrices(x0, grid, wavelength),
        1.0 / n as f64,
    )?;
    let sol = solve_sdp(&problem, tol)?;
    Ok(gaussian_randomization(
        &sol.v, x0, grid, wavelength, trials, seed,
    ))
}

/// Shifts every coordinate so that the first antenna sits at 0.
pub fn normalize_positions(x: &PositionVector) -> PositionVector {
    let first = x.coords()[0];
    PositionVector::new(x.coords().iter().map(|v| v - first).collect()).expect("shift keeps order")
}

struct Runner<'a> {
    cfg: &'a ArrayConfig,
    ao: &'a AoConfig,
    grid: SampleGrid,
    scheme: Scheme,
    traces: AoTraces,
    timings: StageTimings,
    flags: AoFlags,
    rank_penalty: Option<f64>,
}

impl<'a> Runner<'a> {
    fn new(
        scheme: Scheme,
        cfg: &'a ArrayConfig,
        spec: &CoverageSpec,
        ao: &'a AoConfig,
    ) -> Result<Self, AoError> {
        let mut problems = cfg.violations();
        problems.extend(ao.violations());
        let runner = Self {
            cfg,
            ao,
            grid: discretize(spec),
            scheme,
            traces: AoTraces::default(),
            timings: StageTimings::default(),
            flags: AoFlags::default(),
            rank_penalty: None,
        };
        if !problems.is_empty() {
            return Err(runner.fail(
                Stage::Validation,
                ModelError::InvalidArray(problems.join("; ")).into(),
            ));
        }
        Ok(runner)
    }

    fn fail(&self, stage: Stage, source: Error) -> AoError {
        AoError {
            scheme: self.scheme,
            stage,
            source,
            partial: Box::new(self.traces.clone()),
        }
    }

    fn init(&mut self, x0: &PositionVector) -> Result<WeightVector, AoError> {
        let start = Instant::now();
        let w = init_weights(
            x0,
            &self.grid,
            self.cfg.wavelength,
            self.ao.randomization_trials,
            self.ao.seed,
            &self.ao.solver,
        )
        .map_err(|e| self.fail(Stage::Initialization, e.into()))?;
        self.timings.init += start.elapsed();
        self.traces
            .ao_trace
            .push(min_gain(&w, x0, &self.grid, self.cfg.wavelength));
        Ok(w)
    }

    fn weight_step(
        &mut self,
        x: &PositionVector,
        w: &WeightVector,
    ) -> Result<WeightVector, AoError> {
        let start = Instant::now();
        let out = sca_weights(
            x,
            self.cfg.wavelength,
            &self.grid,
            w,
            &self.ao.weight_options(),
        )
        .map_err(|e| self.fail(Stage::Weights, e.into()))?;
        self.timings.weights += start.elapsed();
        self.flags.not_rank_one = !out.rank_one;
        self.flags.randomized_extraction |= out.degenerate;
        self.rank_penalty = Some(out.rank_penalty);
        self.traces.weight_traces.push(out.trace);
        Ok(out.weights)
    }

    fn position_step(
        &mut self,
        x: &PositionVector,
        w: &WeightVector,
    ) -> Result<PositionVector, AoError> {
        let start = Instant::now();
        let out = sca_positions(w, x, &self.grid, self.cfg, &self.ao.position_options())
            .map_err(|e| self.fail(Stage::Positions, e))?;
        self.timings.positions += start.elapsed();
        self.traces.position_traces.push(out.trace);
        Ok(out.positions)
    }

    /// Appends `gain` to the outer trace unless it is a degradation.
    /// Returns whether the loop should continue.
    fn record(&mut self, gain: f64) -> (bool, bool) {
        let prev = *self.traces.ao_trace.last().expect("initial point recorded");
        if gain < prev - DEGRADATION_TOL {
            warn!(
                "{}: outer iteration lowered the minimum gain from {prev} to {gain}; keeping the previous point",
                self.scheme
            );
            self.flags.degraded = true;
            return (false, false);
        }
        self.traces.ao_trace.push(gain);
        (true, gain - prev >= self.ao.ao_tol)
    }

    fn finish(self, w: WeightVector, x: PositionVector) -> AoResult {
        let gain = min_gain(&w, &x, &self.grid, self.cfg.wavelength);
        debug_assert!(is_feasible(&x, self.cfg).feasible || self.scheme == Scheme::Fpa);
        info!(
            "{}: min gain {:.6} dB after {} outer iterations",
            self.scheme,
            to_db(gain),
            self.traces.ao_trace.len().saturating_sub(1)
        );
        AoResult {
            scheme: self.scheme,
            weights: w,
            positions: x,
            min_gain: gain,
            traces: self.traces,
            rank_penalty: self.rank_penalty,
            seed: self.ao.seed,
            flags: self.flags,
            timings: self.timings,
        }
    }
}

/// Alternates weight and position updates until the minimum gain improves
/// by less than `ao_tol` or `max_ao_iters` is reached.
pub fn run_ao(cfg: &ArrayConfig, spec: &CoverageSpec, ao: &AoConfig) -> Result<AoResult, AoError> {
    let mut r = Runner::new(Scheme::Proposed, cfg, spec, ao)?;
    let mut x = init_positions(cfg).map_err(|e| r.fail(Stage::Initialization, e.into()))?;
    let mut w = r.init(&x)?;
    for _ in 0..ao.max_ao_iters {
        let w_new = r.weight_step(&x, &w)?;
        let x_new = r.position_step(&x, &w_new)?;
        let gain = min_gain(&w_new, &x_new, &r.grid, cfg.wavelength);
        let (accept, go_on) = r.record(gain);
        if accept {
            w = w_new;
            x = x_new;
        }
        if !go_on {
            break;
        }
    }
    Ok(r.finish(w, x))
}

/// Half-wavelength array; one weight update from the initial weights,
/// positions never move.
pub fn run_fpa_baseline(
    cfg: &ArrayConfig,
    spec: &CoverageSpec,
    ao: &AoConfig,
) -> Result<AoResult, AoError> {
    let mut r = Runner::new(Scheme::Fpa, cfg, spec, ao)?;
    let x = fpa_positions(cfg);
    let mut w = r.init(&x)?;
    let w_new = r.weight_step(&x, &w)?;
    if r.record(min_gain(&w_new, &x, &r.grid, cfg.wavelength)).0 {
        w = w_new;
    }
    Ok(r.finish(w, x))
}

/// Initial weights kept fixed; one position update from the initial
/// positions.
pub fn run_mafab_baseline(
    cfg: &ArrayConfig,
    spec: &CoverageSpec,
    ao: &AoConfig,
) -> Result<AoResult, AoError> {
    let mut r = Runner::new(Scheme::MaFab, cfg, spec, ao)?;
    let mut x = init_positions(cfg).map_err(|e| r.fail(Stage::Initialization, e.into()))?;
    let w = r.init(&x)?;
    let x_new = r.position_step(&x, &w)?;
    if r.record(min_gain(&w, &x_new, &r.grid, cfg.wavelength)).0 {
        x = x_new;
    }
    Ok(r.finish(w, x))
}

pub fn run_scheme(
    scheme: Scheme,
    cfg: &ArrayConfig,
    spec: &CoverageSpec,
    ao: &AoConfig,
) -> Result<AoResult, AoError> {
    match scheme {
        Scheme::Proposed => run_ao(cfg, spec, ao),
        Scheme::Fpa => run_fpa_baseline(cfg, spec, ao),
        Scheme::MaFab => run_mafab_baseline(cfg, spec, ao),
    }
}

/// Best `(spacing, phase difference)` for two antennas found by a grid
/// search, with the resulting minimum gain. Used as a reference for tiny
/// instances: the gain only depends on these two differences.
pub fn two_antenna_grid_search(
    cfg: &ArrayConfig,
    grid: &SampleGrid,
    spacing_step: f64,
    phase_step: f64,
) -> (f64, f64, f64) {
    assert_eq!(cfg.n_antennas, 2);
    let cosines: DVector<f64> = DVector::from_iterator(
        grid.len(),
        grid.angles()
            .iter()
            .map(|t| 2.0 * std::f64::consts::PI / cfg.wavelength * t.cos()),
    );
    let max_spacing = cfg.aperture;
    let n_d = ((max_spacing - cfg.min_spacing) / spacing_step).floor() as usize;
    let n_p = (2.0 * std::f64::consts::PI / phase_step).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=n_d {
        let d = cfg.min_spacing + i as f64 * spacing_step;
        for k in 0..n_p {
            let dphi = k as f64 * phase_step;
            // |1 + e^{j(αd - Δφ)}|² / 2 = 1 + cos(αd - Δφ)
            let g = cosines
                .iter()
                .map(|a| 1.0 + (a * d - dphi).cos())
                .fold(f64::INFINITY, f64::min);
            if g > best.0 {
                best = (g, d, dphi);
            }
        }
    }
    best
}
