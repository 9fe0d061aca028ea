//! Physical model of a movable-antenna linear array.
//!
//! Positions are measured in meters along the array axis, angles in radians
//! from the axis (`0..=π`). Weights are analog phase shifts with the constant
//! element magnitude `1/√N`, so a [`WeightVector`] only stores phases.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::ModelError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance (meters) used by [`is_feasible`].
pub const POSITION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    /// Length `D` of the region the antennas may move in, meters.
    pub aperture: f64,
    pub wavelength: f64,
    pub min_spacing: f64,
    pub carrier_freq: f64,
}

impl ArrayConfig {
    pub fn new(
        n_antennas: usize,
        aperture: f64,
        wavelength: f64,
        min_spacing: f64,
    ) -> Result<Self, ModelError> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(ModelError::InvalidArray(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Self::with_carrier(
            n_antennas,
            aperture,
            wavelength,
            min_spacing,
            SPEED_OF_LIGHT / wavelength,
        )
    }

    pub fn from_carrier(
        n_antennas: usize,
        aperture: f64,
        carrier_freq: f64,
        min_spacing: f64,
    ) -> Result<Self, ModelError> {
        if !(carrier_freq.is_finite() && carrier_freq > 0.0) {
            return Err(ModelError::InvalidArray(format!(
                "carrier frequency must be positive, got {carrier_freq}"
            )));
        }
        Self::with_carrier(
            n_antennas,
            aperture,
            SPEED_OF_LIGHT / carrier_freq,
            min_spacing,
            carrier_freq,
        )
    }

    /// Builds a configuration where both wavelength and carrier are given;
    /// they must agree with the speed of light to 1e-6 relative.
    pub fn with_carrier(
        n_antennas: usize,
        aperture: f64,
        wavelength: f64,
        min_spacing: f64,
        carrier_freq: f64,
    ) -> Result<Self, ModelError> {
        let cfg = Self {
            n_antennas,
            aperture,
            wavelength,
            min_spacing,
            carrier_freq,
        };
        let errors = cfg.violations();
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ModelError::InvalidArray(errors.join("; ")))
        }
    }

    /// All invariant violations of this configuration (empty when valid).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_antennas == 0 {
            out.push("number of antennas must be at least 1".to_string());
        }
        if !(self.aperture.is_finite() && self.aperture > 0.0) {
            out.push(format!("aperture must be positive, got {}", self.aperture));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            out.push(format!("wavelength must be positive, got {}", self.wavelength));
        }
        if !(self.min_spacing.is_finite() && self.min_spacing >= 0.0) {
            out.push(format!(
                "minimum spacing must be non-negative, got {}",
                self.min_spacing
            ));
        }
        if self.n_antennas >= 1
            && (self.n_antennas - 1) as f64 * self.min_spacing > self.aperture + POSITION_TOL
        {
            out.push(format!(
                "infeasible geometry: (N-1)*d_min = {} exceeds aperture {}",
                (self.n_antennas - 1) as f64 * self.min_spacing,
                self.aperture
            ));
        }
        if self.carrier_freq.is_finite() && self.wavelength.is_finite() {
            let rel = (self.wavelength * self.carrier_freq - SPEED_OF_LIGHT).abs() / SPEED_OF_LIGHT;
            if rel > 1e-6 {
                out.push(format!(
                    "wavelength {} m and carrier {} Hz disagree with the speed of light",
                    self.wavelength, self.carrier_freq
                ));
            }
        } else {
            out.push("carrier frequency must be finite".to_string());
        }
        out
    }

    /// `2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

/// Antenna coordinates in meters, kept in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionVector(Vec<f64>);

impl PositionVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, ModelError> {
        if coords.is_empty() {
            return Err(ModelError::InvalidPositions("no antennas".into()));
        }
        if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
            return Err(ModelError::InvalidPositions(format!(
                "non-finite coordinate {v}"
            )));
        }
        if coords.windows(2).any(|w| w[1] < w[0]) {
            return Err(ModelError::InvalidPositions(
                "coordinates must be sorted ascending".into(),
            ));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `x_N - x_1`.
    pub fn span(&self) -> f64 {
        self.0[self.0.len() - 1] - self.0[0]
    }
}

/// Constant-modulus analog beamformer, stored as phases `φ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn from_phases(phases: Vec<f64>) -> Result<Self, ModelError> {
        if phases.is_empty() {
            return Err(ModelError::InvalidPositions("empty weight vector".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::InvalidPositions("non-finite phase".into()));
        }
        Ok(Self(phases))
    }

    /// Takes the argument of every entry; magnitudes are discarded. A zero
    /// entry maps to phase 0.
    pub fn from_complex(values: &[Complex64]) -> Result<Self, ModelError> {
        Self::from_phases(values.iter().map(|v| v.arg()).collect())
    }

    /// All-zero phases.
    pub fn uniform(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn phases(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Complex weights `(1/√N)·e^{jφ_n}`.
    pub fn weights(&self) -> Vec<Complex64> {
        let scale = 1.0 / (self.0.len() as f64).sqrt();
        self.0
            .iter()
            .map(|&p| Complex64::from_polar(scale, p))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub theta_min: f64,
    pub theta_max: f64,
    pub samples: usize,
}

impl Region {
    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }
}

/// `K` disjoint angular subregions, each with its own sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSpec {
    regions: Vec<Region>,
}

/// Default sample count for a region of the given width: about one sample
/// per degree, endpoints included, never fewer than two.
pub fn default_samples(width: f64) -> usize {
    let degrees = width.to_degrees();
    ((degrees - 1e-9).ceil().max(0.0) as usize + 1).max(2)
}

impl CoverageSpec {
    /// `regions` are `(θ_min, θ_max)` pairs in radians.
    pub fn new(regions: &[(f64, f64)], samples: &[usize]) -> Result<Self, ModelError> {
        if regions.len() != samples.len() {
            return Err(ModelError::DimensionMismatch {
                expected: regions.len(),
                got: samples.len(),
            });
        }
        let regions: Vec<Region> = regions
            .iter()
            .zip(samples)
            .map(|(&(lo, hi), &l)| Region {
                theta_min: lo,
                theta_max: hi,
                samples: l,
            })
            .collect();
        let errors = validate_regions(&regions);
        if errors.is_empty() {
            Ok(Self { regions })
        } else {
            Err(ModelError::InvalidCoverage(errors.join("; ")))
        }
    }

    /// Regions sampled at the default density (see [`default_samples`]).
    pub fn with_default_density(regions: &[(f64, f64)]) -> Result<Self, ModelError> {
        let samples: Vec<usize> = regions
            .iter()
            .map(|&(lo, hi)| default_samples(hi - lo))
            .collect();
        Self::new(regions, &samples)
    }

    /// Degenerate coverage consisting of a single steering angle.
    pub fn point(theta: f64) -> Result<Self, ModelError> {
        if !(0.0..=PI).contains(&theta) {
            return Err(ModelError::InvalidCoverage(format!(
                "angle {theta} outside [0, π]"
            )));
        }
        Ok(Self {
            regions: vec![Region {
                theta_min: theta,
                theta_max: theta,
                samples: 1,
            }],
        })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn total_samples(&self) -> usize {
        self.regions.iter().map(|r| r.samples).sum()
    }

    /// Same regions with `(L - 1)·factor + 1` samples each, so the original
    /// grid points are contained in the refined grid.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            regions: self
                .regions
                .iter()
                .map(|r| Region {
                    samples: if r.samples <= 1 {
                        1
                    } else {
                        (r.samples - 1) * factor + 1
                    },
                    ..*r
                })
                .collect(),
        }
    }
}

fn validate_regions(regions: &[Region]) -> Vec<String> {
    let mut errors = Vec::new();
    if regions.is_empty() {
        errors.push("at least one region is required".to_string());
    }
    for (k, r) in regions.iter().enumerate() {
        if !(r.theta_min.is_finite() && r.theta_max.is_finite()) {
            errors.push(format!("region {k}: non-finite bounds"));
            continue;
        }
        if r.theta_min < 0.0 || r.theta_max > PI {
            errors.push(format!("region {k}: bounds must lie in [0, π]"));
        }
        if r.theta_min >= r.theta_max {
            errors.push(format!(
                "region {k}: empty region (θ_min = {} ≥ θ_max = {})",
                r.theta_min, r.theta_max
            ));
        }
        if r.samples < 2 {
            errors.push(format!("region {k}: needs at least 2 samples, got {}", r.samples));
        }
    }
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            let (a, b) = (&regions[i], &regions[j]);
            if !(a.theta_max < b.theta_min || b.theta_max < a.theta_min) {
                errors.push(format!("regions {i} and {j} are not disjoint"));
            }
        }
    }
    errors
}

/// Flattened sample angles with the region each one came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    angles: Vec<f64>,
    region_index: Vec<usize>,
}

impl SampleGrid {
    /// Arbitrary list of angles, all attributed to region 0.
    pub fn from_angles(angles: Vec<f64>) -> Self {
        let region_index = vec![0; angles.len()];
        Self {
            angles,
            region_index,
        }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn region_index(&self) -> &[usize] {
        &self.region_index
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Uniform per-region sampling `θ_l = θ_min + (l-1)/(L-1)·(θ_max - θ_min)`.
pub fn discretize(spec: &CoverageSpec) -> SampleGrid {
    let mut angles = Vec::with_capacity(spec.total_samples());
    let mut region_index = Vec::with_capacity(spec.total_samples());
    for (k, r) in spec.regions().iter().enumerate() {
        if r.samples <= 1 {
            angles.push(r.theta_min);
            region_index.push(k);
            continue;
        }
        let width = r.width();
        let last = r.samples - 1;
        for l in 0..r.samples {
            let theta = if l == last {
                r.theta_max
            } else {
                r.theta_min + (l as f64 / last as f64) * width
            };
            angles.push(theta);
            region_index.push(k);
        }
    }
    SampleGrid {
        angles,
        region_index,
    }
}

/// Array response `a(x, θ)` with entries `e^{j(2π/λ) x_n cos θ}`.
pub fn steering_vector(x: &PositionVector, theta: f64, wavelength: f64) -> Vec<Complex64> {
    let alpha = 2.0 * PI / wavelength * theta.cos();
    x.coords()
        .iter()
        .map(|&xn| Complex64::from_polar(1.0, alpha * xn))
        .collect()
}

/// `|ω^H a(x, θ)|²`.
pub fn beam_gain(w: &WeightVector, x: &PositionVector, theta: f64, wavelength: f64) -> f64 {
    debug_assert_eq!(w.len(), x.len());
    let alpha = 2.0 * PI / wavelength * theta.cos();
    let n = w.len() as f64;
    let sum: Complex64 = w
        .phases()
        .iter()
        .zip(x.coords())
        .map(|(&phi, &xn)| Complex64::from_polar(1.0, alpha * xn - phi))
        .sum();
    sum.norm_sqr() / n
}

/// Beam gain through the pairwise form `(1/N) Σ_p Σ_q cos(α(x_p - x_q) - (φ_p - φ_q))`.
pub fn beam_gain_pairwise(
    w: &WeightVector,
    x: &PositionVector,
    theta: f64,
    wavelength: f64,
) -> f64 {
    let alpha = 2.0 * PI / wavelength * theta.cos();
    let (phi, xs) = (w.phases(), x.coords());
    let n = phi.len();
    let mut total = 0.0;
    for p in 0..n {
        for q in 0..n {
            total += (alpha * (xs[p] - xs[q]) - (phi[p] - phi[q])).cos();
        }
    }
    total / n as f64
}

/// Minimum beam gain over the grid.
pub fn min_gain(w: &WeightVector, x: &PositionVector, grid: &SampleGrid, wavelength: f64) -> f64 {
    grid.angles()
        .iter()
        .map(|&theta| beam_gain(w, x, theta, wavelength))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintKind {
    /// `x_n ≥ 0`.
    Lower { index: usize },
    /// `x_n ≤ D`.
    Upper { index: usize },
    /// `x_n - x_{n-1} ≥ d_min`.
    Spacing { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    /// Signed slack; negative means violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Checks the box and spacing constraints within [`POSITION_TOL`].
pub fn is_feasible(x: &PositionVector, cfg: &ArrayConfig) -> FeasibilityReport {
    let mut violations = Vec::new();
    let xs = x.coords();
    if xs.len() != cfg.n_antennas {
        // A count mismatch cannot be expressed as a slack; report it on index 0.
        violations.push(Violation {
            kind: ConstraintKind::Lower { index: 0 },
            slack: f64::NEG_INFINITY,
        });
    }
    for (n, &v) in xs.iter().enumerate() {
        if v < -POSITION_TOL {
            violations.push(Violation {
                kind: ConstraintKind::Lower { index: n },
                slack: v,
            });
        }
        if v > cfg.aperture + POSITION_TOL {
            violations.push(Violation {
                kind: ConstraintKind::Upper { index: n },
                slack: cfg.aperture - v,
            });
        }
    }
    for n in 1..xs.len() {
        let slack = xs[n] - xs[n - 1] - cfg.min_spacing;
        if slack < -POSITION_TOL {
            violations.push(Violation {
                kind: ConstraintKind::Spacing { index: n },
                slack,
            });
        }
    }
    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}
