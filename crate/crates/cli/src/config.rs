//! Experiment configuration: TOML parsing, unit handling and validation.
//!
//! Lengths are strings with an explicit unit (`"2.4 m"` or `"8 lambda"`),
//! angles are plain numbers in degrees. Validation collects every problem
//! before failing.

use std::path::PathBuf;

use macover_core::ao_pipeline::{AoConfig, Scheme};
use macover_core::array_model::{default_samples, ArrayConfig, CoverageSpec, SPEED_OF_LIGHT};
use macover_core::convex_core::SolverTolerances;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_CARRIER_HZ: f64 = 1e9;
pub const DEFAULT_APERTURE_LAMBDA: f64 = 8.0;
pub const DEFAULT_MIN_SPACING_LAMBDA: f64 = 0.5;
pub const DEFAULT_FINE_AUDIT_FACTOR: usize = 10;
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schemes: Option<Vec<String>>,
    output_dir: Option<PathBuf>,
    fine_audit_factor: Option<i64>,
    array: RawArray,
    #[serde(default)]
    region: Vec<RawRegion>,
    #[serde(default)]
    ao: RawAo,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    n_antennas: i64,
    carrier_freq: Option<f64>,
    wavelength: Option<String>,
    aperture: Option<String>,
    min_spacing: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    theta_min: f64,
    theta_max: f64,
    samples: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAo {
    rho: Option<f64>,
    ao_tol: Option<f64>,
    sca_tol_v: Option<f64>,
    sca_tol_x: Option<f64>,
    max_ao_iters: Option<i64>,
    randomization_trials: Option<i64>,
    seed: Option<u64>,
    max_sca_iters: Option<i64>,
    rank_tol: Option<f64>,
    rho_ramp: Option<bool>,
    solver_gap_tol: Option<f64>,
    solver_feas_tol: Option<f64>,
    solver_max_iter: Option<i64>,
}

/// One angular region in degrees with a resolved sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionDeg {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub samples: usize,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    pub regions: Vec<RegionDeg>,
    pub coverage: CoverageSpec,
    pub ao: AoConfig,
    pub schemes: Vec<Scheme>,
    pub output_dir: PathBuf,
    pub fine_audit_factor: usize,
}

/// Fully resolved configuration in SI units and degrees, as stored in the
/// manifest. The config hash is computed over its JSON form, so the output
/// directory does not take part in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub n_antennas: usize,
    pub aperture_m: f64,
    pub wavelength_m: f64,
    pub min_spacing_m: f64,
    pub carrier_freq_hz: f64,
    pub regions: Vec<RegionDeg>,
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
    pub solver_gap_tol: f64,
    pub solver_feas_tol: f64,
    pub solver_max_iter: usize,
    pub schemes: Vec<String>,
    pub fine_audit_factor: usize,
}

enum Unit {
    Meters,
    Wavelengths,
}

fn parse_length(field: &str, text: &str, errors: &mut Vec<String>) -> Option<(f64, Unit)> {
    let trimmed = text.trim();
    let (number, unit) = if let Some(v) = trimmed.strip_suffix("lambda") {
        (v, Unit::Wavelengths)
    } else if let Some(v) = trimmed.strip_suffix('m') {
        (v, Unit::Meters)
    } else {
        errors.push(format!(
            "{field}: `{text}` needs a unit suffix, `m` or `lambda`"
        ));
        return None;
    };
    match number.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Some((v, unit)),
        _ => {
            errors.push(format!("{field}: `{text}` is not a number with a unit"));
            None
        }
    }
}

fn to_meters(length: Option<(f64, Unit)>, wavelength: Option<f64>) -> Option<f64> {
    match length? {
        (v, Unit::Meters) => Some(v),
        (v, Unit::Wavelengths) => wavelength.map(|l| v * l),
    }
}

fn count(field: &str, value: Option<i64>, default: usize, min: usize, errors: &mut Vec<String>) -> usize {
    match value {
        None => default,
        Some(v) if v >= min as i64 => v as usize,
        Some(v) => {
            errors.push(format!("{field} must be at least {min}, got {v}"));
            default
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a TOML experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut errors = Vec::new();

    let n = if raw.array.n_antennas >= 1 {
        raw.array.n_antennas as usize
    } else {
        errors.push(format!(
            "array.n_antennas must be at least 1, got {}",
            raw.array.n_antennas
        ));
        0
    };
    let (wavelength, carrier) = match (&raw.array.wavelength, raw.array.carrier_freq) {
        (Some(_), Some(_)) => {
            errors.push("array: give either wavelength or carrier_freq, not both".into());
            (None, None)
        }
        (Some(text), None) => match parse_length("array.wavelength", text, &mut errors) {
            Some((v, Unit::Meters)) if v > 0.0 => (Some(v), Some(SPEED_OF_LIGHT / v)),
            Some((_, Unit::Wavelengths)) => {
                errors.push("array.wavelength must be given in meters".into());
                (None, None)
            }
            Some((v, _)) => {
                errors.push(format!("array.wavelength must be positive, got {v}"));
                (None, None)
            }
            None => (None, None),
        },
        (None, f) => {
            let f = f.unwrap_or(DEFAULT_CARRIER_HZ);
            if f.is_finite() && f > 0.0 {
                (Some(SPEED_OF_LIGHT / f), Some(f))
            } else {
                errors.push(format!("array.carrier_freq must be positive, got {f}"));
                (None, None)
            }
        }
    };
    let aperture = match &raw.array.aperture {
        Some(t) => to_meters(parse_length("array.aperture", t, &mut errors), wavelength),
        None => wavelength.map(|l| DEFAULT_APERTURE_LAMBDA * l),
    };
    let min_spacing = match &raw.array.min_spacing {
        Some(t) => to_meters(parse_length("array.min_spacing", t, &mut errors), wavelength),
        None => wavelength.map(|l| DEFAULT_MIN_SPACING_LAMBDA * l),
    };
    let mut array = None;
    if let (Some(wavelength), Some(carrier), Some(aperture), Some(min_spacing)) =
        (wavelength, carrier, aperture, min_spacing)
    {
        let cfg = ArrayConfig {
            n_antennas: n,
            aperture,
            wavelength,
            min_spacing,
            carrier_freq: carrier,
        };
        let violations = cfg.violations();
        if n >= 1 && violations.is_empty() {
            array = Some(cfg);
        } else {
            errors.extend(
                violations
                    .into_iter()
                    .filter(|v| n >= 1 || !v.contains("antennas"))
                    .map(|v| format!("array: {v}")),
            );
        }
    }

    let mut regions = Vec::new();
    if raw.region.is_empty() {
        errors.push("at least one [[region]] is required".into());
    }
    for (k, r) in raw.region.iter().enumerate() {
        let name = format!("region {}", k + 1);
        let mut ok = true;
        if !(r.theta_min.is_finite() && r.theta_max.is_finite()) {
            errors.push(format!("{name}: angles must be finite"));
            continue;
        }
        if r.theta_min < 0.0 || r.theta_max > 180.0 {
            errors.push(format!(
                "{name}: ({}°, {}°) must lie within [0°, 180°]",
                r.theta_min, r.theta_max
            ));
            ok = false;
        }
        if r.theta_min >= r.theta_max {
            errors.push(format!(
                "{name}: empty region ({}°, {}°); theta_min must be below theta_max",
                r.theta_min, r.theta_max
            ));
            ok = false;
        }
        let samples = match r.samples {
            Some(l) if l >= 2 => l as usize,
            Some(l) => {
                errors.push(format!("{name}: samples must be at least 2, got {l}"));
                ok = false;
                0
            }
            None => default_samples((r.theta_max - r.theta_min).max(0.0).to_radians()),
        };
        if ok {
            regions.push(RegionDeg {
                theta_min_deg: r.theta_min,
                theta_max_deg: r.theta_max,
                samples,
            });
        }
    }
    let mut coverage = None;
    if !regions.is_empty() && regions.len() == raw.region.len() {
        match coverage_from(&regions) {
            Ok(c) => coverage = Some(c),
            Err(e) => errors.push(e),
        }
    }

    let d = AoConfig::default();
    let ao = AoConfig {
        rho: raw.ao.rho.unwrap_or(d.rho),
        ao_tol: raw.ao.ao_tol.unwrap_or(d.ao_tol),
        sca_tol_v: raw.ao.sca_tol_v.unwrap_or(d.sca_tol_v),
        sca_tol_x: raw.ao.sca_tol_x.unwrap_or(d.sca_tol_x),
        max_ao_iters: count("ao.max_ao_iters", raw.ao.max_ao_iters, d.max_ao_iters, 1, &mut errors),
        randomization_trials: count(
            "ao.randomization_trials",
            raw.ao.randomization_trials,
            d.randomization_trials,
            1,
            &mut errors,
        ),
        seed: raw.ao.seed.unwrap_or(d.seed),
        max_sca_iters: count("ao.max_sca_iters", raw.ao.max_sca_iters, d.max_sca_iters, 1, &mut errors),
        rank_tol: raw.ao.rank_tol.unwrap_or(d.rank_tol),
        rho_ramp: raw.ao.rho_ramp.unwrap_or(d.rho_ramp),
        solver: SolverTolerances {
            gap_tol: raw.ao.solver_gap_tol.unwrap_or(d.solver.gap_tol),
            feas_tol: raw.ao.solver_feas_tol.unwrap_or(d.solver.feas_tol),
            max_iter: count(
                "ao.solver_max_iter",
                raw.ao.solver_max_iter,
                d.solver.max_iter,
                1,
                &mut errors,
            ),
        },
    };
    errors.extend(ao.violations().into_iter().map(|v| format!("ao: {v}")));
    for (name, v) in [
        ("solver_gap_tol", ao.solver.gap_tol),
        ("solver_feas_tol", ao.solver.feas_tol),
    ] {
        if !(v.is_finite() && v > 0.0) {
            errors.push(format!("ao: {name} must be positive, got {v}"));
        }
    }

    let names = raw
        .schemes
        .unwrap_or_else(|| Scheme::ALL.iter().map(|s| s.name().to_string()).collect());
    let mut schemes = Vec::new();
    if names.is_empty() {
        errors.push("schemes must not be empty".into());
    }
    for name in &names {
        match Scheme::parse(name) {
            Some(s) if schemes.contains(&s) => errors.push(format!("scheme `{name}` listed twice")),
            Some(s) => schemes.push(s),
            None => errors.push(format!(
                "unknown scheme `{name}`; expected proposed, fpa or mafab"
            )),
        }
    }

    if let Some(cfg) = &array {
        let moves = schemes.iter().any(|s| *s != Scheme::Fpa);
        let step = cfg.aperture / (cfg.n_antennas + 1) as f64;
        if moves && cfg.n_antennas > 1 && step < cfg.min_spacing {
            errors.push(format!(
                "array: equal-spacing start D/(N+1) = {step} m is below min_spacing {} m",
                cfg.min_spacing
            ));
        }
    }

    let fine_audit_factor = count(
        "fine_audit_factor",
        raw.fine_audit_factor,
        DEFAULT_FINE_AUDIT_FACTOR,
        2,
        &mut errors,
    );

    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    Ok(ExperimentConfig {
        array: array.expect("checked"),
        regions,
        coverage: coverage.expect("checked"),
        ao,
        schemes,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        fine_audit_factor,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn coverage_from(regions: &[RegionDeg]) -> Result<CoverageSpec, String> {
    let bounds: Vec<(f64, f64)> = regions
        .iter()
        .map(|r| (r.theta_min_deg.to_radians(), r.theta_max_deg.to_radians()))
        .collect();
    let samples: Vec<usize> = regions.iter().map(|r| r.samples).collect();
    CoverageSpec::new(&bounds, &samples).map_err(|e| format!("regions: {e}"))
}

impl ExperimentConfig {
    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            n_antennas: self.array.n_antennas,
            aperture_m: self.array.aperture,
            wavelength_m: self.array.wavelength,
            min_spacing_m: self.array.min_spacing,
            carrier_freq_hz: self.array.carrier_freq,
            regions: self.regions.clone(),
            rho: self.ao.rho,
            ao_tol: self.ao.ao_tol,
            sca_tol_v: self.ao.sca_tol_v,
            sca_tol_x: self.ao.sca_tol_x,
            max_ao_iters: self.ao.max_ao_iters,
            randomization_trials: self.ao.randomization_trials,
            seed: self.ao.seed,
            max_sca_iters: self.ao.max_sca_iters,
            rank_tol: self.ao.rank_tol,
            rho_ramp: self.ao.rho_ramp,
            solver_gap_tol: self.ao.solver.gap_tol,
            solver_feas_tol: self.ao.solver.feas_tol,
            solver_max_iter: self.ao.solver.max_iter,
            schemes: self.schemes.iter().map(|s| s.name().to_string()).collect(),
            fine_audit_factor: self.fine_audit_factor,
        }
    }

    /// Rebuilds a config from a manifest snapshot.
    pub fn from_snapshot(s: &ConfigSnapshot, output_dir: PathBuf) -> Result<Self, ConfigError> {
        let mut errors = Vec::new();
        let array = ArrayConfig::with_carrier(
            s.n_antennas,
            s.aperture_m,
            s.wavelength_m,
            s.min_spacing_m,
            s.carrier_freq_hz,
        )
        .map_err(|e| errors.push(e.to_string()))
        .ok();
        let coverage = coverage_from(&s.regions).map_err(|e| errors.push(e)).ok();
        let mut schemes = Vec::new();
        for name in &s.schemes {
            match Scheme::parse(name) {
                Some(v) => schemes.push(v),
                None => errors.push(format!("unknown scheme `{name}`")),
            }
        }
        let ao = AoConfig {
            rho: s.rho,
            ao_tol: s.ao_tol,
            sca_tol_v: s.sca_tol_v,
            sca_tol_x: s.sca_tol_x,
            max_ao_iters: s.max_ao_iters,
            randomization_trials: s.randomization_trials,
            seed: s.seed,
            max_sca_iters: s.max_sca_iters,
            rank_tol: s.rank_tol,
            rho_ramp: s.rho_ramp,
            solver: SolverTolerances {
                gap_tol: s.solver_gap_tol,
                feas_tol: s.solver_feas_tol,
                max_iter: s.solver_max_iter,
            },
        };
        errors.extend(ao.violations());
        if !errors.is_empty() {
            return Err(ConfigError::Invalid(errors));
        }
        Ok(Self {
            array: array.expect("checked"),
            regions: s.regions.clone(),
            coverage: coverage.expect("checked"),
            ao,
            schemes,
            output_dir,
            fine_audit_factor: s.fine_audit_factor,
        })
    }

    /// Hex SHA-256 of the snapshot's JSON form.
    pub fn hash(&self) -> String {
        snapshot_hash(&self.snapshot())
    }

    /// Replaces the regions, re-deriving sample counts at the default density.
    pub fn with_regions(&self, regions: &[(f64, f64)]) -> Result<Self, ConfigError> {
        let regions: Vec<RegionDeg> = regions
            .iter()
            .map(|&(lo, hi)| RegionDeg {
                theta_min_deg: lo,
                theta_max_deg: hi,
                samples: default_samples((hi - lo).to_radians()),
            })
            .collect();
        let coverage = coverage_from(&regions).map_err(|e| ConfigError::Invalid(vec![e]))?;
        Ok(Self {
            regions,
            coverage,
            ..self.clone()
        })
    }
}

pub fn snapshot_hash(s: &ConfigSnapshot) -> String {
    let json = serde_json::to_vec(s).expect("plain data serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MULTI_REGION: &str = r#"
schemes = ["proposed", "fpa", "mafab"]

[array]
n_antennas = 8
carrier_freq = 1e9
aperture = "8 lambda"
min_spacing = "0.5 lambda"

[[region]]
theta_min = 0
theta_max = 30

[[region]]
theta_min = 70
theta_max = 110

[[region]]
theta_min = 160
theta_max = 170
"#;

    fn invalid(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn three_region_config_is_valid() {
        let cfg = parse_config(MULTI_REGION).unwrap();
        assert_eq!(cfg.coverage.regions().len(), 3);
        let samples: Vec<usize> = cfg.regions.iter().map(|r| r.samples).collect();
        assert_eq!(samples, [31, 41, 11]);
        assert!((cfg.array.wavelength - 0.299792458).abs() < 1e-15);
        assert!((cfg.array.aperture - 8.0 * cfg.array.wavelength).abs() < 1e-15);
        assert_eq!(cfg.ao, AoConfig::default());
        assert_eq!(cfg.schemes, Scheme::ALL);
        assert_eq!(cfg.fine_audit_factor, 10);
    }

    #[test]
    fn empty_region_is_rejected() {
        let errors = invalid(
            "[array]\nn_antennas = 4\n[[region]]\ntheta_min = 30\ntheta_max = 30\n",
        );
        assert!(errors.iter().any(|e| e.contains("empty region")), "{errors:?}");
    }

    #[test]
    fn infeasible_geometry_is_rejected() {
        let errors = invalid(
            "[array]\nn_antennas = 8\naperture = \"1 m\"\nmin_spacing = \"0.2 m\"\n\
             [[region]]\ntheta_min = 0\ntheta_max = 180\n",
        );
        assert!(errors.iter().any(|e| e.contains("infeasible geometry")), "{errors:?}");
    }

    #[test]
    fn every_problem_is_reported() {
        let errors = invalid(
            "schemes = [\"proposed\", \"nope\"]\nfine_audit_factor = 1\n\
             [array]\nn_antennas = 0\naperture = \"3 ft\"\n\
             [[region]]\ntheta_min = 50\ntheta_max = 40\n\
             [ao]\nrho = -1.0\n",
        );
        for needle in ["n_antennas", "unit suffix", "empty region", "rho", "nope", "fine_audit_factor"] {
            assert!(errors.iter().any(|e| e.contains(needle)), "{needle}: {errors:?}");
        }
    }

    #[test]
    fn syntax_errors_carry_a_line_number() {
        match parse_config("[array]\nn_antennas = 4\n\n[[region]]\ntheta_min = = 3\n") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        match parse_config("[array]\nn_antennas = 4\nbogus = 1\n") {
            Err(ConfigError::Syntax { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lengths_accept_meters_and_wavelengths() {
        let cfg = parse_config(
            "[array]\nn_antennas = 2\nwavelength = \"0.5 m\"\naperture = \"2.5m\"\n\
             min_spacing = \"1 lambda\"\n[[region]]\ntheta_min = 10\ntheta_max = 20\nsamples = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.array.aperture, 2.5);
        assert_eq!(cfg.array.min_spacing, 0.5);
        assert_eq!(cfg.regions[0].samples, 5);
    }

    #[test]
    fn snapshot_round_trips_and_hash_ignores_output_dir() {
        let cfg = parse_config(MULTI_REGION).unwrap();
        let json = serde_json::to_string(&cfg.snapshot()).unwrap();
        let back: ConfigSnapshot = serde_json::from_str(&json).unwrap();
        let rebuilt = ExperimentConfig::from_snapshot(&back, PathBuf::from("elsewhere")).unwrap();
        assert_eq!(rebuilt.array, cfg.array);
        assert_eq!(rebuilt.coverage, cfg.coverage);
        assert_eq!(rebuilt.ao, cfg.ao);
        assert_eq!(rebuilt.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
        let mut other = cfg.clone();
        other.ao.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
    }
}
