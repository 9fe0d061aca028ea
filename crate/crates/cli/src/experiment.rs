//! Running the configured schemes and writing their results.
//!
//! Each scheme runs on its own thread and writes its own files; the
//! manifest is written last, after every scheme has finished.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use macover_core::ao_pipeline::{
    normalize_positions, run_scheme, AoResult, AoTraces, Scheme, DEGRADATION_TOL,
};
use macover_core::array_model::{
    beam_gain, discretize, is_feasible, min_gain, PositionVector, WeightVector,
};
use macover_core::to_db;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ConfigSnapshot, ExperimentConfig};
use crate::output::{num, read_csv, write_csv, Header, OutputError, VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";
/// Allowed difference between the manifest and a recomputation from files.
pub const ROUND_TRIP_TOL: f64 = 1e-9;
/// Allowed increase of the proposed max-min gain along a widening sweep.
pub const SWEEP_MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("sweep: {0}")]
    Sweep(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub min_gain: Option<f64>,
    pub min_gain_db: Option<f64>,
    pub aperture_m: Option<f64>,
    pub aperture_lambda: Option<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub rank_penalty: Option<f64>,
    pub degraded: bool,
    pub not_rank_one: bool,
    pub randomized_extraction: bool,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
}

impl SchemeSummary {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ConfigSnapshot,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub schemes: Vec<SchemeSummary>,
}

impl RunManifest {
    /// True when every scheme completed and passed its checks.
    pub fn success(&self) -> bool {
        self.schemes.iter().all(SchemeSummary::succeeded)
    }

    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == scheme.name())
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn pattern_file(scheme: Scheme) -> String {
    format!("{}_pattern.csv", scheme.name())
}

pub fn positions_file(scheme: Scheme) -> String {
    format!("{}_positions.csv", scheme.name())
}

pub fn weights_file(scheme: Scheme) -> String {
    format!("{}_weights.csv", scheme.name())
}

pub fn trace_file(scheme: Scheme) -> String {
    format!("{}_trace.csv", scheme.name())
}

/// Angles `k/factor` degrees for `k = 0..=180·factor`.
pub fn pattern_angles_deg(factor: usize) -> Vec<f64> {
    let factor = factor.max(1);
    (0..=180 * factor).map(|k| k as f64 / factor as f64).collect()
}

fn header<'a>(hash: &'a str, scheme: Scheme, units: &'a [(&'a str, &'a str)]) -> Header<'a> {
    Header {
        config_hash: hash,
        entries: vec![("scheme", scheme.name().to_string())],
        units,
    }
}

fn write_pattern(path: &Path, cfg: &ExperimentConfig, hash: &str, r: &AoResult) -> Result<(), OutputError> {
    let rows = pattern_angles_deg(cfg.fine_audit_factor).into_iter().map(|deg| {
        let g = beam_gain(&r.weights, &r.positions, deg.to_radians(), cfg.array.wavelength);
        vec![num(deg), num(g), num(to_db(g))]
    });
    let units = [("angle_deg", "deg"), ("gain_linear", "1"), ("gain_db", "dB")];
    write_csv(
        path,
        &header(hash, r.scheme, &units),
        &["angle_deg", "gain_linear", "gain_db"],
        rows,
    )
}

fn write_positions(path: &Path, cfg: &ExperimentConfig, hash: &str, r: &AoResult) -> Result<(), OutputError> {
    let x = normalize_positions(&r.positions);
    let lambda = cfg.array.wavelength;
    let rows = x
        .coords()
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), num(*v), num(v / lambda)]);
    let units = [("x_m", "m"), ("x_lambda", "wavelengths")];
    let mut h = header(hash, r.scheme, &units);
    h.entries.push(("wavelength_m", num(lambda)));
    write_csv(path, &h, &["index", "x_m", "x_lambda"], rows)
}

fn write_weights(path: &Path, hash: &str, r: &AoResult) -> Result<(), OutputError> {
    let rows = r
        .weights
        .phases()
        .iter()
        .enumerate()
        .map(|(i, p)| vec![i.to_string(), num(*p)]);
    let mut h = header(hash, r.scheme, &[("phase_rad", "rad")]);
    h.entries.push(("amplitude", "1/sqrt(N) on every antenna".into()));
    write_csv(path, &h, &["index", "phase_rad"], rows)
}

/// Long-format trace: one `ao` row per outer iterate, one `weights` row per
/// weight SCA step and one `positions` row per position SCA step. Cells
/// that do not apply to a stage are left empty.
fn write_trace(path: &Path, hash: &str, scheme: Scheme, traces: &AoTraces) -> Result<(), OutputError> {
    let blank = String::new;
    let mut rows = Vec::new();
    for (k, g) in traces.ao_trace.iter().enumerate() {
        rows.push(vec!["ao".into(), k.to_string(), blank(), blank(), blank(), blank(), blank(), num(*g)]);
    }
    for (k, steps) in traces.weight_traces.iter().enumerate() {
        for s in steps {
            rows.push(vec![
                "weights".into(),
                k.to_string(),
                s.iteration.to_string(),
                num(s.t),
                num(s.penalty),
                num(s.objective),
                num(s.rho),
                blank(),
            ]);
        }
    }
    for (k, steps) in traces.position_traces.iter().enumerate() {
        for s in steps {
            rows.push(vec![
                "positions".into(),
                k.to_string(),
                s.iteration.to_string(),
                num(s.surrogate_t),
                blank(),
                blank(),
                blank(),
                num(s.min_gain),
            ]);
        }
    }
    let units = [("t", "1"), ("penalty", "1"), ("objective", "1"), ("min_gain", "1")];
    write_csv(
        path,
        &header(hash, scheme, &units),
        &["stage", "outer", "inner", "t", "penalty", "objective", "rho", "min_gain"],
        rows,
    )
}

/// Positions (meters) and weights as stored in a result directory.
pub fn read_solution(dir: &Path, scheme: Scheme) -> Result<(WeightVector, PositionVector, String), OutputError> {
    let xp = dir.join(positions_file(scheme));
    let wp = dir.join(weights_file(scheme));
    let xt = read_csv(&xp)?;
    let wt = read_csv(&wp)?;
    let hash = xt.config_hash().unwrap_or_default().to_string();
    if wt.config_hash() != Some(hash.as_str()) {
        return Err(OutputError::format(&wp, "config hash differs from the positions file"));
    }
    let x = PositionVector::new(xt.column("x_m")?).map_err(|e| OutputError::format(&xp, e.to_string()))?;
    let w = WeightVector::from_phases(wt.column("phase_rad")?)
        .map_err(|e| OutputError::format(&wp, e.to_string()))?;
    if x.len() != w.len() {
        return Err(OutputError::format(&wp, "antenna count differs from the positions file"));
    }
    Ok((w, x, hash))
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn invariant_checks(cfg: &ExperimentConfig, r: &AoResult) -> Vec<Check> {
    let mut out = Vec::new();
    let trace = r.ao_trace();
    let worst_drop = trace
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0f64, f64::max);
    out.push(check(
        "ao_trace_monotone",
        worst_drop <= DEGRADATION_TOL,
        format!("largest drop {worst_drop:e}"),
    ));
    let grid = discretize(&cfg.coverage);
    let again = min_gain(&r.weights, &r.positions, &grid, cfg.array.wavelength);
    out.push(check(
        "min_gain_recomputed",
        again.to_bits() == r.min_gain.to_bits(),
        format!("recomputed {again:e}"),
    ));
    let n = cfg.array.n_antennas as f64;
    out.push(check(
        "gain_bounded",
        (0.0..=n + 1e-9).contains(&r.min_gain),
        format!("min_gain {} with N = {n}", r.min_gain),
    ));
    if r.scheme != Scheme::Fpa {
        let report = is_feasible(&r.positions, &cfg.array);
        out.push(check(
            "positions_feasible",
            report.feasible,
            format!("{} violations", report.violations.len()),
        ));
    }
    out
}

fn run_one(cfg: &ExperimentConfig, scheme: Scheme, hash: &str, dir: &Path) -> SchemeSummary {
    let start = Instant::now();
    let outcome = run_scheme(scheme, &cfg.array, &cfg.coverage, &cfg.ao);
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut summary = SchemeSummary {
        scheme: scheme.name().into(),
        status: RunStatus::Completed,
        error: None,
        min_gain: None,
        min_gain_db: None,
        aperture_m: None,
        aperture_lambda: None,
        iterations: 0,
        wall_time_s,
        rank_penalty: None,
        degraded: false,
        not_rank_one: false,
        randomized_extraction: false,
        checks: Vec::new(),
        files: Vec::new(),
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            warn!("{scheme}: {e}");
            summary.status = RunStatus::Failed;
            summary.error = Some(e.to_string());
            summary.iterations = e.partial.ao_trace.len().saturating_sub(1);
            let name = trace_file(scheme);
            match write_trace(&dir.join(&name), hash, scheme, &e.partial) {
                Ok(()) => summary.files.push(name),
                Err(io) => summary.error = Some(format!("{e}; {io}")),
            }
            return summary;
        }
    };
    info!(
        "{scheme}: min gain {:.4} dB after {} iterations in {wall_time_s:.2} s",
        result.min_gain_db(),
        result.iterations()
    );
    summary.min_gain = Some(result.min_gain);
    summary.min_gain_db = Some(result.min_gain_db());
    summary.aperture_m = Some(result.positions.span());
    summary.aperture_lambda = Some(result.positions.span() / cfg.array.wavelength);
    summary.iterations = result.iterations();
    summary.rank_penalty = result.rank_penalty;
    summary.degraded = result.flags.degraded;
    summary.not_rank_one = result.flags.not_rank_one;
    summary.randomized_extraction = result.flags.randomized_extraction;
    summary.checks = invariant_checks(cfg, &result);

    let writes: [(String, Box<dyn Fn(&Path) -> Result<(), OutputError>>); 4] = [
        (pattern_file(scheme), Box::new(|p| write_pattern(p, cfg, hash, &result))),
        (positions_file(scheme), Box::new(|p| write_positions(p, cfg, hash, &result))),
        (weights_file(scheme), Box::new(|p| write_weights(p, hash, &result))),
        (trace_file(scheme), Box::new(|p| write_trace(p, hash, scheme, &result.traces))),
    ];
    for (name, write) in writes {
        match write(&dir.join(&name)) {
            Ok(()) => summary.files.push(name),
            Err(e) => {
                summary.status = RunStatus::Failed;
                summary.error = Some(e.to_string());
                return summary;
            }
        }
    }
    let round_trip = read_solution(dir, scheme).map(|(w, x, _)| {
        min_gain(&w, &x, &discretize(&cfg.coverage), cfg.array.wavelength)
    });
    summary.checks.push(match round_trip {
        Ok(g) => check(
            "csv_round_trip",
            (g - result.min_gain).abs() <= ROUND_TRIP_TOL,
            format!("difference {:e}", g - result.min_gain),
        ),
        Err(e) => check("csv_round_trip", false, e.to_string()),
    });
    summary
}

/// Runs every configured scheme concurrently and writes all outputs into
/// `cfg.output_dir`. Optimizer failures are recorded in the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, ExperimentError> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| OutputError::io(dir, e))?;
    let hash = cfg.hash();
    let started_unix_ms = unix_ms();
    info!("running {:?} into {}", cfg.schemes, dir.display());
    let schemes = std::thread::scope(|s| {
        let jobs: Vec<_> = cfg
            .schemes
            .iter()
            .map(|&scheme| {
                let hash = &hash;
                (scheme, s.spawn(move || run_one(cfg, scheme, hash, dir)))
            })
            .collect();
        jobs.into_iter()
            .map(|(scheme, job)| {
                job.join().unwrap_or_else(|_| SchemeSummary {
                    scheme: scheme.name().into(),
                    status: RunStatus::Failed,
                    error: Some("worker panicked".into()),
                    min_gain: None,
                    min_gain_db: None,
                    aperture_m: None,
                    aperture_lambda: None,
                    iterations: 0,
                    wall_time_s: 0.0,
                    rank_penalty: None,
                    degraded: false,
                    not_rank_one: false,
                    randomized_extraction: false,
                    checks: Vec::new(),
                    files: Vec::new(),
                })
            })
            .collect()
    });
    let manifest = RunManifest {
        tool: "macover".into(),
        version: VERSION.into(),
        config_hash: hash,
        seed: cfg.ao.seed,
        config: cfg.snapshot(),
        started_unix_ms,
        finished_unix_ms: unix_ms(),
        schemes,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), ExperimentError> {
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest).map_err(|source| ExperimentError::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, json + "\n").map_err(|e| OutputError::io(&path, e).into())
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest, ExperimentError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| OutputError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path, source })
}

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Upper edge of the single region, degrees.
    ThetaMax,
    /// Lower edge of the single region, degrees.
    ThetaMin,
    NAntennas,
    Rho,
    Seed,
}

impl SweepParam {
    pub const NAMES: [&'static str; 5] = ["theta_max", "theta_min", "n_antennas", "rho", "seed"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "theta_max" => Some(Self::ThetaMax),
            "theta_min" => Some(Self::ThetaMin),
            "n_antennas" => Some(Self::NAntennas),
            "rho" => Some(Self::Rho),
            "seed" => Some(Self::Seed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    /// `base` with this parameter set to `value`; the output directory is
    /// left for the caller.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig, ExperimentError> {
        let single = || -> Result<(f64, f64), ExperimentError> {
            match base.regions.as_slice() {
                [r] => Ok((r.theta_min_deg, r.theta_max_deg)),
                _ => Err(ExperimentError::Sweep(format!(
                    "{} needs exactly one region, config has {}",
                    self.name(),
                    base.regions.len()
                ))),
            }
        };
        let integer = || -> Result<u64, ExperimentError> {
            if value >= 0.0 && value.fract() == 0.0 && value < 2f64.powi(53) {
                Ok(value as u64)
            } else {
                Err(ExperimentError::Sweep(format!(
                    "{} needs a non-negative integer, got {value}",
                    self.name()
                )))
            }
        };
        let mut cfg = match self {
            Self::ThetaMax => base.with_regions(&[(single()?.0, value)])?,
            Self::ThetaMin => base.with_regions(&[(value, single()?.1)])?,
            Self::NAntennas => {
                let mut c = base.clone();
                c.array.n_antennas = integer()? as usize;
                let problems = c.array.violations();
                if c.array.n_antennas == 0 || !problems.is_empty() {
                    return Err(ConfigError::Invalid(problems).into());
                }
                c
            }
            Self::Rho => {
                let mut c = base.clone();
                c.ao.rho = value;
                c
            }
            Self::Seed => {
                let mut c = base.clone();
                c.ao.seed = integer()?;
                c
            }
        };
        let problems = cfg.ao.violations();
        if !problems.is_empty() {
            return Err(ConfigError::Invalid(problems).into());
        }
        cfg.output_dir = base.output_dir.join(format!("{}_{value}", self.name()));
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub param: SweepParam,
    pub schemes: Vec<Scheme>,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn success(&self) -> bool {
        self.rows.iter().all(|r| r.manifest.success())
    }

    /// Linear max-min gain of `scheme` per row, `None` where it failed.
    pub fn column(&self, scheme: Scheme) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|r| r.manifest.scheme(scheme).and_then(|s| s.min_gain))
            .collect()
    }

    /// For an ascending `theta_max` sweep: whether the proposed column never
    /// rises by more than [`SWEEP_MONOTONE_TOL`]. `None` when not applicable.
    pub fn proposed_monotone(&self) -> Option<bool> {
        let ascending = self.rows.windows(2).all(|w| w[0].value < w[1].value);
        if self.param != SweepParam::ThetaMax || !ascending || !self.schemes.contains(&Scheme::Proposed) {
            return None;
        }
        let col: Option<Vec<f64>> = self.column(Scheme::Proposed).into_iter().collect();
        Some(col?.windows(2).all(|w| w[1] <= w[0] + SWEEP_MONOTONE_TOL))
    }
}

/// Runs one experiment per value, as independent concurrent jobs, each in
/// `<output_dir>/<param>_<value>`, then writes `<output_dir>/sweep.csv`.
pub fn run_sweep(
    base: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<SweepSummary, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::Sweep("no values given".into()));
    }
    let configs = values
        .iter()
        .map(|&v| param.apply(base, v))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(&base.output_dir).map_err(|e| OutputError::io(&base.output_dir, e))?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(configs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunManifest, ExperimentError>>>> =
        Mutex::new(configs.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(k) else { break };
                let outcome = run_experiment(cfg);
                results.lock().expect("no panics while holding the lock")[k] = Some(outcome);
            });
        }
    });
    let mut rows = Vec::new();
    for ((value, cfg), outcome) in values.iter().zip(&configs).zip(results.into_inner().expect("joined")) {
        let manifest = outcome.expect("every job ran")?;
        rows.push(SweepRow {
            value: *value,
            dir: cfg.output_dir.clone(),
            manifest,
        });
    }
    let summary = SweepSummary {
        param,
        schemes: base.schemes.clone(),
        rows,
    };
    write_sweep(&base.output_dir.join(SWEEP_FILE), base, &summary)?;
    Ok(summary)
}

fn write_sweep(path: &Path, base: &ExperimentConfig, summary: &SweepSummary) -> Result<(), OutputError> {
    let mut columns = vec![summary.param.name().to_string()];
    let mut units = Vec::new();
    for s in &summary.schemes {
        columns.push(format!("{}_min_gain", s.name()));
        columns.push(format!("{}_min_gain_db", s.name()));
    }
    columns.extend(["status".to_string(), "config_hash".to_string(), "dir".to_string()]);
    for c in &columns[1..columns.len() - 3] {
        units.push((c.as_str(), if c.ends_with("_db") { "dB" } else { "1" }));
    }
    let hash = base.hash();
    let rows = summary.rows.iter().map(|r| {
        let mut row = vec![num(r.value)];
        for s in &summary.schemes {
            let g = r.manifest.scheme(*s).and_then(|x| x.min_gain);
            row.push(g.map(num).unwrap_or_default());
            row.push(g.map(|v| num(to_db(v))).unwrap_or_default());
        }
        row.push(if r.manifest.success() { "ok" } else { "failed" }.into());
        row.push(r.manifest.config_hash.clone());
        row.push(r.dir.display().to_string());
        row
    });
    let header = Header {
        config_hash: &hash,
        entries: vec![("param", summary.param.name().to_string())],
        units: &units,
    };
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_csv(path, &header, &names, rows)
}
