//! Fine-grid audits and cross-scheme comparison of stored results.

use std::fmt;
use std::path::{Path, PathBuf};

use macover_core::ao_pipeline::{AoResult, Scheme};
use macover_core::array_model::{
    beam_gain, discretize, min_gain, ArrayConfig, CoverageSpec, PositionVector, WeightVector,
};
use macover_core::to_db;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::experiment::{
    load_manifest, read_solution, ExperimentError, RunManifest, RunStatus, ROUND_TRIP_TOL,
};
use crate::output::{num, write_csv, Header, OutputError};

/// Narrow-region threshold and allowed proposed/MA-FAB difference.
pub const NARROW_WIDTH_DEG: f64 = 50.0;
pub const NARROW_GAP_DB: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("results come from different configurations: {0} and {1}")]
    MixedHashes(String, String),
    #[error("{dir}: {message}")]
    Inconsistent { dir: PathBuf, message: String },
    #[error("nothing to compare")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub coarse_min: f64,
    pub fine_min: f64,
    /// `10·log10(coarse_min) - 10·log10(fine_min)`; positive when the coarse
    /// grid is optimistic.
    pub gap_db: f64,
}

/// Minimum gain on the configured grid and on a `factor`-times denser grid
/// that contains it.
pub fn audit_solution(
    w: &WeightVector,
    x: &PositionVector,
    spec: &CoverageSpec,
    wavelength: f64,
    factor: usize,
) -> AuditReport {
    let coarse_min = min_gain(w, x, &discretize(spec), wavelength);
    let fine_min = min_gain(w, x, &discretize(&spec.refined(factor)), wavelength);
    AuditReport {
        coarse_min,
        fine_min,
        gap_db: to_db(coarse_min) - to_db(fine_min),
    }
}

pub fn audit_fine_grid(
    result: &AoResult,
    cfg: &ArrayConfig,
    spec: &CoverageSpec,
    factor: usize,
) -> AuditReport {
    audit_solution(&result.weights, &result.positions, spec, cfg.wavelength, factor)
}

/// One scheme's solution re-read from a result directory.
#[derive(Debug, Clone)]
pub struct StoredSolution {
    pub scheme: Scheme,
    pub weights: WeightVector,
    pub positions: PositionVector,
    pub manifest_min_gain: f64,
}

#[derive(Debug, Clone)]
pub struct StoredRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub config: ExperimentConfig,
    pub solutions: Vec<StoredSolution>,
}

/// Loads a manifest and the solutions of all completed schemes, checking
/// that every file carries the manifest's config hash.
pub fn load_run(dir: &Path) -> Result<StoredRun, AnalysisError> {
    let manifest = load_manifest(dir)?;
    let inconsistent = |message: String| AnalysisError::Inconsistent {
        dir: dir.to_path_buf(),
        message,
    };
    let config = ExperimentConfig::from_snapshot(&manifest.config, dir.to_path_buf())
        .map_err(|e| inconsistent(e.to_string()))?;
    if config.hash() != manifest.config_hash {
        return Err(inconsistent("config snapshot does not match its hash".into()));
    }
    let mut solutions = Vec::new();
    for s in &manifest.schemes {
        if s.status != RunStatus::Completed {
            continue;
        }
        let scheme = Scheme::parse(&s.scheme).ok_or_else(|| inconsistent(format!("unknown scheme {}", s.scheme)))?;
        let (weights, positions, hash) = read_solution(dir, scheme)?;
        if hash != manifest.config_hash {
            return Err(AnalysisError::MixedHashes(manifest.config_hash.clone(), hash));
        }
        let manifest_min_gain = s
            .min_gain
            .ok_or_else(|| inconsistent(format!("{} has no min_gain", s.scheme)))?;
        solutions.push(StoredSolution {
            scheme,
            weights,
            positions,
            manifest_min_gain,
        });
    }
    Ok(StoredRun {
        dir: dir.to_path_buf(),
        manifest,
        config,
        solutions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub scheme: Scheme,
    pub manifest_min_gain: f64,
    pub report: AuditReport,
    pub round_trip_ok: bool,
}

/// Audits every stored solution of a run at `factor`-times density.
pub fn audit_run(run: &StoredRun, factor: usize) -> Vec<AuditRow> {
    run.solutions
        .iter()
        .map(|s| {
            let report = audit_solution(
                &s.weights,
                &s.positions,
                &run.config.coverage,
                run.config.array.wavelength,
                factor,
            );
            AuditRow {
                scheme: s.scheme,
                manifest_min_gain: s.manifest_min_gain,
                report,
                round_trip_ok: (report.coarse_min - s.manifest_min_gain).abs() <= ROUND_TRIP_TOL,
            }
        })
        .collect()
}

pub fn write_audit(path: &Path, run: &StoredRun, factor: usize, rows: &[AuditRow]) -> Result<(), OutputError> {
    let header = Header {
        config_hash: &run.manifest.config_hash,
        entries: vec![("fine_factor", factor.to_string())],
        units: &[
            ("manifest_min_gain", "1"),
            ("coarse_min", "1"),
            ("fine_min", "1"),
            ("gap_db", "dB"),
        ],
    };
    let body = rows.iter().map(|r| {
        vec![
            r.scheme.name().to_string(),
            num(r.manifest_min_gain),
            num(r.report.coarse_min),
            num(r.report.fine_min),
            num(r.report.gap_db),
            r.round_trip_ok.to_string(),
        ]
    });
    write_csv(
        path,
        &header,
        &["scheme", "manifest_min_gain", "coarse_min", "fine_min", "gap_db", "round_trip_ok"],
        body,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub dir: PathBuf,
    pub scheme: Scheme,
    /// Linear gain statistics per region on the configured grid.
    pub regions: Vec<RegionStats>,
    pub global_min: f64,
    pub aperture_m: f64,
    /// Difference in dB to the first entry of the same scheme.
    pub delta_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub config_hash: String,
    pub entries: Vec<ComparisonEntry>,
    pub relations: Vec<Relation>,
}

impl Comparison {
    pub fn entry(&self, scheme: Scheme) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.scheme == scheme)
    }
}

fn region_stats(run: &StoredRun, s: &StoredSolution) -> Vec<RegionStats> {
    let grid = discretize(&run.config.coverage);
    let k = run.config.coverage.regions().len();
    let mut acc = vec![(f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize); k];
    for (theta, &r) in grid.angles().iter().zip(grid.region_index()) {
        let g = beam_gain(&s.weights, &s.positions, *theta, run.config.array.wavelength);
        let a = &mut acc[r];
        a.0 = a.0.min(g);
        a.1 = a.1.max(g);
        a.2 += g;
        a.3 += 1;
    }
    acc.into_iter()
        .map(|(min, max, sum, n)| RegionStats {
            min,
            max,
            mean: sum / n.max(1) as f64,
        })
        .collect()
}

/// Tabulates all stored solutions; all runs must share one config hash.
pub fn compare_schemes(runs: &[StoredRun]) -> Result<Comparison, AnalysisError> {
    let first = runs.first().ok_or(AnalysisError::Empty)?;
    let hash = first.manifest.config_hash.clone();
    for r in &runs[1..] {
        if r.manifest.config_hash != hash {
            return Err(AnalysisError::MixedHashes(hash, r.manifest.config_hash.clone()));
        }
    }
    let mut entries: Vec<ComparisonEntry> = Vec::new();
    for run in runs {
        for s in &run.solutions {
            let regions = region_stats(run, s);
            let global_min = regions.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
            let delta_db = entries
                .iter()
                .find(|e| e.scheme == s.scheme)
                .map_or(0.0, |e| to_db(global_min) - to_db(e.global_min));
            entries.push(ComparisonEntry {
                dir: run.dir.clone(),
                scheme: s.scheme,
                regions,
                global_min,
                aperture_m: s.positions.span(),
                delta_db,
            });
        }
    }
    let mut relations = Vec::new();
    let first_of = |scheme| entries.iter().find(|e| e.scheme == scheme);
    let db = |e: &ComparisonEntry| to_db(e.global_min);
    let mut dominance = |a: Scheme, b: Scheme| {
        if let (Some(x), Some(y)) = (first_of(a), first_of(b)) {
            relations.push(Relation {
                name: format!("{a} >= {b} (global max-min)"),
                passed: x.global_min >= y.global_min - 1e-9,
                detail: format!("{:.4} dB vs {:.4} dB", db(x), db(y)),
            });
        }
    };
    dominance(Scheme::Proposed, Scheme::Fpa);
    dominance(Scheme::Proposed, Scheme::MaFab);
    dominance(Scheme::MaFab, Scheme::Fpa);
    if let ([r], Some(p), Some(m)) = (
        first.config.regions.as_slice(),
        first_of(Scheme::Proposed),
        first_of(Scheme::MaFab),
    ) {
        if r.theta_max_deg - r.theta_min_deg <= NARROW_WIDTH_DEG {
            let gap = (db(p) - db(m)).abs();
            relations.push(Relation {
                name: format!("|proposed - mafab| <= {NARROW_GAP_DB} dB (narrow region)"),
                passed: gap <= NARROW_GAP_DB,
                detail: format!("{gap:.4} dB"),
            });
        }
    }
    Ok(Comparison {
        config_hash: hash,
        entries,
        relations,
    })
}

pub fn write_comparison(path: &Path, c: &Comparison) -> Result<(), OutputError> {
    let k = c.entries.first().map_or(0, |e| e.regions.len());
    let mut columns = vec!["dir".to_string(), "scheme".to_string()];
    for r in 1..=k {
        for stat in ["min", "max", "mean"] {
            columns.push(format!("r{r}_{stat}_db"));
        }
    }
    columns.extend(["global_min_db", "aperture_m", "delta_db"].map(String::from));
    let rows = c.entries.iter().map(|e| {
        let mut row = vec![e.dir.display().to_string(), e.scheme.name().to_string()];
        for r in &e.regions {
            row.extend([num(to_db(r.min)), num(to_db(r.max)), num(to_db(r.mean))]);
        }
        row.extend([num(to_db(e.global_min)), num(e.aperture_m), num(e.delta_db)]);
        row
    });
    let entries = c
        .relations
        .iter()
        .map(|r| ("relation", format!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)))
        .collect();
    let header = Header {
        config_hash: &c.config_hash,
        entries,
        units: &[("*_db", "dB"), ("aperture_m", "m")],
    };
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    write_csv(path, &header, &names, rows)
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "config {}", self.config_hash)?;
        for e in &self.entries {
            write!(f, "{:<9} {}", e.scheme.name(), e.dir.display())?;
            writeln!(
                f,
                "\n  max-min {:>9.4} dB  aperture {:.4} m  delta {:+.4} dB",
                to_db(e.global_min),
                e.aperture_m,
                e.delta_db
            )?;
            for (k, r) in e.regions.iter().enumerate() {
                writeln!(
                    f,
                    "  R{}: min {:>9.4}  max {:>9.4}  mean {:>9.4} dB",
                    k + 1,
                    to_db(r.min),
                    to_db(r.max),
                    to_db(r.mean)
                )?;
            }
        }
        for r in &self.relations {
            writeln!(f, "{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
        }
        Ok(())
    }
}
