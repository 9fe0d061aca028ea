//! `macover` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use macover_cli::analysis::{audit_run, load_run, write_audit, write_comparison};
use macover_cli::config::load_config;
use macover_cli::experiment::{run_experiment, run_sweep, RunManifest, SweepParam};
use macover_cli::{compare_schemes, ExperimentConfig};
use macover_core::to_db;

/// Max-min beam coverage with movable antennas.
#[derive(Debug, Parser)]
#[command(name = "macover", version)]
struct Cli {
    /// Overrides the random seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir` of the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Density multiplier for beam patterns and audits.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(2..))]
    fine_factor: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured scheme once.
    Run { config: PathBuf },
    /// Run one experiment per parameter value.
    Sweep {
        config: PathBuf,
        /// One of theta_max, theta_min, n_antennas, rho, seed.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Re-evaluate stored solutions on the configured and a denser grid.
    Audit { dir: PathBuf },
    /// Tabulate stored results of one configuration side by side.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, String> {
    let mut cfg = load_config(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.ao.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(f) = cli.fine_factor {
        cfg.fine_audit_factor = f as usize;
    }
    Ok(cfg)
}

fn print_manifest(m: &RunManifest) {
    for s in &m.schemes {
        let gain = s.min_gain_db.map_or("-".to_string(), |g| format!("{g:.4} dB"));
        let failed: Vec<&str> = s.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        let status = match (&s.error, failed.is_empty()) {
            (Some(e), _) => format!("FAILED: {e}"),
            (None, false) => format!("CHECKS FAILED: {}", failed.join(", ")),
            (None, true) => "ok".into(),
        };
        println!(
            "{:<9} max-min {:>12}  aperture {:>8}  iterations {:>3}  {:>7.2} s  {status}",
            s.scheme,
            gain,
            s.aperture_lambda.map_or("-".into(), |a| format!("{a:.3}λ")),
            s.iterations,
            s.wall_time_s
        );
    }
}

fn execute(cli: &Cli) -> Result<bool, String> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let m = run_experiment(&cfg).map_err(|e| e.to_string())?;
            print_manifest(&m);
            println!("results in {}", cfg.output_dir.display());
            Ok(m.success())
        }
        Command::Sweep { config, param, values } => {
            let cfg = load(cli, config)?;
            let p = SweepParam::parse(param).ok_or_else(|| {
                format!("unknown sweep parameter `{param}`; expected one of {}", SweepParam::NAMES.join(", "))
            })?;
            let s = run_sweep(&cfg, p, values).map_err(|e| e.to_string())?;
            for row in &s.rows {
                let cells: Vec<String> = s
                    .schemes
                    .iter()
                    .map(|sc| {
                        let g = row.manifest.scheme(*sc).and_then(|x| x.min_gain);
                        format!("{}={}", sc, g.map_or("-".into(), |v| format!("{:.4} dB", to_db(v))))
                    })
                    .collect();
                println!("{} = {}: {}", p.name(), row.value, cells.join("  "));
            }
            if let Some(mono) = s.proposed_monotone() {
                println!("proposed non-increasing in theta_max: {}", if mono { "yes" } else { "no" });
            }
            println!("summary in {}", cfg.output_dir.join("sweep.csv").display());
            Ok(s.success())
        }
        Command::Audit { dir } => {
            let run = load_run(dir).map_err(|e| e.to_string())?;
            let factor = cli.fine_factor.map_or(run.config.fine_audit_factor, |f| f as usize);
            let rows = audit_run(&run, factor);
            for r in &rows {
                println!(
                    "{:<9} coarse {:>9.4} dB  fine(x{factor}) {:>9.4} dB  gap {:.4} dB  round trip {}",
                    r.scheme.name(),
                    to_db(r.report.coarse_min),
                    to_db(r.report.fine_min),
                    r.report.gap_db,
                    if r.round_trip_ok { "ok" } else { "MISMATCH" }
                );
            }
            let target = cli.out.clone().unwrap_or_else(|| dir.clone());
            std::fs::create_dir_all(&target).map_err(|e| format!("{}: {e}", target.display()))?;
            write_audit(&target.join("audit.csv"), &run, factor, &rows).map_err(|e| e.to_string())?;
            Ok(rows.iter().all(|r| r.round_trip_ok) && run.manifest.success())
        }
        Command::Compare { dirs } => {
            let runs = dirs
                .iter()
                .map(|d| load_run(d))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let c = compare_schemes(&runs).map_err(|e| e.to_string())?;
            print!("{c}");
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
                write_comparison(&out.join("comparison.csv"), &c).map_err(|e| e.to_string())?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MACOVER_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
