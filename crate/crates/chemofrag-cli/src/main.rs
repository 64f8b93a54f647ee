//! Command-line harness for the chemostat growth-fragmentation toolkit.
//!
//! Every verb loads a TOML config, runs one pipeline from the library
//! crate, writes CSV series plus a `manifest.json` run record into the
//! output directory, and prints a short summary. Exit codes: 0 on
//! success, 1 on IO failures, 2 on config schema violations, 3 when a
//! numerical guard trips, 4 when a strict check fails under `--strict`.

mod config;
mod experiments;
mod record;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use chemofrag::ibm::simulate_ibm;
use chemofrag::pde::solve_pde;
use chemofrag::run::RunConfig;

use crate::config::{LoadError, SchemaError};
use crate::experiments::{
    agreement_experiment, converge_experiment, density_diagnostics, job_seed, HarnessError,
};
use crate::record::{fmt_f64, persist_record, write_csv, RunRecord};

#[derive(Parser)]
#[command(
    name = "chemofrag",
    version,
    about = "Simulators, solvers, and diagnostics for a resource-coupled growth-fragmentation model"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "configs/reference.toml")]
    config: PathBuf,

    /// Directory for CSV series and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Run seed; every stochastic stream is derived from it together with
    /// the per-job (K, seed) pair from the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for the job pool (0 uses the rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Exit with code 4 when any strict check fails.
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Parse and validate the config, printing its canonical hash.
    Validate,
    /// Simulate one particle-system trajectory at capacity K.
    SimulateIbm {
        /// Capacity; defaults to the first entry of the config sweep.
        #[arg(long)]
        k: Option<u64>,
    },
    /// Solve the grid equations and write the recorded series.
    SolvePde,
    /// Capacity sweep: particle trajectories against the grid solution.
    Converge,
    /// Weak-form and mild-form agreement checks across resolutions.
    Agree,
    /// Smoothness and near-zero atom diagnostics of the terminal state.
    DiagnoseDensity,
}

enum Failure {
    Io(String),
    Schema(SchemaError),
    Numerical(String),
    Strict(usize),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Schema(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Strict(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Io(msg) => write!(f, "{msg}"),
            Failure::Schema(e) => write!(f, "{e}"),
            Failure::Numerical(msg) => write!(f, "{msg}"),
            Failure::Strict(n) => write!(f, "{n} strict check(s) failed"),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io(e) => Failure::Io(e.to_string()),
            LoadError::Schema(e) => Failure::Schema(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<chemofrag::run::ConfigError> for Failure {
    fn from(e: chemofrag::run::ConfigError) -> Self {
        Failure::Numerical(format!("config guard: {e}"))
    }
}

impl From<chemofrag::ibm::IbmError> for Failure {
    fn from(e: chemofrag::ibm::IbmError) -> Self {
        Failure::Numerical(format!("particle simulation: {e}"))
    }
}

impl From<chemofrag::pde::PdeError> for Failure {
    fn from(e: chemofrag::pde::PdeError) -> Self {
        Failure::Numerical(format!("grid solver: {e}"))
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {f}");
            std::process::exit(f.code());
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let (config, hash) = config::load_config(&cli.config)?;
    if cli.threads == 0 {
        return run_verb(cli, &config, &hash);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Failure::Io(format!("worker pool: {e}")))?;
    pool.install(|| run_verb(cli, &config, &hash))
}

/// Prints one strict-check line and records a failure on the manifest.
fn check(record: &mut RunRecord, name: &str, ok: bool) {
    println!("strict {name}: {}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        record.strict_failures.push(name.to_string());
    }
}

fn finish(cli: &Cli, mut record: RunRecord, started: Instant) -> Result<(), Failure> {
    record.wall_clock_s = started.elapsed().as_secs_f64();
    let manifest = persist_record(&record, &cli.out)?;
    println!("wrote {}", manifest.display());
    if cli.strict && !record.strict_failures.is_empty() {
        return Err(Failure::Strict(record.strict_failures.len()));
    }
    Ok(())
}

fn run_verb(cli: &Cli, config: &RunConfig, hash: &str) -> Result<(), Failure> {
    let started = Instant::now();
    let seeds = config.experiment.seeds.clone();
    let k_values = config.experiment.k_values.clone();

    match &cli.verb {
        Verb::Validate => {
            config.validate()?;
            let cells = (config.numerics.x_max / config.numerics.dx).round() as u64;
            let steps = (config.t_final / config.numerics.dt_pde).round() as u64;
            println!(
                "config ok hash={hash} cells={cells} pde-steps={steps} capacities={:?} seeds={}",
                k_values,
                seeds.len()
            );
            Ok(())
        }

        Verb::SimulateIbm { k } => {
            let k = (*k).unwrap_or(k_values[0]);
            let seed0 = *seeds.first().ok_or_else(|| {
                Failure::Numerical("config lists no seeds".to_string())
            })?;
            let traj = simulate_ibm(config, k, job_seed(cli.seed, k, seed0))?;
            let rows: Vec<Vec<String>> = traj
                .summaries
                .iter()
                .map(|s| {
                    vec![
                        fmt_f64(s.time),
                        s.count.to_string(),
                        fmt_f64(s.mass),
                        fmt_f64(s.moment1),
                        fmt_f64(s.moment2),
                        fmt_f64(s.resource),
                        s.births_cum.to_string(),
                        s.deaths_cum.to_string(),
                    ]
                })
                .collect();
            let mut record = RunRecord::new("simulate-ibm", hash, seeds, vec![k]);
            let name = write_csv(
                &cli.out,
                "ibm.csv",
                &[
                    "time",
                    "count",
                    "mass",
                    "moment1",
                    "moment2",
                    "resource",
                    "births_cum",
                    "deaths_cum",
                ],
                &rows,
            )?;
            record.outputs.insert("summaries".to_string(), name);
            let last = traj.summaries.last().expect("at least the initial row");
            record.metrics.insert("final_mass".to_string(), last.mass);
            record.metrics.insert("final_resource".to_string(), last.resource);
            record.metrics.insert("final_count".to_string(), last.count as f64);
            record.metrics.insert("births_total".to_string(), traj.births_total as f64);
            record.metrics.insert("deaths_total".to_string(), traj.deaths_total as f64);
            record.metrics.insert("clamp_fraction".to_string(), traj.clamp_fraction);
            println!(
                "simulated K={k} to t={}: count={} mass={:.6} resource={:.6}",
                last.time, last.count, last.mass, last.resource
            );
            finish(cli, record, started)
        }

        Verb::SolvePde => {
            let traj = solve_pde(config)?;
            let rows: Vec<Vec<String>> = (0..traj.len())
                .map(|i| {
                    vec![
                        fmt_f64(traj.times[i]),
                        fmt_f64(traj.mass[i]),
                        fmt_f64(traj.moment1[i]),
                        fmt_f64(traj.resource[i]),
                        fmt_f64(traj.tail[i]),
                    ]
                })
                .collect();
            let mut record = RunRecord::new("solve-pde", hash, seeds, k_values);
            let name = write_csv(
                &cli.out,
                "pde.csv",
                &["time", "mass", "moment1", "resource", "tail"],
                &rows,
            )?;
            record.outputs.insert("series".to_string(), name);
            let n = traj.len();
            record.metrics.insert("final_mass".to_string(), traj.mass[n - 1]);
            record.metrics.insert("final_resource".to_string(), traj.resource[n - 1]);
            let max_tail = traj.tail.iter().cloned().fold(0.0, f64::max);
            record.metrics.insert("max_tail".to_string(), max_tail);
            println!(
                "solved to t={}: mass={:.6} resource={:.6} max-tail={max_tail:.3e}",
                traj.times[n - 1],
                traj.mass[n - 1],
                traj.resource[n - 1]
            );
            finish(cli, record, started)
        }

        Verb::Converge => {
            let report = converge_experiment(config, cli.seed)?;
            let job_rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.k.to_string(),
                        r.seed.to_string(),
                        fmt_f64(r.time),
                        fmt_f64(r.bl),
                        fmt_f64(r.resource_err),
                    ]
                })
                .collect();
            let summary_rows: Vec<Vec<String>> = report
                .summaries
                .iter()
                .map(|s| {
                    vec![
                        s.k.to_string(),
                        fmt_f64(s.time),
                        fmt_f64(s.bl_mean),
                        fmt_f64(s.bl_se),
                        fmt_f64(s.resource_err_mean),
                    ]
                })
                .collect();
            let mut record = RunRecord::new("converge", hash, seeds, k_values.clone());
            let name = write_csv(
                &cli.out,
                "converge_jobs.csv",
                &["k", "seed", "time", "bl_distance", "resource_abs_err"],
                &job_rows,
            )?;
            record.outputs.insert("jobs".to_string(), name);
            let name = write_csv(
                &cli.out,
                "converge_summary.csv",
                &["k", "time", "bl_mean", "bl_se", "resource_err_mean"],
                &summary_rows,
            )?;
            record.outputs.insert("summary".to_string(), name);
            record.metrics.insert("fitted_rate".to_string(), report.fitted_rate);
            record.tolerances.insert("bl_ratio_max".to_string(), 0.5);
            println!(
                "converge: {} jobs, fitted decay rate {:.3}",
                report.rows.len(),
                report.fitted_rate
            );

            for &t in &config.experiment.snapshot_times {
                let by_k: Vec<_> =
                    report.summaries.iter().filter(|s| s.time == t).collect();
                let monotone = by_k.windows(2).all(|w| w[1].bl_mean < w[0].bl_mean);
                check(&mut record, &format!("bl-decreasing@t={t}"), monotone);
                let halved = by_k.last().expect("nonempty").bl_mean
                    <= 0.5 * by_k.first().expect("nonempty").bl_mean;
                check(&mut record, &format!("bl-halved@t={t}"), halved);
                let res_improving = by_k
                    .windows(2)
                    .all(|w| w[1].resource_err_mean < w[0].resource_err_mean);
                check(&mut record, &format!("resource-decreasing@t={t}"), res_improving);
            }
            finish(cli, record, started)
        }

        Verb::Agree => {
            let report = agreement_experiment(config, cli.seed)?;
            let rows: Vec<Vec<String>> = report
                .weak
                .iter()
                .map(|w| {
                    vec![
                        fmt_f64(w.lo),
                        fmt_f64(w.hi),
                        fmt_f64(w.coarse),
                        fmt_f64(w.fine),
                        fmt_f64(w.ratio),
                    ]
                })
                .collect();
            let mut record = RunRecord::new("agree", hash, seeds, k_values);
            let name = write_csv(
                &cli.out,
                "agree_weak.csv",
                &["bump_lo", "bump_hi", "residual_coarse", "residual_fine", "ratio"],
                &rows,
            )?;
            record.outputs.insert("weak".to_string(), name);
            record.metrics.insert("mild_residual".to_string(), report.mild.residual);
            record.metrics.insert("mild_mc_se".to_string(), report.mild.mc_se);
            record.metrics.insert("mild_hist_bias".to_string(), report.mild.hist_bias);
            record.metrics.insert("mild_quad_bound".to_string(), report.mild.quad_bound);
            record.metrics.insert("mild_budget".to_string(), report.mild_budget);
            record.metrics.insert("final_mass".to_string(), report.mass_end);
            record.metrics.insert("final_resource".to_string(), report.resource_end);
            record.tolerances.insert("weak_ratio_primary_min".to_string(), 2.0);
            record.tolerances.insert("weak_ratio_floor".to_string(), 1.5);
            record.tolerances.insert("mild_budget_factor".to_string(), 3.0);
            println!(
                "agree: primary weak ratio {:.3}, mild residual {:.3e} (budget {:.3e})",
                report.weak[0].ratio, report.mild.residual, report.mild_budget
            );

            check(&mut record, "weak-improves-everywhere", report
                .weak
                .iter()
                .all(|w| w.fine <= w.coarse));
            check(&mut record, "weak-primary-ratio", report.weak[0].ratio >= 2.0);
            check(
                &mut record,
                "weak-ratio-floor",
                report.weak.iter().all(|w| w.ratio >= 1.5),
            );
            check(&mut record, "mild-within-budget", report.mild_passes);
            finish(cli, record, started)
        }

        Verb::DiagnoseDensity => {
            let report = density_diagnostics(config, cli.seed)?;
            let rows: Vec<Vec<String>> = report
                .atom_fractions
                .iter()
                .zip(&report.pde_mass_below)
                .map(|(&(eps, frac), &(_, grid_frac))| {
                    vec![fmt_f64(eps), fmt_f64(frac), fmt_f64(grid_frac)]
                })
                .collect();
            let mut record = RunRecord::new("diagnose-density", hash, seeds, k_values);
            let name = write_csv(
                &cli.out,
                "density_atoms.csv",
                &["eps", "path_fraction_below", "grid_mass_below"],
                &rows,
            )?;
            record.outputs.insert("atoms".to_string(), name);
            record.metrics.insert("fitted_exponent".to_string(), report.fitted_exponent);
            record.metrics.insert("fitted_ci95".to_string(), report.fitted_ci95);
            record.metrics.insert("density_exponent".to_string(), report.density_exponent);
            record.metrics.insert("density_ci95".to_string(), report.density_ci95);
            record.metrics.insert("predicted_s".to_string(), report.predicted_s);
            record.metrics.insert("predicted_eta".to_string(), report.predicted_eta);
            record.metrics.insert("lambda_max".to_string(), report.lambda_max);
            record.metrics.insert("lambda_argmax".to_string(), report.lambda_argmax);
            record.tolerances.insert("atom_eps".to_string(), 1e-3);
            record.tolerances.insert("atom_fraction_max".to_string(), 1e-3);
            println!(
                "diagnose: fitted exponent {:.4} +/- {:.4}, predicted s {:.4}, lambda_max {:.4}",
                report.fitted_exponent, report.fitted_ci95, report.predicted_s, report.lambda_max
            );

            let atom = report
                .atom_fractions
                .iter()
                .find(|&&(eps, _)| eps == 1e-3)
                .map(|&(_, f)| f)
                .unwrap_or(f64::NAN);
            check(&mut record, "no-atom-at-zero", atom < 1e-3);
            check(
                &mut record,
                "exponent-positive",
                report.fitted_exponent - report.fitted_ci95 > 0.0,
            );
            check(
                &mut record,
                "exponent-reaches-prediction",
                report.fitted_exponent + report.fitted_ci95 >= report.predicted_s,
            );
            finish(cli, record, started)
        }
    }
}
