//! The three experiment pipelines behind the CLI verbs `converge`,
//! `agree`, and `diagnose-density`.
//!
//! Each pipeline is a pure function from a validated config (plus the run
//! seed) to a report struct; persistence is the caller's concern. Jobs fan
//! out over a rayon pool with a fixed reduction order, and every stochastic
//! component receives a stream derived from (run seed, K, config seed), so
//! reports are reproducible regardless of thread count.

use std::fmt;

use chemofrag::besov::{predicted_exponents, smoothness_exponent, BesovError};
use chemofrag::grid::GridFunction;
use chemofrag::ibm::{simulate_ibm, IbmError};
use chemofrag::metrics::{bl_distance, MetricsError, TestDictionary};
use chemofrag::model::Coefficients;
use chemofrag::pde::{
    mild_residual, mild_s_nodes, solve_pde, weak_form_residual, MildResidual, PdeError,
    SmoothBump,
};
use chemofrag::rng::StreamKey;
use chemofrag::run::{ConfigError, RunConfig};
use chemofrag::sde::{estimate_transition_density, SdeError, TransitionTable};
use rayon::prelude::*;

use crate::config::fnv1a64;

/// Any component failure surfaced by an experiment, plus precondition
/// violations of the experiment contracts themselves.
#[derive(Debug)]
pub enum HarnessError {
    Config(ConfigError),
    Ibm(IbmError),
    Pde(PdeError),
    Sde(SdeError),
    Metrics(MetricsError),
    Besov(BesovError),
    Precondition(String),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(e) => write!(f, "config guard: {e}"),
            HarnessError::Ibm(e) => write!(f, "particle simulation: {e}"),
            HarnessError::Pde(e) => write!(f, "grid solver: {e}"),
            HarnessError::Sde(e) => write!(f, "path sampler: {e}"),
            HarnessError::Metrics(e) => write!(f, "metrics: {e}"),
            HarnessError::Besov(e) => write!(f, "smoothness fit: {e}"),
            HarnessError::Precondition(msg) => write!(f, "experiment precondition: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e)
    }
}

impl From<chemofrag::model::ModelError> for HarnessError {
    fn from(e: chemofrag::model::ModelError) -> Self {
        HarnessError::Config(ConfigError::from(e))
    }
}

impl From<IbmError> for HarnessError {
    fn from(e: IbmError) -> Self {
        HarnessError::Ibm(e)
    }
}

impl From<PdeError> for HarnessError {
    fn from(e: PdeError) -> Self {
        HarnessError::Pde(e)
    }
}

impl From<SdeError> for HarnessError {
    fn from(e: SdeError) -> Self {
        HarnessError::Sde(e)
    }
}

impl From<MetricsError> for HarnessError {
    fn from(e: MetricsError) -> Self {
        HarnessError::Metrics(e)
    }
}

impl From<BesovError> for HarnessError {
    fn from(e: BesovError) -> Self {
        HarnessError::Besov(e)
    }
}

/// Seed for one (K, config-seed) job: FNV-1a 64 over the little-endian
/// triple (run seed, K, config seed). This is the documented substream
/// derivation run-seed -> per-K -> per-seed; per-path splitting happens
/// inside the components via [`StreamKey`].
pub fn job_seed(run_seed: u64, k: u64, seed: u64) -> u64 {
    let mut bytes = [0u8; 24];
    bytes[..8].copy_from_slice(&run_seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&k.to_le_bytes());
    bytes[16..].copy_from_slice(&seed.to_le_bytes());
    fnv1a64(&bytes)
}

/// One (K, seed, snapshot time) evaluation against the grid solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergeRow {
    pub k: u64,
    pub seed: u64,
    pub time: f64,
    pub bl: f64,
    pub resource_err: f64,
}

/// Seed-averaged errors at one (K, snapshot time).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergeSummary {
    pub k: u64,
    pub time: f64,
    pub bl_mean: f64,
    pub bl_se: f64,
    pub resource_err_mean: f64,
}

/// Output of the large-capacity convergence experiment.
#[derive(Clone, Debug)]
pub struct ConvergeReport {
    pub rows: Vec<ConvergeRow>,
    pub summaries: Vec<ConvergeSummary>,
    /// Fitted rate `r` in `bl_mean ~ K^(-r)` at the final snapshot time.
    pub fitted_rate: f64,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn check_converge_preconditions(config: &RunConfig) -> Result<(), HarnessError> {
    let ks = &config.experiment.k_values;
    if ks.len() < 3 {
        return Err(HarnessError::Precondition(format!(
            "need at least 3 capacities, got {}",
            ks.len()
        )));
    }
    for w in ks.windows(3) {
        let (a, b, c) = (w[0] as u128, w[1] as u128, w[2] as u128);
        if b * b != a * c {
            return Err(HarnessError::Precondition(format!(
                "capacities must be a geometric progression; {} {} {} are not",
                w[0], w[1], w[2]
            )));
        }
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Precondition("capacities must increase".to_string()));
    }
    if config.experiment.seeds.len() < 3 {
        return Err(HarnessError::Precondition(format!(
            "need at least 3 seeds, got {}",
            config.experiment.seeds.len()
        )));
    }
    Ok(())
}

/// Runs the capacity sweep: one particle trajectory per (K, seed), each
/// compared against a single grid solution at every snapshot time with the
/// bounded-Lipschitz dictionary distance and the resource gap.
pub fn converge_experiment(
    config: &RunConfig,
    run_seed: u64,
) -> Result<ConvergeReport, HarnessError> {
    config.validate()?;
    check_converge_preconditions(config)?;
    let pde = solve_pde(config)?;
    let dict =
        TestDictionary::default_for(config.numerics.x_max, config.numerics.dict_size)?;

    let jobs: Vec<(u64, u64)> = config
        .experiment
        .k_values
        .iter()
        .flat_map(|&k| config.experiment.seeds.iter().map(move |&s| (k, s)))
        .collect();

    let per_job: Vec<Result<Vec<ConvergeRow>, HarnessError>> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let traj = simulate_ibm(config, k, job_seed(run_seed, k, seed))?;
            let mut rows = Vec::with_capacity(config.experiment.snapshot_times.len());
            for (i, &t) in config.experiment.snapshot_times.iter().enumerate() {
                let snap = &traj.snapshots[i];
                let empirical = snap.population.empirical()?;
                let idx = pde.index_at(t);
                let bl = bl_distance(&empirical, &pde.states[idx], &dict);
                let resource_err = (snap.resource - pde.resource[idx]).abs();
                rows.push(ConvergeRow { k, seed, time: t, bl, resource_err });
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::with_capacity(jobs.len());
    for r in per_job {
        rows.extend(r?);
    }

    let mut summaries = Vec::new();
    for &k in &config.experiment.k_values {
        for &t in &config.experiment.snapshot_times {
            let bls: Vec<f64> =
                rows.iter().filter(|r| r.k == k && r.time == t).map(|r| r.bl).collect();
            let rerrs: Vec<f64> = rows
                .iter()
                .filter(|r| r.k == k && r.time == t)
                .map(|r| r.resource_err)
                .collect();
            let (bl_mean, bl_se) = mean_and_se(&bls);
            let (resource_err_mean, _) = mean_and_se(&rerrs);
            summaries.push(ConvergeSummary { k, time: t, bl_mean, bl_se, resource_err_mean });
        }
    }

    let t_last = *config.experiment.snapshot_times.last().expect("validated nonempty");
    let xs: Vec<f64> =
        config.experiment.k_values.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = config
        .experiment
        .k_values
        .iter()
        .map(|&k| {
            summaries
                .iter()
                .find(|s| s.k == k && s.time == t_last)
                .expect("summary exists for every (k, time)")
                .bl_mean
                .ln()
        })
        .collect();
    let fitted_rate = -ols_slope(&xs, &ys);

    Ok(ConvergeReport { rows, summaries, fitted_rate })
}

/// Weak-form residuals for one test bump at the two resolutions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakRow {
    pub lo: f64,
    pub hi: f64,
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
}

/// Output of the solver-agreement experiment.
#[derive(Clone, Debug)]
pub struct AgreementReport {
    /// Residuals at (2dx, 2dt) vs the configured (dx, dt), per test bump.
    pub weak: Vec<WeakRow>,
    pub mild: MildResidual,
    pub mild_budget: f64,
    pub mild_passes: bool,
    /// Relative change of total mass per unit time on the fine solve,
    /// minus the expected reaction contribution; near zero only indicates
    /// the recorded series is self-consistent, not conservation.
    pub mass_end: f64,
    pub resource_end: f64,
}

/// Solves the system at the configured resolution and at (2dx, 2dt),
/// evaluates the weak-form residual battery, and checks the mild
/// representation against path-sampled transition densities along the
/// solved resource path.
pub fn agreement_experiment(
    config: &RunConfig,
    run_seed: u64,
) -> Result<AgreementReport, HarnessError> {
    config.validate()?;
    let fine = solve_pde(config)?;
    let mut coarse_cfg = config.clone();
    coarse_cfg.numerics.dx = config.numerics.dx * 2.0;
    coarse_cfg.numerics.dt_pde = config.numerics.dt_pde * 2.0;
    let coarse = solve_pde(&coarse_cfg)?;

    let set = config.coefficient_set()?;
    let kernel = config.build_kernel()?;
    let x_max = config.numerics.x_max;
    let battery = [
        (x_max / 60.0, x_max / 5.0),
        (x_max / 40.0, x_max / 3.0),
        (x_max / 15.0, x_max / 2.0),
    ];
    let mut weak = Vec::with_capacity(battery.len());
    for &(lo, hi) in &battery {
        let bump = SmoothBump::new(lo, hi);
        let rc = *weak_form_residual(&coarse, &bump, &set, &kernel).last().expect("nonempty");
        let rf = *weak_form_residual(&fine, &bump, &set, &kernel).last().expect("nonempty");
        weak.push(WeakRow { lo, hi, coarse: rc, fine: rf, ratio: rc / rf });
    }

    let t = config.t_final;
    let x_nodes: Vec<f64> = (0..16)
        .map(|i| config.numerics.dx + i as f64 * (x_max / 3.0 - config.numerics.dx) / 15.0)
        .collect();
    let table = TransitionTable::build(
        mild_s_nodes(t, 8),
        x_nodes,
        t,
        &fine.resource_path(),
        &set,
        config.numerics.dt_sde,
        config.numerics.mc_paths,
        config.numerics.density_bins,
        StreamKey::new(run_seed).child(1),
    )?;
    let mild = mild_residual(&fine, &table, &set, &kernel)?;

    Ok(AgreementReport {
        weak,
        mild,
        mild_budget: mild.budget(),
        mild_passes: mild.passes(),
        mass_end: *fine.mass.last().expect("nonempty"),
        resource_end: *fine.resource.last().expect("nonempty"),
    })
}

/// Output of the density diagnostics pipeline.
#[derive(Clone, Debug)]
pub struct DensityReport {
    /// Fitted decay exponent of the first-difference ladder applied to
    /// `sqrt(D(., R_T)) u_T`, with its 95% half-width.
    pub fitted_exponent: f64,
    pub fitted_ci95: f64,
    /// Same fit applied to the path-sampled terminal density histogram.
    pub density_exponent: f64,
    pub density_ci95: f64,
    /// Predicted smoothness index for the square-root-diffusion regularity
    /// (alpha = 1/2, beta = 1, m = 2, k = 0).
    pub predicted_s: f64,
    pub predicted_eta: f64,
    /// Largest guaranteed index over the first-order family, with its
    /// maximizing Holder exponent.
    pub lambda_max: f64,
    pub lambda_argmax: f64,
    /// `(eps, fraction of terminal paths at or below eps)`.
    pub atom_fractions: Vec<(f64, f64)>,
    /// `(eps, grid-solution mass fraction below eps)` at the final time.
    pub pde_mass_below: Vec<(f64, f64)>,
}

/// Runs the smoothing diagnostics: solves the system, fits the smoothness
/// exponent of the diffusion-weighted terminal profile and of a sampled
/// transition density, and reports atom diagnostics near zero together
/// with the predicted exponents.
pub fn density_diagnostics(
    config: &RunConfig,
    run_seed: u64,
) -> Result<DensityReport, HarnessError> {
    config.validate()?;
    let pde = solve_pde(config)?;
    let set = config.coefficient_set()?;
    let t = config.t_final;
    let idx = pde.index_at(t);
    let u_t = &pde.states[idx];
    let r_t = pde.resource[idx];

    let dx = u_t.dx();
    let weighted: Vec<f64> = u_t
        .values()
        .iter()
        .enumerate()
        .map(|(j, &v)| set.diff((j as f64 + 0.5) * dx, r_t).max(0.0).sqrt() * v)
        .collect();
    let weighted = GridFunction::new(config.numerics.x_max, weighted);
    let h_grid = config.h_grid(dx)?;
    let fit = smoothness_exponent(&weighted, 1, &h_grid)?;

    let initial = config.initial_grid()?;
    let x0 = initial.pair_with(|x| x) / initial.mass();
    let est = estimate_transition_density(
        x0,
        0.0,
        t,
        &pde.resource_path(),
        &set,
        config.numerics.dt_sde,
        config.numerics.mc_paths,
        config.numerics.density_bins,
        StreamKey::new(run_seed).child(2),
    )?;
    let hist_grid = config.h_grid(est.histogram.dx())?;
    let density_fit = smoothness_exponent(&est.histogram, 1, &hist_grid)?;

    let predicted = predicted_exponents(0.5, 1.0, 2, 0.0)?;
    let (lambda_argmax, lambda_max) = chemofrag::besov::lambda_max();

    let mass = u_t.mass();
    let pde_mass_below = chemofrag::sde::BELOW_EPS
        .iter()
        .map(|&eps| {
            let below = if mass > 0.0 { (mass - u_t.mass_above(eps)) / mass } else { 0.0 };
            (eps, below)
        })
        .collect();

    Ok(DensityReport {
        fitted_exponent: fit.slope,
        fitted_ci95: fit.ci95,
        density_exponent: density_fit.slope,
        density_ci95: density_fit.ci95,
        predicted_s: predicted.s,
        predicted_eta: predicted.eta,
        lambda_max,
        lambda_argmax,
        atom_fractions: est.below.clone(),
        pde_mass_below,
    })
}
