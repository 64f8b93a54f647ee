//! Individual-based simulation: trait diffusion between demographic
//! events, division with trait splitting, death, and the coupled resource
//! equation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::metrics::{EmpiricalMeasure, MetricsError};
use crate::model::{Coefficients, FragmentationKernel, ModelError};
use crate::rng::StreamKey;
use crate::run::{ConfigError, RunConfig, IBM_STEP_GUARD};

/// Bins of the streaming trait histogram in each summary row.
pub const HIST_BINS: usize = 32;

/// Largest tolerated fraction of steps on which the resource clamp fires.
pub const CLAMP_BUDGET: f64 = 1e-6;

/// Failures of the particle simulation.
#[derive(Clone, Debug, PartialEq)]
pub enum IbmError {
    /// `dt · (sup b + sup d)` exceeds the splitting guard.
    StepTooLarge { product: f64 },
    /// A fragment fraction outside `(0, 1)` was passed to the splitter.
    AlphaOutOfRange { alpha: f64 },
    /// Resource clamping fired on more than [`CLAMP_BUDGET`] of the steps.
    ResourceClampExcess { fraction: f64 },
    /// The run configuration failed validation.
    Config(ConfigError),
    /// Coefficient or kernel construction failed.
    Model(ModelError),
}

impl fmt::Display for IbmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IbmError::StepTooLarge { product } => write!(
                f,
                "dt * (sup b + sup d) = {product} exceeds the splitting guard {IBM_STEP_GUARD}"
            ),
            IbmError::AlphaOutOfRange { alpha } => {
                write!(f, "fragment fraction {alpha} must lie strictly inside (0, 1)")
            }
            IbmError::ResourceClampExcess { fraction } => write!(
                f,
                "resource clamp fired on fraction {fraction} of steps (budget {CLAMP_BUDGET})"
            ),
            IbmError::Config(e) => write!(f, "invalid configuration: {e}"),
            IbmError::Model(e) => write!(f, "model construction failed: {e}"),
        }
    }
}

impl From<ConfigError> for IbmError {
    fn from(e: ConfigError) -> Self {
        IbmError::Config(e)
    }
}

impl From<ModelError> for IbmError {
    fn from(e: ModelError) -> Self {
        IbmError::Model(e)
    }
}

/// The living population: one trait value per individual, each carrying
/// mass `1/k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    traits: Vec<f64>,
    k: u64,
}

impl Population {
    pub fn new(traits: Vec<f64>, k: u64) -> Self {
        debug_assert!(k >= 1, "capacity must be positive");
        debug_assert!(traits.iter().all(|x| *x >= 0.0), "traits must be nonnegative");
        Population { traits, k }
    }

    pub fn traits(&self) -> &[f64] {
        &self.traits
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }

    /// Total mass `count / k`.
    pub fn mass(&self) -> f64 {
        self.traits.len() as f64 / self.k as f64
    }

    /// The tracked moment `(1/k) Σ (1 + x_i^p)`.
    pub fn mass_moment(&self, p: f64) -> f64 {
        self.traits.iter().map(|&x| 1.0 + x.powf(p)).sum::<f64>() / self.k as f64
    }

    /// View as a weighted empirical measure.
    pub fn empirical(&self) -> Result<EmpiricalMeasure, MetricsError> {
        EmpiricalMeasure::new(self.traits.clone(), self.k as f64)
    }
}

/// Resource concentration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResourceState {
    pub value: f64,
}

/// Event counts and clamp flag for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepEvents {
    pub births: usize,
    pub deaths: usize,
    pub resource_clamped: bool,
}

/// Splits a dividing individual: the mother keeps `alpha · x` and the
/// daughter receives the complement, so the pair sums back to `x` up to
/// one rounding.
pub fn split_trait(x: f64, alpha: f64) -> Result<(f64, f64), IbmError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(IbmError::AlphaOutOfRange { alpha });
    }
    debug_assert!(x >= 0.0);
    let mother = alpha * x;
    Ok((mother, x - mother))
}

/// Instantaneous resource rate `r_in − R − (1/k) Σ χ(x_i, R)`.
pub fn resource_drift<C: Coefficients + ?Sized>(
    pop: &Population,
    res: ResourceState,
    c: &C,
) -> f64 {
    let consumption: f64 = pop.traits.iter().map(|&x| c.chi(x, res.value)).sum();
    c.r_in() - res.value - consumption / pop.k as f64
}

/// One operator-split step: a positivity-preserving Euler substep of every
/// trait with the resource frozen, then division-or-death per individual
/// on the moved traits, then an explicit resource substep clamped to
/// `[0, r̄]`.
///
/// Survivors keep their order; daughters are appended in mother order.
/// Division draws the fragment fraction from the kernel; when both the
/// division and the death clock ring within `dt`, the earlier one wins.
pub fn ibm_step<C: Coefficients + ?Sized, R: Rng + ?Sized>(
    pop: &mut Population,
    res: &mut ResourceState,
    c: &C,
    kernel: &FragmentationKernel,
    dt: f64,
    rng: &mut R,
) -> Result<StepEvents, IbmError> {
    let bounds = c.bounds();
    let product = dt * (bounds.birth_sup + bounds.death_sup);
    if product > IBM_STEP_GUARD {
        return Err(IbmError::StepTooLarge { product });
    }
    let r = res.value;
    let sqrt_dt = dt.sqrt();

    let mut survivors: Vec<f64> = Vec::with_capacity(pop.traits.len());
    let mut daughters: Vec<f64> = Vec::new();
    let mut events = StepEvents::default();

    for &x in &pop.traits {
        let noise: f64 = rng.sample(StandardNormal);
        let diff = c.diff(x, r).max(0.0);
        let moved = (x + c.zeta(x, r) * dt + (2.0 * diff).sqrt() * sqrt_dt * noise).max(0.0);

        // Both uniforms are always drawn so the stream layout does not
        // depend on the rates.
        let u_birth: f64 = rng.random();
        let u_death: f64 = rng.random();
        let b = c.birth(moved, r);
        let d = c.death(moved);
        let divides = u_birth < -(-b * dt).exp_m1();
        let dies = u_death < -(-d * dt).exp_m1();

        match (divides, dies) {
            (false, false) => survivors.push(moved),
            (true, false) => {
                let alpha = kernel.sample_alpha(rng);
                let (mother, daughter) = split_trait(moved, alpha)?;
                survivors.push(mother);
                daughters.push(daughter);
                events.births += 1;
            }
            (false, true) => events.deaths += 1,
            (true, true) => {
                // Two exponential clocks rang inside the step; replay the
                // uniforms as clock times and keep the earlier event.
                let t_birth = -(1.0 - u_birth).ln() / b;
                let t_death = -(1.0 - u_death).ln() / d;
                if t_birth <= t_death {
                    let alpha = kernel.sample_alpha(rng);
                    let (mother, daughter) = split_trait(moved, alpha)?;
                    survivors.push(mother);
                    daughters.push(daughter);
                    events.births += 1;
                } else {
                    events.deaths += 1;
                }
            }
        }
    }
    survivors.extend_from_slice(&daughters);
    pop.traits = survivors;

    let drift = resource_drift(pop, *res, c);
    let raw = res.value + dt * drift;
    let clamped = raw.clamp(0.0, bounds.r_bar);
    events.resource_clamped = clamped != raw;
    debug_assert!(clamped >= 0.0);
    res.value = clamped;
    Ok(events)
}

/// Full trait array and resource at one recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub population: Population,
    pub resource: f64,
}

/// Streaming summary recorded every `record_every` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub time: f64,
    pub count: usize,
    pub mass: f64,
    pub moment1: f64,
    pub moment2: f64,
    pub resource: f64,
    pub births_cum: u64,
    pub deaths_cum: u64,
    /// Trait mass per bin on `[0, x_max]`, [`HIST_BINS`] uniform bins.
    pub histogram: Vec<f64>,
}

/// One simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct IbmTrajectory {
    pub k: u64,
    pub seed: u64,
    pub summaries: Vec<SummaryRow>,
    pub snapshots: Vec<Snapshot>,
    pub births_total: u64,
    pub deaths_total: u64,
    pub clamp_fraction: f64,
}

fn summarize(
    pop: &Population,
    res: ResourceState,
    time: f64,
    x_max: f64,
    births: u64,
    deaths: u64,
) -> SummaryRow {
    let k = pop.k as f64;
    let mut moment1 = 0.0;
    let mut moment2 = 0.0;
    let mut histogram = vec![0.0; HIST_BINS];
    for &x in pop.traits() {
        moment1 += x;
        moment2 += x * x;
        let bin = ((x / x_max * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        histogram[bin] += 1.0 / k;
    }
    SummaryRow {
        time,
        count: pop.len(),
        mass: pop.mass(),
        moment1: moment1 / k,
        moment2: moment2 / k,
        resource: res.value,
        births_cum: births,
        deaths_cum: deaths,
        histogram,
    }
}

/// Simulates one trajectory at capacity `k`, deterministic in `seed`.
///
/// The initial population is `⌊mass · k⌋` i.i.d. draws from the normalized
/// initial law. Snapshots are taken at the first step boundary at or after
/// each configured snapshot time; summaries stream every `record_every`
/// steps.
pub fn simulate_ibm(config: &RunConfig, k: u64, seed: u64) -> Result<IbmTrajectory, IbmError> {
    config.validate()?;
    let set = config.coefficient_set()?;
    let kernel = config.build_kernel()?;

    let stream = StreamKey::new(seed);
    let mut rng_init = stream.child(0).rng();
    let mut rng = stream.child(1).rng();

    let n0 = config.n_initial(k);
    let traits = config.sample_initial(n0, &mut rng_init)?;
    let mut pop = Population::new(traits, k);
    let mut res = ResourceState { value: config.r0 };

    let dt_target = config.numerics.dt_ibm;
    let n_steps = (config.t_final / dt_target - 1e-9).ceil().max(1.0) as usize;
    let dt = config.t_final / n_steps as f64;
    let x_max = config.numerics.x_max;

    let snap_steps: Vec<usize> = config
        .experiment
        .snapshot_times
        .iter()
        .map(|&t| ((t - 1e-12) / dt).ceil().max(0.0) as usize)
        .collect();

    let mut births: u64 = 0;
    let mut deaths: u64 = 0;
    let mut clamp_steps: usize = 0;
    let mut summaries = vec![summarize(&pop, res, 0.0, x_max, 0, 0)];
    let mut snapshots = Vec::new();
    for (i, &s) in snap_steps.iter().enumerate() {
        if s == 0 {
            snapshots.push(Snapshot {
                time: config.experiment.snapshot_times[i],
                population: pop.clone(),
                resource: res.value,
            });
        }
    }

    for step in 1..=n_steps {
        let events = ibm_step(&mut pop, &mut res, &set, &kernel, dt, &mut rng)?;
        births += events.births as u64;
        deaths += events.deaths as u64;
        if events.resource_clamped {
            clamp_steps += 1;
        }
        let time = step as f64 * dt;
        if step % config.numerics.record_every == 0 || step == n_steps {
            summaries.push(summarize(&pop, res, time, x_max, births, deaths));
        }
        for (i, &s) in snap_steps.iter().enumerate() {
            if s == step {
                snapshots.push(Snapshot {
                    time: config.experiment.snapshot_times[i],
                    population: pop.clone(),
                    resource: res.value,
                });
            }
        }
    }

    let clamp_fraction = clamp_steps as f64 / n_steps as f64;
    if clamp_fraction > CLAMP_BUDGET {
        return Err(IbmError::ResourceClampExcess { fraction: clamp_fraction });
    }
    Ok(IbmTrajectory {
        k,
        seed,
        summaries,
        snapshots,
        births_total: births,
        deaths_total: deaths,
        clamp_fraction,
    })
}

/// Time series of the tracked moment `⟨ν_t, 1 + x^p⟩` over the retained
/// snapshots.
pub fn mass_moment_track(traj: &IbmTrajectory, p: f64) -> Vec<(f64, f64)> {
    traj.snapshots
        .iter()
        .map(|s| (s.time, s.population.mass_moment(p)))
        .collect()
}
