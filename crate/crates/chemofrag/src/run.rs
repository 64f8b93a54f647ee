//! Run configuration: one description of a model instance, its numerical
//! parameters, and the experiment sweep, shared by the simulator, the
//! solver, and the diagnostics.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::GridFunction;
use crate::model::{
    CoefficientFamily, CoefficientSet, Coefficients, FragmentationKernel, KernelVariant,
    ModelError,
};
use crate::quad::gauss_legendre;

/// Splitting-bias guard for the particle step: `dt · (sup b + sup d)` must
/// stay at or below this.
pub const IBM_STEP_GUARD: f64 = 0.1;

/// Courant bound for the explicit transport part of the grid solver.
pub const CFL_GUARD: f64 = 0.9;

/// Largest tolerated fraction of initial mass beyond `x_max / 2`, so the
/// right-boundary truncation is immaterial.
pub const TAIL_GUARD: f64 = 1e-8;

/// Smallest tolerated probability mass of a truncation window relative to
/// the untruncated Gaussian; below this, normalization and rejection
/// sampling are both unreliable.
pub const WINDOW_FLOOR: f64 = 1e-3;

/// Configuration problems reported by [`RunConfig::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    /// A scalar parameter is missing its admissible range.
    ParamOutOfRange { name: &'static str, value: f64 },
    /// An experiment list that must be nonempty is empty.
    EmptyList { name: &'static str },
    /// Snapshot times are not strictly increasing within `(0, t_final]`.
    SnapshotsOutOfOrder,
    /// The particle step `dt_ibm · (sup b + sup d)` exceeds [`IBM_STEP_GUARD`].
    IbmStepGuard { product: f64 },
    /// The transport Courant number `dt_pde · sup ζ / Δx` exceeds [`CFL_GUARD`].
    CflGuard { courant: f64 },
    /// The initial law puts more than [`TAIL_GUARD`] of its mass beyond
    /// `x_max / 2`.
    InitialTailTooHeavy { tail_fraction: f64 },
    /// The truncation window carries less than [`WINDOW_FLOOR`] of the
    /// untruncated Gaussian mass.
    InitialWindowDegenerate { window_mass: f64 },
    /// Coefficient or kernel construction failed.
    Model(ModelError),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::ParamOutOfRange { name, value } => {
                write!(f, "parameter {name} = {value} is out of range")
            }
            ConfigError::EmptyList { name } => write!(f, "experiment list {name} is empty"),
            ConfigError::SnapshotsOutOfOrder => {
                write!(f, "snapshot times must be strictly increasing within (0, t_final]")
            }
            ConfigError::IbmStepGuard { product } => write!(
                f,
                "dt_ibm * (sup b + sup d) = {product} exceeds the splitting guard {IBM_STEP_GUARD}"
            ),
            ConfigError::CflGuard { courant } => {
                write!(f, "transport Courant number {courant} exceeds {CFL_GUARD}")
            }
            ConfigError::InitialTailTooHeavy { tail_fraction } => write!(
                f,
                "initial mass fraction {tail_fraction} beyond x_max/2 exceeds {TAIL_GUARD}"
            ),
            ConfigError::InitialWindowDegenerate { window_mass } => {
                write!(f, "initial truncation window carries mass {window_mass} < {WINDOW_FLOOR}")
            }
            ConfigError::Model(e) => write!(f, "model construction failed: {e}"),
        }
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Model(e)
    }
}

/// Shape of the initial trait law. Every variant has bounded support, so
/// the first-moment condition holds automatically.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialShape {
    /// All mass at a single trait value.
    PointMass { x0: f64 },
    /// Gaussian restricted to `[lo, hi]` and renormalized.
    TruncatedGaussian { mean: f64, sd: f64, lo: f64, hi: f64 },
    /// Piecewise-constant density given by cell values on `[0, x_max]`.
    GridProfile { x_max: f64, values: Vec<f64> },
}

/// Initial condition: total mass together with the normalized shape.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    pub mass: f64,
    pub shape: InitialShape,
}

/// Numerical parameters shared by the particle, path, and grid routines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Numerics {
    /// Particle-simulation step.
    pub dt_ibm: f64,
    /// Grid-solver step.
    pub dt_pde: f64,
    /// Path-sampling step for the trait SDE tools.
    pub dt_sde: f64,
    /// Grid cell width.
    pub dx: f64,
    /// Right end of the trait grid.
    pub x_max: f64,
    /// Largest tolerated tail mass fraction beyond `x_max / 2` during a
    /// grid solve.
    pub truncation_tol: f64,
    /// Quadrature size for continuous fragmentation kernels.
    pub n_quad: usize,
    /// Number of members in the bounded-Lipschitz test dictionary.
    pub dict_size: usize,
    /// Number of shifts in the smoothness ladder.
    pub h_count: usize,
    /// Largest shift in the smoothness ladder.
    pub h_max: f64,
    /// Monte Carlo paths per estimate.
    pub mc_paths: usize,
    /// Histogram bins for transition-density estimates.
    pub density_bins: usize,
    /// Particle summaries are recorded every this many steps.
    pub record_every: usize,
}

/// Experiment sweep: capacities, seeds, and observation times.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub k_values: Vec<u64>,
    pub seeds: Vec<u64>,
    pub snapshot_times: Vec<f64>,
}

/// Complete description of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub family: CoefficientFamily,
    pub r_in: f64,
    pub kernel: KernelVariant,
    pub initial: InitialCondition,
    pub r0: f64,
    pub t_final: f64,
    pub numerics: Numerics,
    pub experiment: Experiment,
}

impl RunConfig {
    /// The reference configuration used throughout the test battery:
    /// affine drift, resource-linear degenerate diffusion, Monod division
    /// and consumption, unit death, uniform fragment fractions, and a unit
    /// mass truncated-Gaussian initial law.
    pub fn reference() -> Self {
        use crate::model::{DiffForm, Shape};
        RunConfig {
            family: CoefficientFamily {
                zeta0: 0.2,
                zeta1: 0.05,
                diff: DiffForm::ResourceLinear { delta0: 0.2, delta1: 0.5 },
                b0: 1.0,
                kappa_b: 1.0,
                birth_shape: Shape::One,
                d1: 0.0,
                death_shape: Shape::One,
                chi0: 0.4,
                kappa_chi: 1.0,
                chi_shape: Shape::One,
            },
            r_in: 1.0,
            kernel: KernelVariant::Uniform01,
            initial: InitialCondition {
                mass: 1.0,
                shape: InitialShape::TruncatedGaussian { mean: 1.0, sd: 0.25, lo: 0.25, hi: 2.0 },
            },
            r0: 1.0,
            t_final: 2.0,
            numerics: Numerics {
                dt_ibm: 0.005,
                dt_pde: 0.004,
                dt_sde: 1e-3,
                dx: 0.02,
                x_max: 30.0,
                truncation_tol: 1e-5,
                n_quad: 32,
                dict_size: 64,
                h_count: 16,
                h_max: 0.5,
                mc_paths: 10_000,
                density_bins: 64,
                record_every: 1,
            },
            experiment: Experiment {
                k_values: vec![100, 400, 1600],
                seeds: vec![1, 2, 3, 4, 5],
                snapshot_times: vec![1.0, 2.0],
            },
        }
    }

    /// Resource ceiling `r_in ∨ R₀`: the dynamics never exceed it.
    pub fn r_bar(&self) -> f64 {
        self.r_in.max(self.r0)
    }

    /// Builds the coefficient set pinned to this run's working window.
    pub fn coefficient_set(&self) -> Result<CoefficientSet, ModelError> {
        CoefficientSet::new(self.family, self.r_in, self.numerics.x_max, self.r_bar())
    }

    /// Builds the fragmentation kernel with this run's quadrature size.
    pub fn build_kernel(&self) -> Result<FragmentationKernel, ModelError> {
        FragmentationKernel::build(self.kernel.clone(), self.numerics.n_quad)
    }

    /// Initial number of individuals at capacity `k`: `⌊mass · k⌋`.
    pub fn n_initial(&self, k: u64) -> usize {
        (self.initial.mass * k as f64).floor() as usize
    }

    /// Geometric shift ladder from `h_max` down to `max(2·resolution, 1e-3)`
    /// with `h_count` entries, for smoothness fitting at the given grid
    /// resolution.
    pub fn h_grid(&self, resolution: f64) -> Result<Vec<f64>, ConfigError> {
        let n = self.numerics.h_count;
        let h_max = self.numerics.h_max;
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(ConfigError::ParamOutOfRange { name: "resolution", value: resolution });
        }
        if n < 3 {
            return Err(ConfigError::ParamOutOfRange { name: "h_count", value: n as f64 });
        }
        let h_min = (2.0 * resolution).max(1e-3);
        if h_min >= h_max || h_max.is_nan() {
            return Err(ConfigError::ParamOutOfRange { name: "h_max", value: h_max });
        }
        let ratio = (h_min / h_max).powf(1.0 / (n - 1) as f64);
        let mut grid = Vec::with_capacity(n);
        let mut h = h_max;
        for _ in 0..n {
            grid.push(h);
            h *= ratio;
        }
        // The geometric descent can land one ulp below the floor; the
        // difference tools reject shifts under 2x the grid spacing, so pin
        // the last entry to the exact floor.
        let last = grid.last_mut().expect("h_count >= 3");
        if *last < h_min {
            *last = h_min;
        }
        Ok(grid)
    }

    /// Checks every validity condition: parameter ranges, list shapes,
    /// buildable coefficients and kernel, step-size guards, and the initial
    /// tail and window conditions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &'static str, value: f64| -> Result<(), ConfigError> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::ParamOutOfRange { name, value })
            }
        };
        positive("r_in", self.r_in)?;
        if !(self.r0 >= 0.0 && self.r0.is_finite()) {
            return Err(ConfigError::ParamOutOfRange { name: "r0", value: self.r0 });
        }
        positive("t_final", self.t_final)?;
        positive("initial.mass", self.initial.mass)?;
        let n = &self.numerics;
        positive("dt_ibm", n.dt_ibm)?;
        positive("dt_pde", n.dt_pde)?;
        positive("dt_sde", n.dt_sde)?;
        positive("dx", n.dx)?;
        positive("x_max", n.x_max)?;
        positive("truncation_tol", n.truncation_tol)?;
        positive("h_max", n.h_max)?;
        if n.dx >= n.x_max {
            return Err(ConfigError::ParamOutOfRange { name: "dx", value: n.dx });
        }
        if n.density_bins < 10 {
            return Err(ConfigError::ParamOutOfRange {
                name: "density_bins",
                value: n.density_bins as f64,
            });
        }
        if n.record_every == 0 {
            return Err(ConfigError::ParamOutOfRange { name: "record_every", value: 0.0 });
        }
        if n.mc_paths == 0 {
            return Err(ConfigError::ParamOutOfRange { name: "mc_paths", value: 0.0 });
        }
        if n.dict_size == 0 {
            return Err(ConfigError::ParamOutOfRange { name: "dict_size", value: 0.0 });
        }
        if self.experiment.k_values.is_empty() {
            return Err(ConfigError::EmptyList { name: "k_values" });
        }
        if self.experiment.k_values.contains(&0) {
            return Err(ConfigError::ParamOutOfRange { name: "k_values", value: 0.0 });
        }
        if self.experiment.seeds.is_empty() {
            return Err(ConfigError::EmptyList { name: "seeds" });
        }
        if self.experiment.snapshot_times.is_empty() {
            return Err(ConfigError::EmptyList { name: "snapshot_times" });
        }
        let times = &self.experiment.snapshot_times;
        let sorted = times.windows(2).all(|w| w[0] < w[1]);
        let in_range = times.iter().all(|&t| t > 0.0 && t <= self.t_final + 1e-12);
        if !(sorted && in_range) {
            return Err(ConfigError::SnapshotsOutOfOrder);
        }

        match &self.initial.shape {
            InitialShape::PointMass { x0 } => {
                if !(x0.is_finite() && *x0 >= 0.0 && *x0 < n.x_max) {
                    return Err(ConfigError::ParamOutOfRange { name: "x0", value: *x0 });
                }
            }
            InitialShape::TruncatedGaussian { mean, sd, lo, hi } => {
                if !mean.is_finite() {
                    return Err(ConfigError::ParamOutOfRange { name: "mean", value: *mean });
                }
                positive("sd", *sd)?;
                if !(lo.is_finite() && *lo >= 0.0) {
                    return Err(ConfigError::ParamOutOfRange { name: "lo", value: *lo });
                }
                if !(hi.is_finite() && hi > lo) {
                    return Err(ConfigError::ParamOutOfRange { name: "hi", value: *hi });
                }
            }
            InitialShape::GridProfile { x_max, values } => {
                positive("profile x_max", *x_max)?;
                if values.is_empty() {
                    return Err(ConfigError::EmptyList { name: "profile values" });
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(ConfigError::ParamOutOfRange { name: "profile values", value: -1.0 });
                }
                if values.iter().sum::<f64>() == 0.0 {
                    return Err(ConfigError::ParamOutOfRange { name: "profile values", value: 0.0 });
                }
            }
        }

        let set = self.coefficient_set()?;
        self.build_kernel()?;
        let b = set.bounds();
        let product = n.dt_ibm * (b.birth_sup + b.death_sup);
        if product > IBM_STEP_GUARD {
            return Err(ConfigError::IbmStepGuard { product });
        }
        let courant = n.dt_pde * b.zeta_sup / n.dx;
        if courant > CFL_GUARD {
            return Err(ConfigError::CflGuard { courant });
        }

        let tail_fraction = self.initial_tail_fraction()?;
        if tail_fraction > TAIL_GUARD {
            return Err(ConfigError::InitialTailTooHeavy { tail_fraction });
        }
        Ok(())
    }

    /// Fraction of the initial mass lying beyond `x_max / 2`.
    fn initial_tail_fraction(&self) -> Result<f64, ConfigError> {
        let half = self.numerics.x_max / 2.0;
        match &self.initial.shape {
            InitialShape::PointMass { x0 } => Ok(if *x0 > half { 1.0 } else { 0.0 }),
            InitialShape::TruncatedGaussian { mean, sd, lo, hi } => {
                let window = gaussian_window_mass(*mean, *sd, *lo, *hi);
                if window < WINDOW_FLOOR {
                    return Err(ConfigError::InitialWindowDegenerate { window_mass: window });
                }
                if *hi <= half {
                    return Ok(0.0);
                }
                let tail = gaussian_window_mass(*mean, *sd, half.max(*lo), *hi);
                Ok(tail / window)
            }
            InitialShape::GridProfile { x_max, values } => {
                let g = GridFunction::new(*x_max, values.clone());
                Ok(g.mass_above(half) / g.mass())
            }
        }
    }

    /// Projects the initial law onto the solver grid as cell averages whose
    /// total mass equals the configured mass exactly.
    pub fn initial_grid(&self) -> Result<GridFunction, ConfigError> {
        let n_cells = (self.numerics.x_max / self.numerics.dx).round() as usize;
        let dx = self.numerics.x_max / n_cells as f64;
        let mut g = GridFunction::zeros(n_cells, self.numerics.x_max);
        match &self.initial.shape {
            InitialShape::PointMass { x0 } => {
                let j = ((x0 / dx) as usize).min(n_cells - 1);
                g.values_mut()[j] = self.initial.mass / dx;
            }
            InitialShape::TruncatedGaussian { mean, sd, lo, hi } => {
                let density = |x: f64| {
                    let z = (x - mean) / sd;
                    (-0.5 * z * z).exp()
                };
                fill_cell_averages(&mut g, &density, *lo, *hi);
                rescale_to_mass(&mut g, self.initial.mass)?;
            }
            InitialShape::GridProfile { x_max, values } => {
                let src = GridFunction::new(*x_max, values.clone());
                fill_cell_averages(&mut g, &|x| src.eval_linear(x), 0.0, *x_max);
                rescale_to_mass(&mut g, self.initial.mass)?;
            }
        }
        Ok(g)
    }

    /// Draws `count` i.i.d. trait values from the normalized initial law.
    pub fn sample_initial<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, ConfigError> {
        match &self.initial.shape {
            InitialShape::PointMass { x0 } => Ok(vec![*x0; count]),
            InitialShape::TruncatedGaussian { mean, sd, lo, hi } => {
                let window = gaussian_window_mass(*mean, *sd, *lo, *hi);
                if window < WINDOW_FLOOR {
                    return Err(ConfigError::InitialWindowDegenerate { window_mass: window });
                }
                let mut out = Vec::with_capacity(count);
                let mut attempts: u64 = 0;
                let cap = 10_000 * count as u64 + 10_000;
                while out.len() < count {
                    attempts += 1;
                    if attempts > cap {
                        return Err(ConfigError::InitialWindowDegenerate { window_mass: window });
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    let x = mean + sd * z;
                    if x >= *lo && x <= *hi {
                        out.push(x);
                    }
                }
                Ok(out)
            }
            InitialShape::GridProfile { x_max, values } => {
                let n = values.len();
                let dx = x_max / n as f64;
                let mut cum = Vec::with_capacity(n);
                let mut total = 0.0;
                for v in values {
                    total += v;
                    cum.push(total);
                }
                if total <= 0.0 {
                    return Err(ConfigError::ParamOutOfRange {
                        name: "profile values",
                        value: 0.0,
                    });
                }
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let u = rng.random::<f64>() * total;
                    let j = cum.partition_point(|&c| c <= u).min(n - 1);
                    let inner = rng.random::<f64>();
                    out.push((j as f64 + inner) * dx);
                }
                Ok(out)
            }
        }
    }
}

/// Lower envelope for the resource at time `t`: the decay bound
/// `R₀ e^{−(1+ρ)t}` with `ρ` the resource-Lipschitz constant of the
/// consumption rate times the largest observed population mass. Returns 0
/// when consumption does not vanish at zero resource, where no such bound
/// holds.
pub fn resource_floor(c: &dyn Coefficients, r0: f64, t: f64, sup_mass: f64) -> f64 {
    let x_max = c.bounds().x_max;
    let probes = [0.0, 0.5 * x_max, x_max];
    if probes.iter().any(|&x| c.chi(x, 0.0) != 0.0) {
        return 0.0;
    }
    let chi_dr = match c.derivative_bounds() {
        Some(d) => d.chi_dr,
        None => c.bounds().chi_lip,
    };
    let rho = chi_dr * sup_mass;
    r0 * (-(1.0 + rho) * t).exp()
}

/// Unnormalized Gaussian window mass `∫_lo^hi e^{−(x−mean)²/(2sd²)} dx`
/// divided by the full-line integral, evaluated by quadrature on the
/// window intersected with `mean ± 12 sd`.
fn gaussian_window_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = lo.max(mean - 12.0 * sd);
    let b = hi.min(mean + 12.0 * sd);
    if a >= b {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(64);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for (&x, &w) in nodes.iter().zip(weights.iter()) {
        let y = mid + half * x;
        let z = (y - mean) / sd;
        sum += w * (-0.5 * z * z).exp();
    }
    sum * half / (sd * core::f64::consts::TAU.sqrt())
}

/// Fills each cell with the average of `density` over the cell intersected
/// with `[lo, hi]`, leaving cells outside the window at zero.
fn fill_cell_averages(g: &mut GridFunction, density: &dyn Fn(f64) -> f64, lo: f64, hi: f64) {
    let dx = g.dx();
    let (nodes, weights) = gauss_legendre(16);
    let n_cells = g.len();
    for j in 0..n_cells {
        let a = (j as f64 * dx).max(lo);
        let b = ((j + 1) as f64 * dx).min(hi);
        if a >= b {
            continue;
        }
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut sum = 0.0;
        for (&x, &w) in nodes.iter().zip(weights.iter()) {
            sum += w * density(mid + half * x);
        }
        g.values_mut()[j] = sum * half / dx;
    }
}

/// Rescales the grid so its mass equals `mass` exactly.
fn rescale_to_mass(g: &mut GridFunction, mass: f64) -> Result<(), ConfigError> {
    let raw = g.mass();
    if !(raw > 0.0 && raw.is_finite()) {
        return Err(ConfigError::InitialWindowDegenerate { window_mass: raw });
    }
    g.scale(mass / raw);
    Ok(())
}
