//! Finite-volume solver for the coupled density-resource system, with
//! weak-form and mild-form residual checkers.
//!
//! The density obeys `∂_t u = ∂_x²(D u) − ∂_x(ζ u) + G†[b u] − d u` with
//! zero total flux at both ends of the working window, and the resource
//! obeys `Ṙ = r_in − R − ∫ χ u dx`. One step is IMEX: explicit upwind
//! transport and explicit reactions feed an implicit tridiagonal solve of
//! the divergence-form diffusion, then the resource advances by one Heun
//! substep with the trapezoid pairing of `∫ χ u`. Every substep moves mass
//! only through interior faces, so with reactions switched off the total
//! mass is conserved to rounding.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::GridFunction;
use crate::model::{fragment_dual, fragment_primal, Coefficients, FragmentationKernel};
use crate::run::{ConfigError, RunConfig, CFL_GUARD};
use crate::sde::{ResourcePath, TransitionTable};

/// Largest relative mass the post-step positivity clip may remove.
pub const NEGATIVITY_BUDGET: f64 = 1e-8;

/// Failures of the deterministic solver and its residual checkers.
#[derive(Clone, Debug, PartialEq)]
pub enum PdeError {
    /// The explicit transport part would violate its Courant bound.
    CflViolation { courant: f64 },
    /// Positivity clipping removed more than [`NEGATIVITY_BUDGET`] relative
    /// mass in one step.
    NegativityOverflow { fraction: f64 },
    /// The truncation-tail monitor found too much relative mass beyond the
    /// half-window.
    TruncationTolExceeded { time: f64, tail: f64, tol: f64 },
    /// The Monte Carlo noise of the mild right side exceeds half the
    /// reported residual, so the residual cannot be certified.
    InsufficientPaths { se: f64, residual: f64 },
    Config(ConfigError),
}

impl fmt::Display for PdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PdeError::CflViolation { courant } => {
                write!(f, "transport Courant number {courant} exceeds {CFL_GUARD}")
            }
            PdeError::NegativityOverflow { fraction } => {
                write!(f, "positivity clip removed relative mass {fraction} in one step")
            }
            PdeError::TruncationTolExceeded { time, tail, tol } => {
                write!(f, "tail fraction {tail} beyond the half-window at t = {time} exceeds {tol}")
            }
            PdeError::InsufficientPaths { se, residual } => {
                write!(
                    f,
                    "mild residual {residual} is not certifiable: Monte Carlo noise {se} exceeds half of it"
                )
            }
            PdeError::Config(e) => write!(f, "configuration error: {e}"),
        }
    }
}

impl From<ConfigError> for PdeError {
    fn from(e: ConfigError) -> Self {
        PdeError::Config(e)
    }
}

/// Solves a tridiagonal system in place by the Thomas algorithm.
///
/// `sub[j]` multiplies `x[j-1]` in row `j`, `sup[j]` multiplies `x[j+1]`.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    let mut scratch = vec![0.0; n];
    let mut denom = diag[0];
    rhs[0] /= denom;
    for j in 1..n {
        scratch[j] = sup[j - 1] / denom;
        denom = diag[j] - sub[j] * scratch[j];
        rhs[j] = (rhs[j] - sub[j] * rhs[j - 1]) / denom;
    }
    for j in (0..n - 1).rev() {
        rhs[j] -= scratch[j + 1] * rhs[j + 1];
    }
}

/// One IMEX step of the coupled system from `(u, r)` over `dt`.
///
/// The left and right face fluxes vanish in both the transport and the
/// diffusion substeps, which realizes the zero-total-flux boundary
/// `ζ(0,R) u(0) − ∂_x(D u)|₀ = 0` at the discrete level and keeps the
/// conservative core exact. The resource value is clamped to `[0, r̄]`.
pub fn pde_step<C: Coefficients + ?Sized>(
    u: &GridFunction,
    r: f64,
    c: &C,
    kernel: &FragmentationKernel,
    dt: f64,
) -> Result<(GridFunction, f64), PdeError> {
    let dx = u.dx();
    let courant = dt * c.bounds().zeta_sup / dx;
    if dt <= 0.0 || !courant.is_finite() || courant > CFL_GUARD {
        return Err(PdeError::CflViolation { courant });
    }
    let n = u.len();
    let vals = u.values();
    let mass_before = u.mass();

    // Explicit upwind transport: interior face fluxes only.
    let mut star = vals.to_vec();
    let mut flux_left = 0.0;
    for j in 0..n {
        let flux_right = if j + 1 < n {
            let zeta_face = c.zeta((j + 1) as f64 * dx, r);
            if zeta_face >= 0.0 {
                zeta_face * vals[j]
            } else {
                zeta_face * vals[j + 1]
            }
        } else {
            0.0
        };
        star[j] -= dt / dx * (flux_right - flux_left);
        flux_left = flux_right;
    }

    // Explicit reactions: division gain and loss through the adjoint
    // fragmentation operator of b·u, and linear death.
    let bu = GridFunction::new(
        u.x_max(),
        vals.iter()
            .enumerate()
            .map(|(j, &v)| c.birth((j as f64 + 0.5) * dx, r) * v)
            .collect(),
    );
    let frag = fragment_primal(&bu, kernel);
    for (j, s) in star.iter_mut().enumerate() {
        let x = (j as f64 + 0.5) * dx;
        *s += dt * (frag.values()[j] - c.death(x) * vals[j]);
    }

    // Implicit divergence-form diffusion: rows couple through D at the
    // neighbor cells, so column sums stay one and mass telescopes.
    let diff_at =
        |j: usize| -> f64 { c.diff((j as f64 + 0.5) * dx, r).max(0.0) * dt / (dx * dx) };
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for j in 0..n {
        let a = diff_at(j);
        let faces = if j == 0 || j == n - 1 { 1.0 } else { 2.0 };
        diag[j] = 1.0 + faces * a;
        if j > 0 {
            sub[j] = -diff_at(j - 1);
        }
        if j + 1 < n {
            sup[j] = -diff_at(j + 1);
        }
    }
    thomas(&sub, &diag, &sup, &mut star);

    // Positivity clip with accounting.
    let mut clipped = 0.0;
    for s in &mut star {
        if *s < 0.0 {
            clipped -= *s;
            *s = 0.0;
        }
    }
    let clipped_fraction = clipped * dx / mass_before.max(f64::MIN_POSITIVE);
    if clipped_fraction > NEGATIVITY_BUDGET {
        return Err(PdeError::NegativityOverflow { fraction: clipped_fraction });
    }
    let next = GridFunction::new(u.x_max(), star);

    // Heun substep for the resource with the grid pairing of the
    // consumption integral, old density at the first stage and new at the
    // second.
    let consumption = |grid: &GridFunction, res: f64| grid.pair_with(|x| c.chi(x, res));
    let k1 = c.r_in() - r - consumption(u, r);
    let r_predict = r + dt * k1;
    let k2 = c.r_in() - r_predict - consumption(&next, r_predict);
    let r_next = (r + 0.5 * dt * (k1 + k2)).clamp(0.0, c.bounds().r_bar);

    Ok((next, r_next))
}

/// Recorded solver output: one grid state per step plus diagnostics.
#[derive(Clone, Debug)]
pub struct PdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub resource: Vec<f64>,
    /// Total mass per recorded time.
    pub mass: Vec<f64>,
    /// First moment `⟨u, x⟩` per recorded time.
    pub moment1: Vec<f64>,
    /// Relative mass beyond the half-window per recorded time.
    pub tail: Vec<f64>,
}

impl PdeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the recorded time closest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (i, &s) in self.times.iter().enumerate() {
            let g = (s - t).abs();
            if g < gap {
                gap = g;
                best = i;
            }
        }
        best
    }

    /// The resource trajectory as an interpolable path.
    pub fn resource_path(&self) -> ResourcePath {
        ResourcePath::from_samples(self.times.clone(), self.resource.clone())
            .expect("recorded times are strictly increasing")
    }
}

/// Integrates the configured system on `[0, t_final]`, recording every step.
pub fn solve_pde(config: &RunConfig) -> Result<PdeTrajectory, PdeError> {
    config.validate()?;
    let set = config.coefficient_set().map_err(ConfigError::from)?;
    let kernel = config.build_kernel().map_err(ConfigError::from)?;
    let mut u = config.initial_grid()?;
    let mut r = config.r0;
    let t_final = config.t_final;
    let n_steps = ((t_final / config.numerics.dt_pde - 1e-9).ceil()).max(1.0) as usize;
    let dt = t_final / n_steps as f64;
    let half_window = config.numerics.x_max / 2.0;
    let tol = config.numerics.truncation_tol;

    let mut traj = PdeTrajectory {
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        resource: Vec::with_capacity(n_steps + 1),
        mass: Vec::with_capacity(n_steps + 1),
        moment1: Vec::with_capacity(n_steps + 1),
        tail: Vec::with_capacity(n_steps + 1),
    };
    let record = |traj: &mut PdeTrajectory, time: f64, u: &GridFunction, r: f64| {
        let mass = u.mass();
        let tail = if mass > 0.0 { u.mass_above(half_window) / mass } else { 0.0 };
        traj.times.push(time);
        traj.states.push(u.clone());
        traj.resource.push(r);
        traj.mass.push(mass);
        traj.moment1.push(u.pair_with(|x| x));
        traj.tail.push(tail);
        tail
    };
    record(&mut traj, 0.0, &u, r);
    for step in 1..=n_steps {
        let (next, r_next) = pde_step(&u, r, &set, &kernel, dt)?;
        u = next;
        r = r_next;
        let time = step as f64 * dt;
        let tail = record(&mut traj, time, &u, r);
        if tail > tol {
            return Err(PdeError::TruncationTolExceeded { time, tail, tol });
        }
    }
    Ok(traj)
}

/// A `C²` bump `scale · (1 − y²)³` on `[lo, hi]`, zero outside; `y` is the
/// affine map of `[lo, hi]` onto `[-1, 1]`. Value and both derivatives
/// vanish at the endpoints.
#[derive(Clone, Copy, Debug)]
pub struct SmoothBump {
    pub lo: f64,
    pub hi: f64,
    pub scale: f64,
}

impl SmoothBump {
    pub fn new(lo: f64, hi: f64) -> Self {
        SmoothBump { lo, hi, scale: 1.0 }
    }

    fn y(&self, x: f64) -> f64 {
        (2.0 * x - (self.lo + self.hi)) / (self.hi - self.lo)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = self.y(x);
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - y * y;
        self.scale * q * q * q
    }

    pub fn d1(&self, x: f64) -> f64 {
        let y = self.y(x);
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - y * y;
        self.scale * (-6.0 * y * q * q) * (2.0 / (self.hi - self.lo))
    }

    pub fn d2(&self, x: f64) -> f64 {
        let y = self.y(x);
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - y * y;
        let ddy = -6.0 * q * q + 24.0 * y * y * q;
        let slope = 2.0 / (self.hi - self.lo);
        self.scale * ddy * slope * slope
    }
}

/// Residual of the weak formulation
/// `⟨u_t, f⟩ = ⟨u_0, f⟩ + ∫₀ᵗ ⟨u_s, D f″ + ζ f′ + b G[f] − d f⟩ ds`
/// at every recorded time, the time integral taken by the trapezoid rule
/// over the recorded steps.
pub fn weak_form_residual<C: Coefficients + ?Sized>(
    traj: &PdeTrajectory,
    test: &SmoothBump,
    c: &C,
    kernel: &FragmentationKernel,
) -> Vec<f64> {
    let grid = &traj.states[0];
    let dx = grid.dx();
    let n = grid.len();
    let centers: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * dx).collect();
    let f_vals: Vec<f64> = centers.iter().map(|&x| test.eval(x)).collect();
    let f_d1: Vec<f64> = centers.iter().map(|&x| test.d1(x)).collect();
    let f_d2: Vec<f64> = centers.iter().map(|&x| test.d2(x)).collect();
    let g_f: Vec<f64> =
        centers.iter().map(|&x| fragment_dual(|v| test.eval(v), kernel, x)).collect();
    let death: Vec<f64> = centers.iter().map(|&x| c.death(x)).collect();

    let integrand = |state: &GridFunction, r: f64| -> f64 {
        dx * state
            .values()
            .iter()
            .enumerate()
            .map(|(j, &uj)| {
                let x = centers[j];
                uj * (c.diff(x, r) * f_d2[j] + c.zeta(x, r) * f_d1[j]
                    + c.birth(x, r) * g_f[j]
                    - death[j] * f_vals[j])
            })
            .sum::<f64>()
    };

    let pair0 = traj.states[0].pair_with(|x| test.eval(x));
    let mut residuals = Vec::with_capacity(traj.len());
    residuals.push(0.0);
    let mut integral = 0.0;
    let mut prev = integrand(&traj.states[0], traj.resource[0]);
    for i in 1..traj.len() {
        let cur = integrand(&traj.states[i], traj.resource[i]);
        integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
        prev = cur;
        let pair_t = traj.states[i].pair_with(|x| test.eval(x));
        residuals.push((pair_t - pair0 - integral).abs());
    }
    residuals
}

/// Mild-form residual at the table's end time, with its error budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MildResidual {
    /// `L¹` distance between the solver state and the assembled mild right
    /// side, both projected onto the table's histogram bins.
    pub residual: f64,
    /// Split-sample estimate of the Monte Carlo noise in the right side.
    pub mc_se: f64,
    /// Start-node interpolation bias, estimated by thinning the node grid.
    pub hist_bias: f64,
    /// Time-quadrature bound from adjacent-slab integrand differences.
    pub quad_bound: f64,
}

impl MildResidual {
    /// Tolerance the residual is judged against.
    pub fn budget(&self) -> f64 {
        3.0 * (self.mc_se + self.hist_bias + self.quad_bound)
    }

    pub fn passes(&self) -> bool {
        self.residual <= self.budget()
    }
}

/// Canonical start-time nodes for a mild-residual table: zero (which
/// carries the initial pairing) followed by the midpoints of `slabs` equal
/// slabs of `[0, t]`.
pub fn mild_s_nodes(t: f64, slabs: usize) -> Vec<f64> {
    let mut nodes = Vec::with_capacity(slabs + 1);
    nodes.push(0.0);
    let ds = t / slabs as f64;
    for k in 0..slabs {
        nodes.push((k as f64 + 0.5) * ds);
    }
    nodes
}

/// Projects a grid function onto `bins` equal cells of `[0, x_max]` by
/// overlap-weighted averaging.
fn project_onto_bins(u: &GridFunction, bins: usize, x_max: f64) -> Vec<f64> {
    let w = x_max / bins as f64;
    let dx = u.dx();
    let mut out = vec![0.0; bins];
    for (j, &v) in u.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let lo = j as f64 * dx;
        let hi = (j + 1) as f64 * dx;
        let i_start = ((lo / w) as usize).min(bins - 1);
        let i_end = ((hi / w) as usize).min(bins - 1);
        for (i, cell) in out.iter_mut().enumerate().take(i_end + 1).skip(i_start) {
            let seg = hi.min((i + 1) as f64 * w) - lo.max(i as f64 * w);
            if seg > 0.0 {
                *cell += v * seg / w;
            }
        }
    }
    out
}

fn l1(a: &[f64], b: &[f64], w: f64) -> f64 {
    w * a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Compares the solver state at the table's end time against the mild
/// representation assembled from transition-density estimates:
/// the initial pairing `⟨u_0, p_{0,t}(·, y)⟩` plus the time integral of
/// `⟨u_s, b G[p_{s,t}(·, y)] − d p_{s,t}(·, y)⟩`, midpoint rule over the
/// table's slab nodes. Both sides are projected onto the table's bins and
/// compared in `L¹`.
pub fn mild_residual<C: Coefficients + ?Sized>(
    traj: &PdeTrajectory,
    table: &TransitionTable,
    c: &C,
    kernel: &FragmentationKernel,
) -> Result<MildResidual, PdeError> {
    let t = table.t();
    let bins = table.bins();
    let x_max = table.x_max();
    let w = x_max / bins as f64;
    let centers: Vec<f64> = (0..bins).map(|i| (i as f64 + 0.5) * w).collect();
    let u_t = &traj.states[traj.index_at(t)];
    let lhs = project_onto_bins(u_t, bins, x_max);

    let slabs = table.s_nodes().len() - 1;
    let ds = if slabs > 0 { t / slabs as f64 } else { 0.0 };
    let u0 = &traj.states[0];
    let dx = u0.dx();

    // Assembles the initial-term vector and one integrand vector per slab
    // from any density evaluator with the table's node layout.
    let assemble = |density: &dyn Fn(usize, f64, f64) -> f64| -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut init = vec![0.0; bins];
        for (i, &y) in centers.iter().enumerate() {
            init[i] = dx
                * u0.values()
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| v * density(0, (j as f64 + 0.5) * dx, y))
                    .sum::<f64>();
        }
        let mut slab_rows = Vec::with_capacity(slabs);
        for k in 0..slabs {
            let s = table.s_nodes()[k + 1];
            let idx = traj.index_at(s);
            let u_s = &traj.states[idx];
            let r_s = traj.resource[idx];
            let mut row = vec![0.0; bins];
            for (i, &y) in centers.iter().enumerate() {
                row[i] = dx
                    * u_s
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| {
                            if v == 0.0 {
                                return 0.0;
                            }
                            let x = (j as f64 + 0.5) * dx;
                            let b = c.birth(x, r_s);
                            let frag = if b != 0.0 {
                                b * fragment_dual(|xp| density(k + 1, xp, y), kernel, x)
                            } else {
                                0.0
                            };
                            v * (frag - c.death(x) * density(k + 1, x, y))
                        })
                        .sum::<f64>();
            }
            slab_rows.push(row);
        }
        (init, slab_rows)
    };
    let total = |init: &[f64], rows: &[Vec<f64>]| -> Vec<f64> {
        let mut rhs = init.to_vec();
        for row in rows {
            for (r, &g) in rhs.iter_mut().zip(row.iter()) {
                *r += ds * g;
            }
        }
        rhs
    };

    let (init_full, rows_full) = assemble(&|k, x, y| table.density(k, x, y));
    let rhs_full = total(&init_full, &rows_full);
    let residual = l1(&lhs, &rhs_full, w);

    let (init_a, rows_a) = assemble(&|k, x, y| table.density_half(true, k, x, y));
    let (init_b, rows_b) = assemble(&|k, x, y| table.density_half(false, k, x, y));
    let mc_se = l1(&total(&init_a, &rows_a), &total(&init_b, &rows_b), w) / 2.0;

    // Thin the start-node grid to every other node (keeping the last) and
    // re-interpolate; the difference estimates the interpolation bias.
    let nodes = table.x_nodes();
    let mut subset: Vec<usize> = (0..nodes.len()).step_by(2).collect();
    if *subset.last().unwrap() != nodes.len() - 1 {
        subset.push(nodes.len() - 1);
    }
    let coarse_density = |k: usize, x: f64, y: f64| -> f64 {
        let lo = subset[0];
        let hi = subset[subset.len() - 1];
        if x <= nodes[lo] {
            return table.density(k, nodes[lo], y);
        }
        if x >= nodes[hi] {
            return table.density(k, nodes[hi], y);
        }
        let pos = subset.partition_point(|&idx| nodes[idx] <= x);
        let (i0, i1) = (subset[pos - 1], subset[pos]);
        let frac = (x - nodes[i0]) / (nodes[i1] - nodes[i0]);
        table.density(k, nodes[i0], y) * (1.0 - frac) + table.density(k, nodes[i1], y) * frac
    };
    let (init_c, rows_c) = assemble(&coarse_density);
    let hist_bias = l1(&rhs_full, &total(&init_c, &rows_c), w);

    let quad_bound = rows_full
        .windows(2)
        .map(|pair| 0.5 * ds * l1(&pair[0], &pair[1], w))
        .fold(0.0f64, f64::max);

    if mc_se > 0.5 * residual {
        return Err(PdeError::InsufficientPaths { se: mc_se, residual });
    }
    Ok(MildResidual { residual, mc_se, hist_bias, quad_bound })
}
