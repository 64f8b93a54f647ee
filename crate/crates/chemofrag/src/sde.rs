//! Single-trait SDE toolkit: the decoupled trait equation under a frozen
//! resource path, coupled-path experiments, Feynman-Kac evaluation, the
//! comparison process, and transition-density estimation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::GridFunction;
use crate::model::Coefficients;
use crate::rng::StreamKey;

/// Thresholds at which the boundary-atom diagnostic reports mass.
pub const BELOW_EPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Failures of the path toolkit.
#[derive(Clone, Debug, PartialEq)]
pub enum SdeError {
    /// A scalar parameter is outside its admissible range.
    ParamOutOfRange { name: &'static str, value: f64 },
    /// Resource-path samples are not strictly increasing in time or not
    /// matched in length.
    PathGridInvalid,
    /// The coefficient family does not expose the analytic derivatives the
    /// weighted estimator needs.
    FamilyNotDifferentiable,
    /// Fewer than 10 histogram bins were requested.
    BinsTooFew { bins: usize },
}

impl fmt::Display for SdeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SdeError::ParamOutOfRange { name, value } => {
                write!(f, "parameter {name} = {value} is out of range")
            }
            SdeError::PathGridInvalid => {
                write!(f, "resource path grid must be strictly increasing with matching values")
            }
            SdeError::FamilyNotDifferentiable => {
                write!(f, "coefficient family lacks the analytic derivatives required here")
            }
            SdeError::BinsTooFew { bins } => {
                write!(f, "{bins} histogram bins requested, at least 10 required")
            }
        }
    }
}

/// A frozen resource trajectory, interpolated piecewise linearly and
/// extended by its end values.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourcePath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ResourcePath {
    /// A constant path on `[0, t_end]`.
    pub fn constant(value: f64, t_end: f64) -> Result<Self, SdeError> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(SdeError::ParamOutOfRange { name: "value", value });
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(SdeError::ParamOutOfRange { name: "t_end", value: t_end });
        }
        Ok(ResourcePath { times: vec![0.0, t_end], values: vec![value, value] })
    }

    /// Wraps sampled resource values on a strictly increasing time grid.
    pub fn from_samples(times: Vec<f64>, values: Vec<f64>) -> Result<Self, SdeError> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(SdeError::PathGridInvalid);
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(SdeError::PathGridInvalid);
        }
        if !times.iter().chain(values.iter()).all(|v| v.is_finite()) {
            return Err(SdeError::PathGridInvalid);
        }
        if values.iter().any(|v| *v < 0.0) {
            return Err(SdeError::PathGridInvalid);
        }
        Ok(ResourcePath { times, values })
    }

    /// Linear interpolation inside the grid, constant extension outside.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }

    /// Largest value on the grid.
    pub fn r_max(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Last grid time.
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

fn steps_for(s: f64, t: f64, dt: f64) -> Result<(usize, f64), SdeError> {
    if !(t > s && t.is_finite() && s.is_finite()) {
        return Err(SdeError::ParamOutOfRange { name: "t", value: t });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SdeError::ParamOutOfRange { name: "dt", value: dt });
    }
    let n = ((t - s) / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((n, (t - s) / n as f64))
}

fn check_start(x0: f64) -> Result<(), SdeError> {
    if x0 >= 0.0 && x0.is_finite() {
        Ok(())
    } else {
        Err(SdeError::ParamOutOfRange { name: "x0", value: x0 })
    }
}

fn check_paths(n_paths: usize) -> Result<(), SdeError> {
    if n_paths == 0 {
        Err(SdeError::ParamOutOfRange { name: "n_paths", value: 0.0 })
    } else {
        Ok(())
    }
}

/// One positivity-preserving Euler substep of the decoupled trait equation.
fn euler_step<C: Coefficients + ?Sized>(
    x: f64,
    time: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    noise: f64,
) -> f64 {
    let r = rpath.eval(time);
    let diff = c.diff(x, r).max(0.0);
    (x + c.zeta(x, r) * dt + (2.0 * diff).sqrt() * dt.sqrt() * noise).max(0.0)
}

/// Terminal value of one Euler path from `x0` at time `s` to time `t`.
pub fn integrate_trait<C: Coefficients + ?Sized, R: Rng + ?Sized>(
    x0: f64,
    s: f64,
    t: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    rng: &mut R,
) -> Result<f64, SdeError> {
    check_start(x0)?;
    let (n, dt) = steps_for(s, t, dt)?;
    let mut x = x0;
    for i in 0..n {
        let noise: f64 = rng.sample(StandardNormal);
        x = euler_step(x, s + i as f64 * dt, rpath, c, dt, noise);
    }
    Ok(x)
}

/// Full Euler path including the start point.
pub fn trait_path<C: Coefficients + ?Sized, R: Rng + ?Sized>(
    x0: f64,
    s: f64,
    t: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SdeError> {
    check_start(x0)?;
    let (n, dt) = steps_for(s, t, dt)?;
    let mut path = Vec::with_capacity(n + 1);
    path.push(x0);
    let mut x = x0;
    for i in 0..n {
        let noise: f64 = rng.sample(StandardNormal);
        x = euler_step(x, s + i as f64 * dt, rpath, c, dt, noise);
        path.push(x);
    }
    Ok(path)
}

/// Terminal values and running suprema of an independent path ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub x0: f64,
    pub s: f64,
    pub t: f64,
    pub dt: f64,
    pub terminal: Vec<f64>,
    pub running_sup: Vec<f64>,
}

impl PathEnsemble {
    /// Simulates `n_paths` independent paths of the decoupled trait
    /// equation, one derived stream per path.
    #[allow(clippy::too_many_arguments)]
    pub fn simulate<C: Coefficients + ?Sized>(
        x0: f64,
        s: f64,
        t: f64,
        rpath: &ResourcePath,
        c: &C,
        dt: f64,
        n_paths: usize,
        stream: StreamKey,
    ) -> Result<Self, SdeError> {
        check_start(x0)?;
        check_paths(n_paths)?;
        let (n, dt) = steps_for(s, t, dt)?;
        let mut terminal = Vec::with_capacity(n_paths);
        let mut running_sup = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let mut rng = stream.child(p as u64).rng();
            let mut x = x0;
            let mut sup = x0;
            for i in 0..n {
                let noise: f64 = rng.sample(StandardNormal);
                x = euler_step(x, s + i as f64 * dt, rpath, c, dt, noise);
                sup = sup.max(x);
            }
            terminal.push(x);
            running_sup.push(sup);
        }
        Ok(PathEnsemble { x0, s, t, dt, terminal, running_sup })
    }

    /// Ensemble of the comparison process `dZ = c̲ dt + √(2 c̲ Z) dW`,
    /// clamped at zero.
    pub fn simulate_comparison_z(
        c_lower: f64,
        t: f64,
        x0: f64,
        n_paths: usize,
        dt: f64,
        stream: StreamKey,
    ) -> Result<Self, SdeError> {
        if !(c_lower > 0.0 && c_lower.is_finite()) {
            return Err(SdeError::ParamOutOfRange { name: "c_lower", value: c_lower });
        }
        check_start(x0)?;
        check_paths(n_paths)?;
        let (n, dt) = steps_for(0.0, t, dt)?;
        let mut terminal = Vec::with_capacity(n_paths);
        let mut running_sup = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let mut rng = stream.child(p as u64).rng();
            let mut z = x0;
            let mut sup = x0;
            for _ in 0..n {
                let noise: f64 = rng.sample(StandardNormal);
                z = (z + c_lower * dt + (2.0 * c_lower * z.max(0.0)).sqrt() * dt.sqrt() * noise)
                    .max(0.0);
                sup = sup.max(z);
            }
            terminal.push(z);
            running_sup.push(sup);
        }
        Ok(PathEnsemble { x0, s: 0.0, t, dt, terminal, running_sup })
    }

    pub fn n_paths(&self) -> usize {
        self.terminal.len()
    }

    /// Sample mean of the terminal values.
    pub fn mean_terminal(&self) -> f64 {
        self.terminal.iter().sum::<f64>() / self.terminal.len() as f64
    }

    /// Standard error of the terminal mean.
    pub fn se_terminal(&self) -> f64 {
        let n = self.terminal.len() as f64;
        let mean = self.mean_terminal();
        let var =
            self.terminal.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    /// Fraction of terminal values at or below `eps`.
    pub fn below_fraction(&self, eps: f64) -> f64 {
        self.terminal.iter().filter(|&&x| x <= eps).count() as f64 / self.terminal.len() as f64
    }
}

/// Kolmogorov-Smirnov distance between the samples and a reference CDF.
pub fn ks_distance(samples: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max((f - (i + 1) as f64 / n).abs());
    }
    sup
}

/// Coupled-path summary for the semigroup Lipschitz experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledGap {
    /// Monte Carlo estimate of the mean absolute terminal gap.
    pub mean_abs_gap: f64,
    /// Fraction of paths on which the initial ordering was violated at
    /// some step.
    pub order_violation_fraction: f64,
    pub n_paths: usize,
}

/// Evolves two paths from `x` and `y` with shared Brownian increments and
/// reports the terminal gap and pathwise-order diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn coupled_gap<C: Coefficients + ?Sized>(
    x: f64,
    y: f64,
    s: f64,
    t: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    n_paths: usize,
    stream: StreamKey,
) -> Result<CoupledGap, SdeError> {
    check_start(x)?;
    check_start(y)?;
    check_paths(n_paths)?;
    let (n, dt) = steps_for(s, t, dt)?;
    let (hi0, lo0) = if x >= y { (x, y) } else { (y, x) };
    let mut gap_sum = 0.0;
    let mut violations = 0usize;
    for p in 0..n_paths {
        let mut rng = stream.child(p as u64).rng();
        let mut hi = hi0;
        let mut lo = lo0;
        let mut violated = false;
        for i in 0..n {
            let noise: f64 = rng.sample(StandardNormal);
            let time = s + i as f64 * dt;
            hi = euler_step(hi, time, rpath, c, dt, noise);
            lo = euler_step(lo, time, rpath, c, dt, noise);
            if hi < lo {
                violated = true;
            }
        }
        gap_sum += (hi - lo).abs();
        if violated {
            violations += 1;
        }
    }
    Ok(CoupledGap {
        mean_abs_gap: gap_sum / n_paths as f64,
        order_violation_fraction: violations as f64 / n_paths as f64,
        n_paths,
    })
}

/// Monte Carlo estimate of `E[φ(X_t)]` along the decoupled trait equation,
/// with its standard error.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac<C: Coefficients + ?Sized>(
    phi: &dyn Fn(f64) -> f64,
    x: f64,
    s: f64,
    t: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    n_paths: usize,
    stream: StreamKey,
) -> Result<(f64, f64), SdeError> {
    let ensemble = PathEnsemble::simulate(x, s, t, rpath, c, dt, n_paths, stream)?;
    Ok(mean_and_se(ensemble.terminal.iter().map(|&y| phi(y))))
}

/// Monte Carlo estimate of the weighted functional: `φ′` evaluated at the
/// terminal point of the auxiliary equation with drift `ζ + ∂ₓD`, weighted
/// by `exp(∫ ∂ₓζ du)` accumulated with left endpoints.
#[allow(clippy::too_many_arguments)]
pub fn weighted_feynman_kac<C: Coefficients + ?Sized>(
    phi_prime: &dyn Fn(f64) -> f64,
    x: f64,
    s: f64,
    t: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    n_paths: usize,
    stream: StreamKey,
) -> Result<(f64, f64), SdeError> {
    check_start(x)?;
    check_paths(n_paths)?;
    if c.d_zeta_dx(x, rpath.eval(s)).is_none() || c.d_diff_dx(x, rpath.eval(s)).is_none() {
        return Err(SdeError::FamilyNotDifferentiable);
    }
    let (n, dt) = steps_for(s, t, dt)?;
    let mut values = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut rng = stream.child(p as u64).rng();
        let mut y = x;
        let mut log_weight = 0.0;
        for i in 0..n {
            let time = s + i as f64 * dt;
            let r = rpath.eval(time);
            let dz = c.d_zeta_dx(y, r).ok_or(SdeError::FamilyNotDifferentiable)?;
            let dd = c.d_diff_dx(y, r).ok_or(SdeError::FamilyNotDifferentiable)?;
            log_weight += dz * dt;
            let diff = c.diff(y, r).max(0.0);
            let noise: f64 = rng.sample(StandardNormal);
            y = (y + (c.zeta(y, r) + dd) * dt + (2.0 * diff).sqrt() * dt.sqrt() * noise).max(0.0);
        }
        values.push(phi_prime(y) * log_weight.exp());
    }
    Ok(mean_and_se(values.into_iter()))
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let collected: Vec<f64> = values.collect();
    let n = collected.len() as f64;
    let mean = collected.iter().sum::<f64>() / n;
    if collected.len() < 2 {
        return (mean, 0.0);
    }
    let var = collected.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Normalized terminal-law histogram with boundary-atom diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionDensityEstimate {
    /// Density values over `[0, x_max]`; integrates to one exactly.
    pub histogram: GridFunction,
    pub n_paths: usize,
    /// `(ε, fraction of samples ≤ ε)` for the thresholds in [`BELOW_EPS`].
    pub below: Vec<(f64, f64)>,
}

impl TransitionDensityEstimate {
    fn from_samples(samples: &[f64], bins: usize, x_max: f64) -> Self {
        let n = samples.len();
        let width = x_max / bins as f64;
        let mut values = vec![0.0; bins];
        for &y in samples {
            let j = ((y / width) as usize).min(bins - 1);
            values[j] += 1.0 / (n as f64 * width);
        }
        let below = BELOW_EPS
            .iter()
            .map(|&eps| {
                (eps, samples.iter().filter(|&&y| y <= eps).count() as f64 / n as f64)
            })
            .collect();
        TransitionDensityEstimate {
            histogram: GridFunction::new(x_max, values),
            n_paths: n,
            below,
        }
    }
}

/// Histogram estimate of the transition density from `x` at time `s` to
/// time `t`. Terminal values beyond the working window land in the last
/// bin, so the histogram stays a probability density on `[0, x_max]`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_transition_density<C: Coefficients + ?Sized>(
    x: f64,
    s: f64,
    t: f64,
    rpath: &ResourcePath,
    c: &C,
    dt: f64,
    n_paths: usize,
    bins: usize,
    stream: StreamKey,
) -> Result<TransitionDensityEstimate, SdeError> {
    if bins < 10 {
        return Err(SdeError::BinsTooFew { bins });
    }
    let ensemble = PathEnsemble::simulate(x, s, t, rpath, c, dt, n_paths, stream)?;
    Ok(TransitionDensityEstimate::from_samples(
        &ensemble.terminal,
        bins,
        c.bounds().x_max,
    ))
}

/// Transition-density histograms on a coarse `(s, x′)` node grid, all
/// ending at the same time `t`, with linear interpolation across start
/// points.
#[derive(Clone, Debug)]
pub struct TransitionTable {
    s_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
    t: f64,
    /// `rows[i][j]` is the estimate from `(s_nodes[i], x_nodes[j])` to `t`;
    /// split into halves for the split-sample noise estimate.
    rows: Vec<Vec<TransitionDensityEstimate>>,
    rows_a: Vec<Vec<TransitionDensityEstimate>>,
    rows_b: Vec<Vec<TransitionDensityEstimate>>,
}

impl TransitionTable {
    /// Simulates every `(s, x′)` node with its own derived stream. Each
    /// node also keeps first-half and second-half histograms for the
    /// split-sample noise estimate.
    #[allow(clippy::too_many_arguments)]
    pub fn build<C: Coefficients + ?Sized>(
        s_nodes: Vec<f64>,
        x_nodes: Vec<f64>,
        t: f64,
        rpath: &ResourcePath,
        c: &C,
        dt: f64,
        n_paths: usize,
        bins: usize,
        stream: StreamKey,
    ) -> Result<Self, SdeError> {
        if bins < 10 {
            return Err(SdeError::BinsTooFew { bins });
        }
        if s_nodes.is_empty() || !s_nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(SdeError::ParamOutOfRange { name: "s_nodes", value: s_nodes.len() as f64 });
        }
        if x_nodes.len() < 2 || !x_nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(SdeError::ParamOutOfRange { name: "x_nodes", value: x_nodes.len() as f64 });
        }
        if s_nodes.last().copied().unwrap() >= t {
            return Err(SdeError::ParamOutOfRange { name: "t", value: t });
        }
        if n_paths < 4 {
            return Err(SdeError::ParamOutOfRange { name: "n_paths", value: n_paths as f64 });
        }
        let x_max = c.bounds().x_max;
        let mut rows = Vec::with_capacity(s_nodes.len());
        let mut rows_a = Vec::with_capacity(s_nodes.len());
        let mut rows_b = Vec::with_capacity(s_nodes.len());
        for (i, &s) in s_nodes.iter().enumerate() {
            let mut row = Vec::with_capacity(x_nodes.len());
            let mut row_a = Vec::with_capacity(x_nodes.len());
            let mut row_b = Vec::with_capacity(x_nodes.len());
            for (j, &x) in x_nodes.iter().enumerate() {
                let node_stream = stream.child(i as u64).child(j as u64);
                let ens = PathEnsemble::simulate(x, s, t, rpath, c, dt, n_paths, node_stream)?;
                let half = n_paths / 2;
                row_a.push(TransitionDensityEstimate::from_samples(
                    &ens.terminal[..half],
                    bins,
                    x_max,
                ));
                row_b.push(TransitionDensityEstimate::from_samples(
                    &ens.terminal[half..],
                    bins,
                    x_max,
                ));
                row.push(TransitionDensityEstimate::from_samples(&ens.terminal, bins, x_max));
            }
            rows.push(row);
            rows_a.push(row_a);
            rows_b.push(row_b);
        }
        Ok(TransitionTable { s_nodes, x_nodes, t, rows, rows_a, rows_b })
    }

    pub fn s_nodes(&self) -> &[f64] {
        &self.s_nodes
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Histogram bin count shared by every node estimate.
    pub fn bins(&self) -> usize {
        self.rows[0][0].histogram.len()
    }

    /// Working-window end shared by every node histogram.
    pub fn x_max(&self) -> f64 {
        self.rows[0][0].histogram.x_max()
    }

    /// Which sample half backs [`TransitionTable::density`].
    fn rows_for(&self, half: SampleHalf) -> &Vec<Vec<TransitionDensityEstimate>> {
        match half {
            SampleHalf::All => &self.rows,
            SampleHalf::First => &self.rows_a,
            SampleHalf::Second => &self.rows_b,
        }
    }

    /// Estimated density `p(s_i, x_start → t, y)`: piecewise-constant in
    /// `y` within histogram bins, linear in `x_start` across node columns
    /// (clamped at the ends).
    pub fn density(&self, s_idx: usize, x_start: f64, y: f64) -> f64 {
        self.density_from(SampleHalf::All, s_idx, x_start, y)
    }

    fn density_from(&self, half: SampleHalf, s_idx: usize, x_start: f64, y: f64) -> f64 {
        let rows = self.rows_for(half);
        let row = &rows[s_idx];
        let nodes = &self.x_nodes;
        let eval = |est: &TransitionDensityEstimate| -> f64 {
            let g = &est.histogram;
            if !(0.0..=g.x_max()).contains(&y) {
                return 0.0;
            }
            let j = ((y / g.dx()) as usize).min(g.len() - 1);
            g.values()[j]
        };
        if x_start <= nodes[0] {
            return eval(&row[0]);
        }
        if x_start >= nodes[nodes.len() - 1] {
            return eval(&row[nodes.len() - 1]);
        }
        let i = nodes.partition_point(|&v| v <= x_start);
        let (x0, x1) = (nodes[i - 1], nodes[i]);
        let w = (x_start - x0) / (x1 - x0);
        eval(&row[i - 1]) * (1.0 - w) + eval(&row[i]) * w
    }

    /// Like [`TransitionTable::density`] but restricted to one sample half.
    pub fn density_half(&self, first: bool, s_idx: usize, x_start: f64, y: f64) -> f64 {
        let half = if first { SampleHalf::First } else { SampleHalf::Second };
        self.density_from(half, s_idx, x_start, y)
    }
}

#[derive(Clone, Copy)]
enum SampleHalf {
    All,
    First,
    Second,
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use crate::model::{CoefficientFamily, CoefficientSet, DiffForm, Shape};
    use crate::run::RunConfig;
    use approx::assert_relative_eq;

    fn reference_set() -> CoefficientSet {
        RunConfig::reference().coefficient_set().unwrap()
    }

    fn drift_only_set(zeta0: f64) -> CoefficientSet {
        let fam = CoefficientFamily {
            zeta0,
            zeta1: 0.0,
            diff: DiffForm::ResourceLinear { delta0: 0.0, delta1: 0.0 },
            b0: 0.0,
            kappa_b: 0.0,
            birth_shape: Shape::One,
            d1: 0.0,
            death_shape: Shape::One,
            chi0: 0.0,
            kappa_chi: 0.0,
            chi_shape: Shape::One,
        };
        CoefficientSet::new(fam, 1.0, 20.0, 1.0).unwrap()
    }

    #[test]
    fn resource_path_interpolates_and_extends() {
        let p = ResourcePath::from_samples(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.7]).unwrap();
        assert_eq!(p.eval(-1.0), 1.0);
        assert_eq!(p.eval(0.0), 1.0);
        assert_relative_eq!(p.eval(0.5), 0.75);
        assert_relative_eq!(p.eval(1.5), 0.6);
        assert_eq!(p.eval(3.0), 0.7);
        assert_eq!(p.r_max(), 1.0);
        assert_eq!(p.t_end(), 2.0);

        assert_eq!(
            ResourcePath::from_samples(vec![0.0, 0.0], vec![1.0, 1.0]),
            Err(SdeError::PathGridInvalid)
        );
        assert_eq!(
            ResourcePath::from_samples(vec![0.0, 1.0], vec![1.0]),
            Err(SdeError::PathGridInvalid)
        );
        assert_eq!(
            ResourcePath::from_samples(vec![0.0, 1.0], vec![1.0, -0.1]),
            Err(SdeError::PathGridInvalid)
        );
        let c = ResourcePath::constant(0.8, 2.0).unwrap();
        assert_eq!(c.eval(1.3), 0.8);
    }

    #[test]
    fn pure_drift_path_is_exact() {
        let set = drift_only_set(0.3);
        let rpath = ResourcePath::constant(1.0, 2.0).unwrap();
        let mut rng = StreamKey::new(1).rng();
        let terminal = integrate_trait(1.0, 0.25, 1.25, &rpath, &set, 0.01, &mut rng).unwrap();
        assert_relative_eq!(terminal, 1.3, max_relative = 1e-13);
        let path = trait_path(1.0, 0.25, 1.25, &rpath, &set, 0.01, &mut rng).unwrap();
        assert_eq!(path.len(), 101);
        assert_relative_eq!(path[50], 1.15, max_relative = 1e-13);
    }

    #[test]
    fn moment_constant_fitted_once_covers_all_start_points() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        for p in [1.0, 2.0, 4.0] {
            let ratio_at = |x0: f64| {
                let ens = PathEnsemble::simulate(
                    x0,
                    0.0,
                    1.0,
                    &rpath,
                    &set,
                    0.005,
                    2000,
                    StreamKey::new(300 + p as u64),
                )
                .unwrap();
                let sup_p = ens.running_sup.iter().map(|&v| v.powf(p)).sum::<f64>()
                    / ens.n_paths() as f64;
                sup_p / (1.0 + x0.powf(p))
            };
            // Fit the constant at the unit start with factor-2 headroom; if
            // the envelope exponent were wrong the large start would escape
            // it.
            let c_p = 2.0 * ratio_at(1.0);
            for x0 in [0.0, 1.0, 10.0] {
                let r = ratio_at(x0);
                assert!(
                    r <= c_p,
                    "p = {p}, x0 = {x0}: ratio {r} escapes fitted constant {c_p}"
                );
            }
        }
    }

    #[test]
    fn terminal_law_has_no_boundary_atom() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let est = estimate_transition_density(
            0.5,
            0.0,
            1.0,
            &rpath,
            &set,
            0.002,
            4000,
            128,
            StreamKey::new(17),
        )
        .unwrap();
        assert_relative_eq!(est.histogram.mass(), 1.0, max_relative = 1e-12);
        let below: std::vec::Vec<f64> = est.below.iter().map(|&(_, f)| f).collect();
        assert!(below[0] < 0.02, "mass below 1e-2 is {}", below[0]);
        assert!(below[1] <= below[0]);
        assert!(below[2] <= below[1]);
        assert!(below[2] < 1e-3);
    }

    #[test]
    fn coupled_gap_vanishes_for_equal_starts_and_is_symmetric() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let same =
            coupled_gap(1.0, 1.0, 0.0, 1.0, &rpath, &set, 0.01, 200, StreamKey::new(2)).unwrap();
        assert_eq!(same.mean_abs_gap, 0.0);
        assert_eq!(same.order_violation_fraction, 0.0);
        let ab =
            coupled_gap(0.5, 1.5, 0.0, 1.0, &rpath, &set, 0.01, 200, StreamKey::new(2)).unwrap();
        let ba =
            coupled_gap(1.5, 0.5, 0.0, 1.0, &rpath, &set, 0.01, 200, StreamKey::new(2)).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn coupled_gap_scales_linearly_and_keeps_order() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let mut constants = std::vec::Vec::new();
        for gap in [0.01, 0.1, 1.0] {
            let out = coupled_gap(
                1.0,
                1.0 + gap,
                0.0,
                1.0,
                &rpath,
                &set,
                1e-3,
                2000,
                StreamKey::new(5),
            )
            .unwrap();
            constants.push(out.mean_abs_gap / gap);
        }
        let lo = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = constants.iter().cloned().fold(0.0f64, f64::max);
        assert!(
            hi / lo < 2.0,
            "Lipschitz constants {constants:?} spread beyond a factor 2"
        );

        // Pure drift keeps the order exactly.
        let drift = drift_only_set(0.3);
        let out =
            coupled_gap(0.5, 1.0, 0.0, 1.0, &rpath, &drift, 0.01, 100, StreamKey::new(6)).unwrap();
        assert_eq!(out.order_violation_fraction, 0.0);
        assert_relative_eq!(out.mean_abs_gap, 0.5, max_relative = 1e-12);

        // Small steps keep violations rare under the degenerate diffusion.
        let out =
            coupled_gap(1.0, 1.1, 0.0, 1.0, &rpath, &set, 1e-4, 500, StreamKey::new(7)).unwrap();
        assert!(
            out.order_violation_fraction < 5e-3,
            "violations {}",
            out.order_violation_fraction
        );
    }

    #[test]
    fn feynman_kac_constant_is_exact() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let (mean, se) =
            feynman_kac(&|_| 1.0, 1.0, 0.0, 1.0, &rpath, &set, 0.01, 50, StreamKey::new(3))
                .unwrap();
        assert_eq!(mean, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn feynman_kac_identity_recovers_the_drift() {
        // Constant drift 0.3 with a nontrivial diffusion: the martingale
        // part is mean-zero, so E[X_1] = x0 + 0.3.
        let fam = CoefficientFamily {
            zeta0: 0.3,
            zeta1: 0.0,
            diff: DiffForm::ResourceLinear { delta0: 0.05, delta1: 0.5 },
            b0: 0.0,
            kappa_b: 0.0,
            birth_shape: Shape::One,
            d1: 0.0,
            death_shape: Shape::One,
            chi0: 0.0,
            kappa_chi: 0.0,
            chi_shape: Shape::One,
        };
        let set = CoefficientSet::new(fam, 1.0, 20.0, 1.0).unwrap();
        let rpath = ResourcePath::constant(0.5, 1.0).unwrap();
        let (mean, se) =
            feynman_kac(&|y| y, 2.0, 0.0, 1.0, &rpath, &set, 0.005, 4000, StreamKey::new(9))
                .unwrap();
        assert!(se > 0.0);
        assert!(
            (mean - 2.3).abs() < 3.0 * se,
            "mean {mean} vs 2.3, 3 se = {}",
            3.0 * se
        );
    }

    #[test]
    fn weighted_estimator_handles_flat_and_bounded_derivatives() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let (zero, zero_se) = weighted_feynman_kac(
            &|_| 0.0,
            1.0,
            0.0,
            1.0,
            &rpath,
            &set,
            0.01,
            50,
            StreamKey::new(4),
        )
        .unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(zero_se, 0.0);

        // The affine drift has zero x-derivative, so the weight is one and
        // the auxiliary drift is zeta + d0(delta1 + r) = 0.24 + 0.26.
        let (mean, se) = weighted_feynman_kac(
            &|y| y,
            2.0,
            0.0,
            1.0,
            &rpath,
            &set,
            0.005,
            8000,
            StreamKey::new(14),
        )
        .unwrap();
        assert!(
            (mean - 2.5).abs() < 3.0 * se,
            "mean {mean} vs 2.5, 3 se = {}",
            3.0 * se
        );

        // A bounded derivative obeys the sup bound with unit weight.
        let (bounded, bse) = weighted_feynman_kac(
            &|y| (y * 0.7).cos(),
            1.0,
            0.0,
            1.0,
            &rpath,
            &set,
            0.01,
            500,
            StreamKey::new(13),
        )
        .unwrap();
        assert!(bounded.abs() <= 1.0 + 3.0 * bse);
    }

    #[test]
    fn comparison_process_matches_mean_and_exponential_law() {
        let ens = PathEnsemble::simulate_comparison_z(
            0.7,
            1.5,
            0.5,
            4000,
            1e-3,
            StreamKey::new(31),
        )
        .unwrap();
        let mean = ens.mean_terminal();
        let se = ens.se_terminal();
        let target = 0.5 + 0.7 * 1.5;
        assert!(
            (mean - target).abs() < 3.0 * se,
            "mean {mean} vs {target}, 3 se = {}",
            3.0 * se
        );

        // From zero the terminal law is exponential with mean c t.
        let ens = PathEnsemble::simulate_comparison_z(
            1.0,
            1.0,
            0.0,
            20_000,
            1e-3,
            StreamKey::new(32),
        )
        .unwrap();
        let ks = ks_distance(&ens.terminal, &|y: f64| 1.0 - (-y).exp());
        assert!(ks < 0.03, "KS distance {ks}");
        assert!(ens.below_fraction(1e-4) < 2e-3);
    }

    #[test]
    fn histogram_pairing_agrees_with_independent_feynman_kac() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let phi = |y: f64| (y * 0.5).cos() / (1.0 + 0.5);
        let est = estimate_transition_density(
            1.0,
            0.0,
            1.0,
            &rpath,
            &set,
            0.005,
            6000,
            256,
            StreamKey::new(41),
        )
        .unwrap();
        let paired = est.histogram.pair_with(phi);
        let (fk, fk_se) =
            feynman_kac(&phi, 1.0, 0.0, 1.0, &rpath, &set, 0.005, 6000, StreamKey::new(42))
                .unwrap();
        // Bin-center replacement moves each sample at most half a bin.
        let lip = 0.5 / 1.5;
        let bias = 0.5 * est.histogram.dx() * lip;
        let mc = 3.0 * (fk_se + 1.0 / (6000f64).sqrt() * 0.05);
        assert!(
            (paired - fk).abs() <= bias + mc,
            "paired {paired} vs feynman-kac {fk}, budget {}",
            bias + mc
        );
    }

    #[test]
    fn transition_table_interpolates_between_start_nodes() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let table = TransitionTable::build(
            vec![0.0, 0.5],
            vec![0.5, 1.5],
            1.0,
            &rpath,
            &set,
            0.01,
            400,
            32,
            StreamKey::new(55),
        )
        .unwrap();
        assert_eq!(table.s_nodes(), &[0.0, 0.5]);
        let y = 0.9;
        let left = table.density(0, 0.5, y);
        let right = table.density(0, 1.5, y);
        let mid = table.density(0, 1.0, y);
        assert_relative_eq!(mid, 0.5 * (left + right), max_relative = 1e-12);
        assert_eq!(table.density(0, 0.2, y), left);
        assert_eq!(table.density(0, 9.0, y), right);
        assert_eq!(table.density(1, 0.5, table.x_max() + 1.0), 0.0);

        // Interpolated densities keep unit mass: integrate over y bins.
        let width = table.x_max() / 32.0;
        let total: f64 = (0..32)
            .map(|j| table.density(0, 1.0, (j as f64 + 0.5) * width) * width)
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);

        // Halves average to the full estimate.
        let a = table.density_half(true, 0, 1.0, y);
        let b = table.density_half(false, 0, 1.0, y);
        assert_relative_eq!(0.5 * (a + b), mid, max_relative = 1e-12);
    }

    #[test]
    fn ensembles_are_reproducible_by_stream() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let a =
            PathEnsemble::simulate(1.0, 0.0, 1.0, &rpath, &set, 0.01, 50, StreamKey::new(77))
                .unwrap();
        let b =
            PathEnsemble::simulate(1.0, 0.0, 1.0, &rpath, &set, 0.01, 50, StreamKey::new(77))
                .unwrap();
        assert_eq!(a, b);
        let c =
            PathEnsemble::simulate(1.0, 0.0, 1.0, &rpath, &set, 0.01, 50, StreamKey::new(78))
                .unwrap();
        assert_ne!(a.terminal, c.terminal);
        assert!(a.terminal.iter().all(|x| *x >= 0.0));
        assert!(a
            .running_sup
            .iter()
            .zip(a.terminal.iter())
            .all(|(s, t)| s >= t || (s - t).abs() < 1e-15));
    }

    #[test]
    fn parameter_guards_reject_bad_inputs() {
        let set = reference_set();
        let rpath = ResourcePath::constant(0.8, 1.0).unwrap();
        let mut rng = StreamKey::new(1).rng();
        assert!(matches!(
            integrate_trait(-1.0, 0.0, 1.0, &rpath, &set, 0.01, &mut rng),
            Err(SdeError::ParamOutOfRange { name: "x0", .. })
        ));
        assert!(matches!(
            integrate_trait(1.0, 1.0, 1.0, &rpath, &set, 0.01, &mut rng),
            Err(SdeError::ParamOutOfRange { name: "t", .. })
        ));
        assert!(matches!(
            estimate_transition_density(
                1.0, 0.0, 1.0, &rpath, &set, 0.01, 100, 4, StreamKey::new(1)
            ),
            Err(SdeError::BinsTooFew { bins: 4 })
        ));
        assert!(matches!(
            PathEnsemble::simulate_comparison_z(0.0, 1.0, 0.0, 10, 0.01, StreamKey::new(1)),
            Err(SdeError::ParamOutOfRange { name: "c_lower", .. })
        ));
        assert!(matches!(
            TransitionTable::build(
                vec![0.5, 0.0],
                vec![0.5, 1.5],
                1.0,
                &rpath,
                &set,
                0.01,
                100,
                32,
                StreamKey::new(1)
            ),
            Err(SdeError::ParamOutOfRange { name: "s_nodes", .. })
        ));
    }
}
