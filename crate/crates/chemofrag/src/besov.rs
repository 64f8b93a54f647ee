//! Finite-difference operators, `B^s_{1,inf}` norms, empirical smoothness
//! fitting, Gaussian derivative integrals, and the weighted density
//! criterion used by the smoothing diagnostics.
//!
//! Densities on the half-line are extended by zero to the whole line before
//! any difference is taken, so a nonzero boundary value shows up as a genuine
//! jump rather than being clipped away.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::GridFunction;
use crate::quad::adaptive_simpson_with_breaks;

/// Errors raised by the difference-operator and smoothness tools.
#[derive(Clone, Debug, PartialEq)]
pub enum BesovError {
    /// A scalar argument is outside its admissible range.
    ParamOutOfRange { name: &'static str, value: f64 },
    /// A requested shift is below what the grid spacing can resolve.
    HTooSmallForGrid { h: f64, min_h: f64 },
    /// A slope fit needs at least three shifts.
    TooFewShifts { count: usize },
    /// A difference norm vanished, so its logarithm is undefined.
    ZeroDifference { h: f64 },
}

impl fmt::Display for BesovError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BesovError::ParamOutOfRange { name, value } => {
                write!(f, "parameter {name} = {value} is outside its admissible range")
            }
            BesovError::HTooSmallForGrid { h, min_h } => {
                write!(f, "shift {h} is below the grid resolution floor {min_h}")
            }
            BesovError::TooFewShifts { count } => {
                write!(f, "slope fit needs at least 3 shifts, got {count}")
            }
            BesovError::ZeroDifference { h } => {
                write!(f, "difference norm at shift {h} is zero, log-log fit undefined")
            }
        }
    }
}

fn binomial(m: u32, j: u32) -> f64 {
    let mut c: u128 = 1;
    for i in 0..j.min(m - j) {
        c = c * (m - i) as u128 / (i + 1) as u128;
    }
    c as f64
}

/// m-fold forward difference with shift `h`, evaluated through the binomial
/// expansion `sum_j (-1)^(m-j) C(m,j) f(x + j h)`.
pub fn delta_m_h(f: &dyn Fn(f64) -> f64, m: u32, h: f64, x: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..=m {
        let sign = if (m - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc += sign * binomial(m, j) * f(x + j as f64 * h);
    }
    acc
}

/// m-fold forward difference evaluated by recursion on the order,
/// kept as an independent cross-check of [`delta_m_h`].
pub fn delta_m_h_recursive(f: &dyn Fn(f64) -> f64, m: u32, h: f64, x: f64) -> f64 {
    if m == 0 {
        return f(x);
    }
    if m == 1 {
        return f(x + h) - f(x);
    }
    delta_m_h_recursive(f, m - 1, h, x + h) - delta_m_h_recursive(f, m - 1, h, x)
}

/// L1 norm of `delta_m_h f` over `[lo, hi]` by a composite midpoint rule
/// with `n` panels.
pub fn delta_l1(f: &dyn Fn(f64) -> f64, m: u32, h: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n.max(1);
    let step = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * step;
        total += delta_m_h(f, m, h, x).abs();
    }
    total * step
}

/// L1 norm of `delta_m_h` applied to the zero-extended interpolant of a
/// grid profile.
///
/// The integration window covers the full support of the shifted
/// differences and the midpoint step is an eighth of the grid spacing.
pub fn grid_delta_l1(g: &GridFunction, m: u32, h: f64) -> f64 {
    let reach = -(m as f64) * h;
    let lo = reach.min(0.0);
    let hi = g.x_max() + reach.max(0.0);
    let n = ((hi - lo) / (g.dx() / 8.0)).ceil() as usize;
    delta_l1(&|y| g.eval_linear(y), m, h, lo, hi, n)
}

/// Default shift ladder: 16 geometric points from `0.5` down to
/// `max(2 dx, 1e-3)`.
pub fn default_h_grid(dx: f64) -> Result<Vec<f64>, BesovError> {
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(BesovError::ParamOutOfRange { name: "dx", value: dx });
    }
    let h_min = (2.0 * dx).max(1e-3);
    if h_min >= 0.5 {
        return Err(BesovError::ParamOutOfRange { name: "dx", value: dx });
    }
    let count = 16;
    let ratio = (h_min / 0.5).powf(1.0 / (count - 1) as f64);
    let mut grid = Vec::with_capacity(count);
    let mut h = 0.5;
    for _ in 0..count {
        grid.push(h);
        h *= ratio;
    }
    Ok(grid)
}

/// Measured `L1` decay of `delta_m_h f` across a shift ladder together
/// with its log-log regression line.
#[derive(Clone, Debug)]
pub struct DifferenceProfile {
    /// Difference order.
    pub m: u32,
    /// Strictly decreasing shifts in `(0, 1]`.
    pub h: Vec<f64>,
    /// `L1` norm of the m-fold difference at each shift.
    pub l1: Vec<f64>,
    /// Fitted slope of `log l1` against `log h`.
    pub slope: f64,
    /// Fitted intercept of the regression line.
    pub intercept: f64,
    /// Standard error of the fitted slope.
    pub slope_se: f64,
    /// Half-width of the 95% confidence interval for the slope.
    pub ci95: f64,
}

const T_975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

fn t_quantile_975(df: usize) -> f64 {
    if df == 0 {
        return f64::NAN;
    }
    if df <= T_975.len() {
        T_975[df - 1]
    } else {
        1.96
    }
}

fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let mut sse = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = y - (intercept + slope * x);
        sse += e * e;
    }
    let df = xs.len() - 2;
    let se = if df == 0 { 0.0 } else { (sse / df as f64 / sxx).sqrt() };
    (slope, intercept, se, t_quantile_975(df) * se)
}

/// Fits the `L1` decay rate of `delta_m_h f` on a shift ladder.
///
/// The slope of `log ||delta_m_h f||_1` against `log h` estimates the
/// profile's smoothness exponent up to order `m`.
pub fn smoothness_exponent(
    f: &GridFunction,
    m: u32,
    h_grid: &[f64],
) -> Result<DifferenceProfile, BesovError> {
    if m < 1 {
        return Err(BesovError::ParamOutOfRange { name: "m", value: m as f64 });
    }
    if h_grid.len() < 3 {
        return Err(BesovError::TooFewShifts { count: h_grid.len() });
    }
    let min_h = 2.0 * f.dx();
    let mut prev = f64::INFINITY;
    for &h in h_grid {
        if !(h > 0.0 && h <= 1.0 && h.is_finite()) {
            return Err(BesovError::ParamOutOfRange { name: "h", value: h });
        }
        if h >= prev {
            return Err(BesovError::ParamOutOfRange { name: "h_grid", value: h });
        }
        if h < min_h {
            return Err(BesovError::HTooSmallForGrid { h, min_h });
        }
        prev = h;
    }
    let mut l1 = Vec::with_capacity(h_grid.len());
    let mut log_h = Vec::with_capacity(h_grid.len());
    let mut log_l1 = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let v = grid_delta_l1(f, m, h);
        if v <= 0.0 {
            return Err(BesovError::ZeroDifference { h });
        }
        l1.push(v);
        log_h.push(h.ln());
        log_l1.push(v.ln());
    }
    let (slope, intercept, slope_se, ci95) = ols_line(&log_h, &log_l1);
    Ok(DifferenceProfile { m, h: h_grid.to_vec(), l1, slope, intercept, slope_se, ci95 })
}

/// `B^s_{1,inf}` norm of a grid profile: its `L1` norm plus the largest
/// `h^(-s) ||delta_m_h f||_1` over the default shift ladder.
pub fn besov_norm(f: &GridFunction, s: f64, m: u32) -> Result<f64, BesovError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(BesovError::ParamOutOfRange { name: "s", value: s });
    }
    if m < 1 || (m as f64) <= s {
        return Err(BesovError::ParamOutOfRange { name: "m", value: m as f64 });
    }
    let grid = default_h_grid(f.dx())?;
    let mut sup = 0.0f64;
    for &h in &grid {
        sup = sup.max(h.powf(-s) * grid_delta_l1(f, m, h));
    }
    Ok(f.l1_norm() + sup)
}

/// Predicted smoothing exponents for given diffusion regularity inputs.
///
/// `alpha` is the spatial Holder exponent of the square-rooted diffusion,
/// `beta` its Holder exponent in the resource variable, `k` the polynomial
/// growth power of that modulus, and `m` the difference order used in the
/// density criterion.
#[derive(Clone, Copy, Debug)]
pub struct BesovExponents {
    pub alpha: f64,
    pub beta: f64,
    pub m: u32,
    pub k: f64,
    /// Moment weight `alpha max (k-1)_+/2` entering the spatial growth bound.
    pub c_alpha_k: f64,
    /// Time-regularity exponent `beta min 1/2 min alpha(m-3alpha)/(2m)`.
    pub eta: f64,
    /// Besov smoothness index `(2m/(2m+3alpha)) eta`.
    pub s: f64,
}

/// Evaluates the predicted exponent triple for admissible inputs.
pub fn predicted_exponents(
    alpha: f64,
    beta: f64,
    m: u32,
    k: f64,
) -> Result<BesovExponents, BesovError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BesovError::ParamOutOfRange { name: "alpha", value: alpha });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(BesovError::ParamOutOfRange { name: "beta", value: beta });
    }
    if m < 1 || (m as f64) <= 3.0 * alpha {
        return Err(BesovError::ParamOutOfRange { name: "m", value: m as f64 });
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(BesovError::ParamOutOfRange { name: "k", value: k });
    }
    let mf = m as f64;
    let c_alpha_k = alpha.max((k - 1.0).max(0.0) / 2.0);
    let eta = beta.min(0.5).min(alpha * (mf - 3.0 * alpha) / (2.0 * mf));
    let s = 2.0 * mf / (2.0 * mf + 3.0 * alpha) * eta;
    Ok(BesovExponents { alpha, beta, m, k, c_alpha_k, eta, s })
}

/// Maximizer of the predicted index `s = alpha(1-3alpha)/(2+3alpha)` over
/// `alpha` for `k = 0`, `beta = 1`, `m = 1`.
///
/// Returns the optimal `alpha = (sqrt(6)-2)/3` and the attained maximum
/// `(5-2 sqrt(6))/3`.
pub fn lambda_max() -> (f64, f64) {
    let root6 = 6.0f64.sqrt();
    ((root6 - 2.0) / 3.0, (5.0 - 2.0 * root6) / 3.0)
}

/// Probabilists' Hermite polynomial `He_m(y)` by the three-term recurrence.
pub fn hermite_he(m: u32, y: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = y;
    for k in 1..m {
        let p2 = y * p1 - k as f64 * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

fn bisect_he(m: u32, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = hermite_he(m, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = hermite_he(m, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_lo < 0.0) == (f_mid < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All real roots of `He_m`, in increasing order, found by climbing the
/// interlacing ladder from `He_1` with bisection.
pub fn hermite_he_roots(m: u32) -> Vec<f64> {
    let mut roots = Vec::new();
    if m == 0 {
        return roots;
    }
    roots.push(0.0);
    for deg in 2..=m {
        let bound = (8.0 * deg as f64 + 4.0).sqrt();
        let mut brackets = Vec::with_capacity(roots.len() + 2);
        brackets.push(-bound);
        brackets.extend(roots.iter().copied());
        brackets.push(bound);
        let mut next = Vec::with_capacity(deg as usize);
        for w in brackets.windows(2) {
            next.push(bisect_he(deg, w[0], w[1]));
        }
        roots = next;
    }
    roots
}

fn sqrt_factorial(m: u32) -> f64 {
    let mut acc = 1.0f64;
    for i in 1..=m {
        acc *= i as f64;
    }
    acc.sqrt()
}

/// `L1` norm of the m-th derivative of the centered Gaussian density with
/// standard deviation `sigma`, integrated adaptively on `[-10 sigma,
/// 10 sigma]` with panel splits at the sign changes `sigma * roots(He_m)`.
///
/// The derivative is evaluated through its closed form
/// `(-1)^m He_m(x/sigma) g_sigma(x) / sigma^m`, so the result scales as
/// `sigma^(-m)`.
pub fn gaussian_derivative_l1(m: u32, sigma: f64) -> Result<f64, BesovError> {
    if m < 1 {
        return Err(BesovError::ParamOutOfRange { name: "m", value: m as f64 });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(BesovError::ParamOutOfRange { name: "sigma", value: sigma });
    }
    let half_width = 10.0 * sigma;
    let breaks: Vec<f64> = hermite_he_roots(m)
        .into_iter()
        .map(|r| r * sigma)
        .filter(|b| b.abs() < half_width)
        .collect();
    let norm = 1.0 / (sigma * (2.0 * core::f64::consts::PI).sqrt());
    let scale = sigma.powi(-(m as i32));
    let integrand = move |x: f64| {
        let y = x / sigma;
        hermite_he(m, y).abs() * (-0.5 * y * y).exp() * norm * scale
    };
    let tol = 1e-10 * sqrt_factorial(m) * scale;
    Ok(adaptive_simpson_with_breaks(&integrand, -half_width, half_width, &breaks, tol))
}

const WEIERSTRASS_TERMS: u32 = 20;

/// Test functions with certified Holder-Zygmund norm bounds.
///
/// `FracBump` is `max(0, 1 - |x - center|^exponent)`; `Weierstrass` is the
/// lacunar cosine sum `sum_n 2^(-n exponent) cos(2^n x)` truncated to 20
/// terms, rough down to shifts of order `2^-19`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HolderTestFn {
    Constant { value: f64 },
    FracBump { center: f64, exponent: f64 },
    Weierstrass { exponent: f64 },
}

impl HolderTestFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            HolderTestFn::Constant { value } => value,
            HolderTestFn::FracBump { center, exponent } => {
                (1.0 - (x - center).abs().powf(exponent)).max(0.0)
            }
            HolderTestFn::Weierstrass { exponent } => {
                let mut acc = 0.0;
                for n in 0..WEIERSTRASS_TERMS {
                    let freq = (2.0f64).powi(n as i32);
                    acc += freq.powf(-exponent) * (freq * x).cos();
                }
                acc
            }
        }
    }

    /// Certified upper bound on the Holder-Zygmund norm at exponent
    /// `alpha`, valid whenever `alpha` does not exceed the member's own
    /// roughness exponent.
    pub fn holder_norm_bound(&self, alpha: f64) -> Result<f64, BesovError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BesovError::ParamOutOfRange { name: "alpha", value: alpha });
        }
        match *self {
            HolderTestFn::Constant { value } => Ok(value.abs()),
            HolderTestFn::FracBump { exponent, .. } => {
                if !(exponent > 0.0 && exponent < 1.0 && alpha <= exponent) {
                    return Err(BesovError::ParamOutOfRange {
                        name: "exponent",
                        value: exponent,
                    });
                }
                // Range [0, 1] and |x^e - y^e| <= |x - y|^e give sup 1 and
                // seminorm at most 1 at every alpha <= exponent.
                Ok(2.0)
            }
            HolderTestFn::Weierstrass { exponent } => {
                if !(exponent > 0.0 && exponent < 1.0 && alpha <= exponent) {
                    return Err(BesovError::ParamOutOfRange {
                        name: "exponent",
                        value: exponent,
                    });
                }
                let sup = 1.0 / (1.0 - (2.0f64).powf(-exponent));
                let dyadic = (2.0f64).powf(1.0 - exponent);
                let seminorm = dyadic / (dyadic - 1.0) + 2.0 * sup;
                Ok(sup + seminorm.max(2.0 * sup))
            }
        }
    }
}

/// A small certified family at a common roughness exponent: one constant,
/// two fractional bumps, and the lacunar cosine sum.
pub fn holder_family(alpha: f64) -> Result<Vec<HolderTestFn>, BesovError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BesovError::ParamOutOfRange { name: "alpha", value: alpha });
    }
    Ok(vec![
        HolderTestFn::Constant { value: 0.75 },
        HolderTestFn::FracBump { center: 0.5, exponent: alpha },
        HolderTestFn::FracBump { center: 2.0, exponent: alpha },
        HolderTestFn::Weierstrass { exponent: alpha },
    ])
}

/// Normalized sample statistic for the weighted density criterion.
///
/// Returns the sample mean and standard error of
/// `weight(X_i) delta_m_h phi(X_i) / ||phi||_(C^alpha)`; a decay in `h`
/// faster than `h^alpha` across rough `phi` certifies a density for the
/// sampled law on the support of the weight.
pub fn density_criterion_statistic(
    samples: &[f64],
    weight: &dyn Fn(f64) -> f64,
    phi: &HolderTestFn,
    alpha: f64,
    m: u32,
    h: f64,
) -> Result<(f64, f64), BesovError> {
    if samples.is_empty() {
        return Err(BesovError::ParamOutOfRange { name: "samples", value: 0.0 });
    }
    if m < 1 {
        return Err(BesovError::ParamOutOfRange { name: "m", value: m as f64 });
    }
    if !(h != 0.0 && h.abs() <= 1.0 && h.is_finite()) {
        return Err(BesovError::ParamOutOfRange { name: "h", value: h });
    }
    let norm = phi.holder_norm_bound(alpha)?;
    let eval = |y: f64| phi.eval(y);
    let n = samples.len() as f64;
    let mut mean = 0.0;
    for &x in samples {
        mean += weight(x) * delta_m_h(&eval, m, h, x) / norm;
    }
    mean /= n;
    let mut var = 0.0;
    for &x in samples {
        let w = weight(x) * delta_m_h(&eval, m, h, x) / norm - mean;
        var += w * w;
    }
    let se = if samples.len() > 1 { (var / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 };
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    extern crate std;

    use super::*;
    use alloc::vec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::StreamKey;

    fn gaussian_density(mean: f64, sd: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| {
            let t = (x - mean) / sd;
            (-0.5 * t * t).exp() / (sd * (2.0 * core::f64::consts::PI).sqrt())
        }
    }

    #[test]
    fn first_difference_of_a_square_matches_the_expansion() {
        let f = |x: f64| x * x;
        let (x, h) = (1.5, 0.25);
        assert_eq!(delta_m_h(&f, 1, h, x), 2.0 * x * h + h * h);
        assert_eq!(delta_m_h_recursive(&f, 1, h, x), 2.0 * x * h + h * h);
    }

    #[test]
    fn differences_annihilate_low_degree_polynomials_exactly() {
        // Dyadic inputs keep every intermediate value exactly representable,
        // so the cancellation is bitwise.
        let coeffs = [1.0, 2.0, 0.25, -0.5];
        for m in 1..=4u32 {
            let deg = m - 1;
            let p = move |x: f64| {
                let mut acc = 0.0;
                for d in (0..=deg).rev() {
                    acc = acc * x + coeffs[d as usize];
                }
                acc
            };
            for &x in &[0.0, 0.5, 1.25, 3.0] {
                assert_eq!(delta_m_h(&p, m, 0.25, x), 0.0, "binomial m={m} x={x}");
                assert_eq!(delta_m_h_recursive(&p, m, 0.25, x), 0.0, "recursive m={m} x={x}");
            }
        }
    }

    #[test]
    fn binomial_and_recursive_routes_agree_on_a_smooth_function() {
        let f = |x: f64| (1.3 * x).sin() + 0.2 * x;
        for m in 1..=4u32 {
            for &h in &[0.03, 0.17, 0.83] {
                for &x in &[-2.1, 0.4, 1.9] {
                    let a = delta_m_h(&f, m, h, x);
                    let b = delta_m_h_recursive(&f, m, h, x);
                    assert_abs_diff_eq!(a, b, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn holder_sup_bound_holds_for_the_certified_family() {
        // Sup bound with constant 2^(m-1) on the m-fold difference of an
        // alpha-Holder function.
        let alpha = 0.3;
        for phi in holder_family(alpha).unwrap() {
            let norm = phi.holder_norm_bound(alpha).unwrap();
            let eval = |y: f64| phi.eval(y);
            for m in 1..=3u32 {
                let c_m = (2.0f64).powi(m as i32 - 1);
                for &h in &[0.5, 0.1, 0.02, 0.004] {
                    let mut worst = 0.0f64;
                    for i in 0..400 {
                        let x = -1.0 + i as f64 * 0.01;
                        worst = worst.max(delta_m_h(&eval, m, h, x).abs());
                    }
                    assert!(
                        worst <= c_m * h.powf(alpha) * norm * (1.0 + 1e-12),
                        "{phi:?} m={m} h={h}: {worst}"
                    );
                }
            }
        }
    }

    #[test]
    fn adjoint_identity_holds_on_a_shared_riemann_grid() {
        let f = gaussian_density(1.0, 1.0);
        let g = gaussian_density(-0.5, 0.7);
        let (m, h, a) = (2u32, 0.25, 0.5);
        let step = 1.0 / 1024.0;
        let n = (32.0 / step) as usize;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..n {
            let x = -16.0 + (i as f64 + 0.5) * step;
            lhs += delta_m_h(&f, m, h, x + a) * g(x);
            rhs += f(x + a) * delta_m_h(&g, m, -h, x);
        }
        lhs *= step;
        rhs *= step;
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8);
    }

    #[test]
    fn first_difference_l1_is_sharp_against_the_derivative_norm() {
        // ||delta_h f||_1 <= |h| ||f'||_1 with equality in the small-h limit.
        let sd = 0.8;
        let g = GridFunction::from_fn(2000, 10.0, gaussian_density(5.0, sd));
        let derivative_l1 = (2.0 / core::f64::consts::PI).sqrt() / sd;
        for &h in &[0.4, 0.1, 0.02] {
            let v = grid_delta_l1(&g, 1, h);
            assert!(v <= h * derivative_l1 * 1.001, "h={h}: {v}");
        }
        let v = grid_delta_l1(&g, 1, 0.01);
        assert_relative_eq!(v, 0.01 * derivative_l1, max_relative = 1e-2);
    }

    #[test]
    fn smooth_profile_fits_unit_slope() {
        let g = GridFunction::from_fn(2000, 10.0, gaussian_density(5.0, 0.8));
        let h_grid = default_h_grid(g.dx()).unwrap();
        let profile = smoothness_exponent(&g, 1, &h_grid).unwrap();
        assert!((profile.slope - 1.0).abs() <= 0.1, "slope {}", profile.slope);
        assert!(profile.ci95 < 0.05, "ci95 {}", profile.ci95);
        assert_eq!(profile.l1.len(), 16);
    }

    #[test]
    fn indicator_profile_has_unit_slope_and_prefactor_two() {
        let g = GridFunction::from_fn(800, 2.0, |x| if x < 1.0 { 1.0 } else { 0.0 });
        let h_grid = default_h_grid(g.dx()).unwrap();
        let profile = smoothness_exponent(&g, 1, &h_grid).unwrap();
        assert!((profile.slope - 1.0).abs() <= 0.02, "slope {}", profile.slope);
        assert!(
            (profile.intercept - (2.0f64).ln()).abs() <= 0.02,
            "intercept {}",
            profile.intercept
        );
    }

    #[test]
    fn white_noise_profile_has_flat_slope() {
        let mut rng = StreamKey::new(77).rng();
        let mut values = Vec::with_capacity(1000);
        for _ in 0..1000 {
            values.push(rng.sample::<f64, _>(StandardNormal));
        }
        let g = GridFunction::new(1.0, values);
        let h_grid = default_h_grid(g.dx()).unwrap();
        let profile = smoothness_exponent(&g, 1, &h_grid).unwrap();
        assert!(profile.slope.abs() < 0.15, "slope {}", profile.slope);
    }

    #[test]
    fn shifts_below_the_grid_resolution_are_rejected() {
        let g = GridFunction::from_fn(400, 2.0, |x| x);
        let err = smoothness_exponent(&g, 1, &[0.5, 0.25, 0.004]).unwrap_err();
        assert_eq!(err, BesovError::HTooSmallForGrid { h: 0.004, min_h: 2.0 * g.dx() });
        assert_eq!(
            smoothness_exponent(&g, 1, &[0.5, 0.25]).unwrap_err(),
            BesovError::TooFewShifts { count: 2 }
        );
    }

    #[test]
    fn besov_norm_of_zero_is_zero_and_gaussian_norm_is_bracketed() {
        let zero = GridFunction::zeros(64, 4.0);
        assert_eq!(besov_norm(&zero, 0.5, 1).unwrap(), 0.0);

        // L1 part 1 plus sup_h h^(1/2) ||f'||_1, maximized at h = 1/2.
        let g = GridFunction::from_fn(2000, 10.0, gaussian_density(5.0, 1.0));
        let norm = besov_norm(&g, 0.5, 1).unwrap();
        let envelope = 1.0 + (0.5f64).sqrt() * (2.0 / core::f64::consts::PI).sqrt();
        assert!(norm <= envelope * 1.001, "norm {norm}");
        assert!(norm >= 1.5, "norm {norm}");
    }

    #[test]
    fn besov_norm_rejects_bad_orders() {
        let g = GridFunction::zeros(64, 4.0);
        assert!(besov_norm(&g, 1.5, 1).is_err());
        assert!(besov_norm(&g, 0.0, 1).is_err());
    }

    #[test]
    fn default_grid_spans_the_expected_range() {
        let grid = default_h_grid(0.005).unwrap();
        assert_eq!(grid.len(), 16);
        assert_eq!(grid[0], 0.5);
        assert_relative_eq!(grid[15], 0.01, max_relative = 1e-12);
        for w in grid.windows(2) {
            assert!(w[1] < w[0]);
        }
        let fine = default_h_grid(1e-5).unwrap();
        assert_relative_eq!(fine[15], 1e-3, max_relative = 1e-12);
        assert!(default_h_grid(0.3).is_err());
    }

    #[test]
    fn predicted_exponents_match_the_reference_values() {
        let e = predicted_exponents(0.1, 1.0, 1, 0.0).unwrap();
        assert_eq!(e.c_alpha_k, 0.1);
        assert_relative_eq!(e.eta, 0.035, max_relative = 1e-14);
        assert_relative_eq!(e.s, 0.07 / 2.3, max_relative = 1e-14);

        // Growth power above 1 overtakes alpha in the moment weight.
        assert_eq!(predicted_exponents(0.1, 1.0, 1, 3.0).unwrap().c_alpha_k, 1.0);
        // A rough resource modulus binds eta.
        assert_eq!(predicted_exponents(0.5, 0.01, 2, 0.0).unwrap().eta, 0.01);

        assert!(predicted_exponents(0.5, 1.0, 1, 0.0).is_err());
        assert!(predicted_exponents(0.0, 1.0, 1, 0.0).is_err());
        assert!(predicted_exponents(0.1, 0.0, 1, 0.0).is_err());
        assert!(predicted_exponents(0.1, 1.0, 0, 0.0).is_err());
        assert!(predicted_exponents(0.1, 1.0, 1, -1.0).is_err());
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn lambda_max_matches_the_closed_form_and_a_scan() {
        let (alpha_star, s_star) = lambda_max();
        assert_relative_eq!(alpha_star, 0.14982991426105933, max_relative = 1e-15);
        assert_relative_eq!(s_star, 0.033673504811214746, max_relative = 1e-15);

        let s_of = |a: f64| a * (1.0 - 3.0 * a) / (2.0 + 3.0 * a);
        let mut lo = 1e-6;
        let mut hi = 1.0 / 3.0 - 1e-6;
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if s_of(m1) < s_of(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        // The maximum is quadratically flat, so the scan resolves the
        // argument only to about sqrt(eps) but the value much finer.
        let scanned = 0.5 * (lo + hi);
        assert_abs_diff_eq!(scanned, alpha_star, epsilon = 1e-7);
        assert_abs_diff_eq!(s_of(scanned), s_star, epsilon = 1e-12);
        // The formula route agrees with the scan inside the admissible range.
        assert_relative_eq!(
            predicted_exponents(alpha_star, 1.0, 1, 0.0).unwrap().s,
            s_star,
            max_relative = 1e-14
        );
    }

    #[test]
    fn hermite_roots_match_the_analytic_values() {
        assert_eq!(hermite_he_roots(1), vec![0.0]);
        let r2 = hermite_he_roots(2);
        assert_abs_diff_eq!(r2[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r2[1], 1.0, epsilon = 1e-12);
        let r3 = hermite_he_roots(3);
        let root3 = 3.0f64.sqrt();
        assert_abs_diff_eq!(r3[0], -root3, epsilon = 1e-12);
        assert_eq!(r3[1], 0.0);
        assert_abs_diff_eq!(r3[2], root3, epsilon = 1e-12);
        let r4 = hermite_he_roots(4);
        let inner = (3.0 - 6.0f64.sqrt()).sqrt();
        let outer = (3.0 + 6.0f64.sqrt()).sqrt();
        assert_abs_diff_eq!(r4[0], -outer, epsilon = 1e-12);
        assert_abs_diff_eq!(r4[1], -inner, epsilon = 1e-12);
        assert_abs_diff_eq!(r4[2], inner, epsilon = 1e-12);
        assert_abs_diff_eq!(r4[3], outer, epsilon = 1e-12);
        for m in 5..=8u32 {
            let roots = hermite_he_roots(m);
            assert_eq!(roots.len(), m as usize);
            for r in &roots {
                assert!(hermite_he(m, *r).abs() < 1e-8, "He_{m}({r})");
            }
        }
    }

    #[test]
    fn gaussian_derivative_l1_matches_closed_forms() {
        let sqrt_2pi = (2.0 * core::f64::consts::PI).sqrt();
        for &sigma in &[0.35, 1.0, 2.5] {
            let v1 = gaussian_derivative_l1(1, sigma).unwrap();
            assert_relative_eq!(v1, (2.0 / core::f64::consts::PI).sqrt() / sigma, max_relative = 1e-8);
        }
        let v2 = gaussian_derivative_l1(2, 1.0).unwrap();
        assert_relative_eq!(v2, 4.0 * (-0.5f64).exp() / sqrt_2pi, max_relative = 1e-8);
        let v3 = gaussian_derivative_l1(3, 1.0).unwrap();
        assert_relative_eq!(v3, (2.0 + 8.0 * (-1.5f64).exp()) / sqrt_2pi, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_derivative_l1_scales_as_sigma_to_minus_m() {
        for m in 1..=3u32 {
            let reference = gaussian_derivative_l1(m, 1.0).unwrap();
            for &sigma in &[0.1, 10.0] {
                let scaled = gaussian_derivative_l1(m, sigma).unwrap() * sigma.powi(m as i32);
                assert_relative_eq!(scaled, reference, max_relative = 1e-6);
            }
        }
        assert!(gaussian_derivative_l1(0, 1.0).is_err());
        assert!(gaussian_derivative_l1(1, 0.0).is_err());
    }

    #[test]
    fn criterion_statistic_vanishes_exactly_for_constants_and_zero_weights() {
        let samples = [0.2, 1.4, 2.9, 0.7];
        let constant = HolderTestFn::Constant { value: 0.75 };
        let (mean, se) =
            density_criterion_statistic(&samples, &|_| 1.0, &constant, 0.5, 3, 0.3).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(se, 0.0);

        let bump = HolderTestFn::FracBump { center: 1.0, exponent: 0.5 };
        let (mean, _) =
            density_criterion_statistic(&samples, &|_| 0.0, &bump, 0.5, 1, 0.3).unwrap();
        assert_eq!(mean, 0.0);
        assert!(density_criterion_statistic(&[], &|_| 1.0, &bump, 0.5, 1, 0.3).is_err());
        assert!(density_criterion_statistic(&samples, &|_| 1.0, &bump, 0.5, 1, 1.5).is_err());
    }

    #[test]
    fn criterion_slope_separates_an_atom_from_a_smooth_law() {
        let alpha = 0.5;
        let bump = HolderTestFn::FracBump { center: 0.8, exponent: alpha };
        let mut rng = StreamKey::new(9001).rng();
        let n = 4000;
        let mut with_atom = Vec::with_capacity(n);
        let mut smooth = Vec::with_capacity(n);
        for _ in 0..n {
            if rng.random::<f64>() < 0.25 {
                with_atom.push(0.8);
            } else {
                let z: f64 = rng.sample(StandardNormal);
                with_atom.push((3.5 + 0.3 * z).max(0.0));
            }
            // Centered above the bump peak so the shifted statistic keeps
            // one sign across the whole ladder.
            let z: f64 = rng.sample(StandardNormal);
            smooth.push((0.9 + 0.25 * z).max(0.0));
        }
        let ladder = [0.4, 0.2, 0.1, 0.05];
        let slope_of = |samples: &[f64]| {
            let mut log_h = Vec::new();
            let mut log_stat = Vec::new();
            for &h in &ladder {
                let (mean, _) =
                    density_criterion_statistic(samples, &|_| 1.0, &bump, alpha, 1, h).unwrap();
                log_h.push(h.ln());
                log_stat.push(mean.abs().ln());
            }
            ols_line(&log_h, &log_stat).0
        };
        let atom_slope = slope_of(&with_atom);
        let smooth_slope = slope_of(&smooth);
        assert!((0.4..=0.6).contains(&atom_slope), "atom slope {atom_slope}");
        assert!(smooth_slope > 0.8, "smooth slope {smooth_slope}");
    }

    proptest! {
        #[test]
        fn dual_routes_agree_on_random_inputs(
            m in 1u32..=4,
            x in -3.0f64..3.0,
            h in 0.01f64..1.0,
        ) {
            let f = |y: f64| (0.7 * y).cos() + 0.1 * y * y;
            let a = delta_m_h(&f, m, h, x);
            let b = delta_m_h_recursive(&f, m, h, x);
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn besov_norm_is_subadditive(
            seed in 0u64..1000,
            s in 0.1f64..0.9,
        ) {
            let mut rng = StreamKey::new(seed).rng();
            let n = 64;
            let mut u = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                u.push(rng.random::<f64>() * 2.0 - 1.0);
                v.push(rng.random::<f64>() * 2.0 - 1.0);
            }
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let fu = GridFunction::new(4.0, u);
            let fv = GridFunction::new(4.0, v);
            let fs = GridFunction::new(4.0, sum);
            let nu = besov_norm(&fu, s, 1).unwrap();
            let nv = besov_norm(&fv, s, 1).unwrap();
            let ns = besov_norm(&fs, s, 1).unwrap();
            prop_assert!(ns <= nu + nv + 1e-10);
        }

        #[test]
        fn predicted_exponents_keep_the_index_ordering(
            alpha in 0.01f64..0.33,
            beta in 0.01f64..1.0,
            m in 1u32..=4,
            k in 0.0f64..4.0,
        ) {
            prop_assume!((m as f64) > 3.0 * alpha);
            let e = predicted_exponents(alpha, beta, m, k).unwrap();
            prop_assert!(e.s > 0.0);
            prop_assert!(alpha < alpha + e.s);
            prop_assert!(alpha + e.s < m as f64);
        }
    }
}
