//! Quadrature rules shared across the crate.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

/// Legendre polynomial `P_n` and its derivative at `x`, by the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are returned in increasing order. Computed by Newton iteration from
/// the Chebyshev initial guess; accurate to machine precision for the sizes
/// used here (`n ≤ 64`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule size must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_with_derivative(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        if i == n - 1 - i {
            // Center node of an odd rule is exactly zero by symmetry.
            nodes[i] = 0.0;
        } else {
            nodes[i] = -x.abs();
            nodes[n - 1 - i] = x.abs();
        }
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` with absolute tolerance
/// `tol`.
///
/// Recursion is capped at depth 40, which corresponds to subintervals around
/// `1e-12` of the original length; integrands here are smooth between
/// caller-supplied break points, so the cap is never reached in practice.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Adaptive Simpson integral split at interior break points.
///
/// `breaks` must lie inside `(a, b)` and be sorted; each closed panel between
/// consecutive break points is integrated separately so the integrand only
/// needs smoothness between breaks.
pub fn adaptive_simpson_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let mut total = 0.0;
    let mut lo = a;
    let panel_tol = tol / (breaks.len() + 1) as f64;
    for &br in breaks {
        debug_assert!(br > lo && br < b, "break points must be interior and sorted");
        total += adaptive_simpson(f, lo, br, panel_tol);
        lo = br;
    }
    total + adaptive_simpson(f, lo, b, panel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // An n-point rule is exact through degree 2n - 1.
        let (nodes, weights) = gauss_legendre(5);
        for degree in 0..=9u32 {
            let value: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| w * x.powi(degree as i32))
                .sum();
            let exact = if degree % 2 == 0 {
                2.0 / (degree as f64 + 1.0)
            } else {
                0.0
            };
            assert!(
                (value - exact).abs() < 1e-14,
                "degree {degree}: got {value}, want {exact}"
            );
        }
    }

    #[test]
    fn gauss_legendre_nodes_are_symmetric_and_sorted() {
        for n in [1usize, 2, 7, 32, 64] {
            let (nodes, weights) = gauss_legendre(n);
            for i in 0..n {
                assert_relative_eq!(nodes[i], -nodes[n - 1 - i], max_relative = 1e-14);
                assert_relative_eq!(weights[i], weights[n - 1 - i], max_relative = 1e-14);
                if i + 1 < n {
                    assert!(nodes[i] < nodes[i + 1]);
                }
            }
            let total: f64 = weights.iter().sum();
            assert_relative_eq!(total, 2.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn adaptive_simpson_matches_closed_forms() {
        let integral = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert_relative_eq!(integral, 1.0f64.exp() - 1.0, epsilon = 1e-10);

        let integral = adaptive_simpson(&|x: f64| (4.0 * x).sin(), 0.0, 2.0, 1e-12);
        assert_relative_eq!(integral, (1.0 - (8.0f64).cos()) / 4.0, epsilon = 1e-10);
    }

    #[test]
    fn breaks_handle_kinked_integrands() {
        // |x - 0.3| on [0, 1] has the kink supplied as a break point.
        let f = |x: f64| (x - 0.3).abs();
        let integral = adaptive_simpson_with_breaks(&f, 0.0, 1.0, &[0.3], 1e-12);
        let exact = 0.5 * (0.3f64.powi(2) + 0.7f64.powi(2));
        assert_relative_eq!(integral, exact, epsilon = 1e-11);
    }
}
