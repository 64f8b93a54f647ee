//! The fragmentation operator and its adjoint.
//!
//! On test functions the operator acts as
//! `G[f](x) = -f(x) + 2 ∫ f(alpha x) M(dalpha)`;
//! on densities its adjoint is
//! `G†[g](y) = -g(y) + ∫ (2 / alpha) g(y / alpha) M(dalpha)`.
//! Because the kernel is symmetric and each division produces two fragments,
//! `G[id] = 0` (fragment sizes sum to the parent) and `⟨G†[g], 1⟩ = ⟨g, 1⟩`
//! (each division adds one individual net, so applying `G†` preserves the
//! integral of `g` itself).

use crate::grid::GridFunction;
use crate::model::FragmentationKernel;

/// Applies `G` to a test function at one point.
pub fn fragment_dual<F: Fn(f64) -> f64>(f: F, kernel: &FragmentationKernel, x: f64) -> f64 {
    let gained: f64 = kernel.nodes().iter().map(|&(alpha, w)| w * f(alpha * x)).sum();
    2.0 * gained - f(x)
}

/// Applies `G†` to a cell-averaged density.
///
/// The gain term is assembled by mass scattering: source cell `j` holds mass
/// `g_j Δx`; under a fragment fraction `alpha` its image is the interval
/// `[alpha j Δx, alpha (j + 1) Δx]`, which receives twice the source mass
/// (two fragments per division) spread uniformly. Images always lie inside
/// the grid because `alpha < 1`, so no mass can leave the domain and the
/// integral identity `⟨G†[g], 1⟩ = ⟨g, 1⟩` holds to rounding. For piecewise
/// constant `g` the scatter computes the exact cell averages of the gain.
pub fn fragment_primal(g: &GridFunction, kernel: &FragmentationKernel) -> GridFunction {
    let n = g.len();
    let dx = g.dx();
    let mut out = g.clone();
    out.scale(-1.0);
    let values = g.values();
    let target = out.values_mut();
    for &(alpha, w) in kernel.nodes() {
        let inv_width = 1.0 / (alpha * dx);
        for (j, &gj) in values.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            let yl = alpha * (j as f64 * dx);
            let yr = alpha * ((j + 1) as f64 * dx);
            let i_start = (yl / dx) as usize;
            let i_end = ((yr / dx) as usize).min(n - 1);
            for (i, cell) in target.iter_mut().enumerate().take(i_end + 1).skip(i_start) {
                let lo = yl.max(i as f64 * dx);
                let hi = yr.min((i + 1) as f64 * dx);
                let seg = hi - lo;
                if seg > 0.0 {
                    *cell += 2.0 * w * gj * seg * inv_width;
                }
            }
        }
    }
    out
}
