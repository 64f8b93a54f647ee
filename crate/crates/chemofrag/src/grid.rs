//! Cell-averaged functions on a uniform grid over `[0, x_max]`.

use alloc::vec;
use alloc::vec::Vec;

/// A function on `[0, x_max]` stored as cell averages over `n` uniform cells.
///
/// Cell `j` covers `[j Δx, (j + 1) Δx]` with `Δx = x_max / n`; `values[j]`
/// is the average of the function over that cell. Densities, solver states,
/// and histograms all use this representation.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    x_max: f64,
    values: Vec<f64>,
}

impl GridFunction {
    /// Wraps existing cell averages.
    ///
    /// # Panics
    ///
    /// Panics if `x_max` is not positive and finite or `values` is empty.
    pub fn new(x_max: f64, values: Vec<f64>) -> Self {
        assert!(x_max > 0.0 && x_max.is_finite(), "x_max must be positive");
        assert!(!values.is_empty(), "grid needs at least one cell");
        GridFunction { x_max, values }
    }

    /// The zero function on `n` cells.
    pub fn zeros(n: usize, x_max: f64) -> Self {
        Self::new(x_max, vec![0.0; n])
    }

    /// Samples `f` at cell centers.
    ///
    /// Center sampling is second-order accurate as a cell average for smooth
    /// `f`, which matches the accuracy of everything built on top.
    pub fn from_fn<F: Fn(f64) -> f64>(n: usize, x_max: f64, f: F) -> Self {
        let dx = x_max / n as f64;
        let values = (0..n).map(|j| f((j as f64 + 0.5) * dx)).collect();
        Self::new(x_max, values)
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the grid holds no cells; never the case for a constructed
    /// value, provided for the usual `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cell width.
    pub fn dx(&self) -> f64 {
        self.x_max / self.values.len() as f64
    }

    /// Right end of the domain.
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Center of cell `j`.
    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }

    /// Cell averages.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable cell averages.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Total integral `Δx Σ_j values[j]`.
    pub fn mass(&self) -> f64 {
        self.dx() * self.values.iter().sum::<f64>()
    }

    /// Integral of `|f|`.
    pub fn l1_norm(&self) -> f64 {
        self.dx() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Midpoint-rule pairing `Δx Σ_j f(x_j) values[j]` with `x_j` the cell
    /// centers.
    pub fn pair_with<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let dx = self.dx();
        dx * self
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| v * f((j as f64 + 0.5) * dx))
            .sum::<f64>()
    }

    /// Integral over `[x0, x_max]`, splitting the cell containing `x0`
    /// proportionally.
    pub fn mass_above(&self, x0: f64) -> f64 {
        if x0 <= 0.0 {
            return self.mass();
        }
        if x0 >= self.x_max {
            return 0.0;
        }
        let dx = self.dx();
        let j0 = ((x0 / dx) as usize).min(self.values.len() - 1);
        let partial = ((j0 + 1) as f64 * dx - x0).max(0.0) * self.values[j0];
        partial + dx * self.values[j0 + 1..].iter().sum::<f64>()
    }

    /// Multiplies all cell averages by `c`.
    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Piecewise-linear point evaluation, zero outside `[0, x_max]`.
    ///
    /// Values interpolate linearly between cell centers and extend as
    /// constants from the first and last centers to the domain ends, so the
    /// interpolant genuinely jumps at `0` and `x_max` when the boundary
    /// cells are nonzero.
    pub fn eval_linear(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.x_max {
            return 0.0;
        }
        let dx = self.dx();
        let n = self.values.len();
        let t = x / dx - 0.5;
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let j = t as usize;
        let frac = t - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mass_of_constant_grid_is_exact() {
        let g = GridFunction::from_fn(64, 2.0, |_| 3.0);
        assert_relative_eq!(g.mass(), 6.0, max_relative = 1e-14);
    }

    #[test]
    fn mass_above_splits_cells_proportionally() {
        let g = GridFunction::from_fn(10, 1.0, |_| 1.0);
        assert_relative_eq!(g.mass_above(0.25), 0.75, max_relative = 1e-13);
        assert_relative_eq!(g.mass_above(0.0), 1.0, max_relative = 1e-14);
        assert_eq!(g.mass_above(1.0), 0.0);
        // x0 inside a cell, nonuniform values.
        let g = GridFunction::new(1.0, alloc::vec![1.0, 2.0, 3.0, 4.0]);
        let expect = 0.15 * 2.0 + 0.25 * (3.0 + 4.0);
        assert_relative_eq!(g.mass_above(0.35), expect, max_relative = 1e-13);
    }

    #[test]
    fn eval_linear_matches_centers_and_vanishes_outside() {
        let g = GridFunction::from_fn(8, 4.0, |x| x * x);
        for j in 0..8 {
            let c = g.center(j);
            assert_relative_eq!(g.eval_linear(c), c * c, max_relative = 1e-13);
        }
        assert_eq!(g.eval_linear(-0.1), 0.0);
        assert_eq!(g.eval_linear(4.1), 0.0);
        // Constant extension on the outer half-cells.
        assert_relative_eq!(g.eval_linear(0.0), g.values()[0], max_relative = 1e-14);
        assert_relative_eq!(g.eval_linear(4.0), g.values()[7], max_relative = 1e-14);
    }

    #[test]
    fn eval_linear_is_linear_between_centers() {
        let g = GridFunction::new(2.0, alloc::vec![1.0, 3.0]);
        // Centers at 0.5 and 1.5; midpoint must average.
        assert_relative_eq!(g.eval_linear(1.0), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn pair_with_reproduces_moment_of_uniform_density() {
        // Density 1 on [0, 1]: ∫ x dx = 1/2 up to midpoint-rule exactness.
        let g = GridFunction::from_fn(100, 1.0, |_| 1.0);
        assert_relative_eq!(g.pair_with(|x| x), 0.5, max_relative = 1e-12);
    }
}
