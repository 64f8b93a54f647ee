//! Coefficient families for drift, diffusion, division, death, and
//! resource consumption.

use super::ModelError;

/// Monod uptake factor `r / (kappa + r)`.
///
/// The half-saturation `kappa = 0` is read as "saturated at every resource
/// level" and yields the constant `1`, which is how resource-independent
/// division and consumption rates are expressed within the family.
pub fn monod(r: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        1.0
    } else {
        r / (kappa + r)
    }
}

/// Trait-dependence profile shared by the birth, death, and consumption
/// rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// Constant `1`.
    One,
    /// Saturating ramp `x / (1 + x)`.
    Saturating,
}

impl Shape {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Shape::One => 1.0,
            Shape::Saturating => x / (1.0 + x),
        }
    }

    fn sup_on(self, x_max: f64) -> f64 {
        match self {
            Shape::One => 1.0,
            Shape::Saturating => x_max / (1.0 + x_max),
        }
    }

    fn min_on(self) -> f64 {
        match self {
            Shape::One => 1.0,
            Shape::Saturating => 0.0,
        }
    }

    fn d1_sup(self) -> f64 {
        match self {
            Shape::One => 0.0,
            Shape::Saturating => 1.0,
        }
    }

    fn d2_sup(self) -> f64 {
        match self {
            Shape::One => 0.0,
            Shape::Saturating => 2.0,
        }
    }
}

/// Functional form of the diffusion coefficient. Both forms vanish at
/// `x = 0`, so the boundary is degenerate by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiffForm {
    /// `delta0 · x · (delta1 + r)`.
    ResourceLinear { delta0: f64, delta1: f64 },
    /// `delta0 · x / (1 + x)`, independent of the resource.
    Saturating { delta0: f64 },
}

/// Parameters of one coefficient family member.
///
/// * drift `zeta(x, r) = zeta0 + zeta1 · r`
/// * diffusion `diff(x, r)` per [`DiffForm`]
/// * division `birth(x, r) = b0 · monod(r, kappa_b) · birth_shape(x)`
/// * death `death(x) = 1 + d1 · death_shape(x)`
/// * consumption `chi(x, r) = chi0 · monod(r, kappa_chi) · chi_shape(x)`
///
/// Negative `d1` lowers the death rate below the unit floor (down to zero
/// at `d1 = -1` with the constant shape); validation reports this as a
/// warning rather than an error so that death-free comparisons stay
/// expressible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientFamily {
    pub zeta0: f64,
    pub zeta1: f64,
    pub diff: DiffForm,
    pub b0: f64,
    pub kappa_b: f64,
    pub birth_shape: Shape,
    pub d1: f64,
    pub death_shape: Shape,
    pub chi0: f64,
    pub kappa_chi: f64,
    pub chi_shape: Shape,
}

/// Declared envelopes on the working window `[0, x_max] × [0, r_bar]`.
///
/// `*_sup` bounds the absolute value; `*_lip` bounds the joint Lipschitz
/// constant with respect to `|Δx| + |Δr|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientBounds {
    pub x_max: f64,
    pub r_bar: f64,
    pub zeta_sup: f64,
    pub zeta_lip: f64,
    pub diff_sup: f64,
    pub diff_lip: f64,
    pub birth_sup: f64,
    pub birth_lip: f64,
    pub death_sup: f64,
    pub death_lip: f64,
    pub chi_sup: f64,
    pub chi_lip: f64,
}

/// Declared bounds on first and second partial derivatives over the working
/// window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeBounds {
    pub zeta_dx: f64,
    pub zeta_dxx: f64,
    pub zeta_dr: f64,
    pub diff_dx: f64,
    pub diff_dxx: f64,
    pub diff_dr: f64,
    pub birth_dx: f64,
    pub birth_dxx: f64,
    pub birth_dr: f64,
    pub death_dx: f64,
    pub death_dxx: f64,
    pub chi_dx: f64,
    pub chi_dxx: f64,
    pub chi_dr: f64,
}

/// Declared Hölder modulus of the diffusion coefficient in the resource
/// argument: `|diff(x, r) - diff(x, r')| ≤ c · (1 + x^k) · |r - r'|^beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderInR {
    pub c: f64,
    pub k: f64,
    pub beta: f64,
}

/// Interface the simulators, solvers, and validator work against.
///
/// Implementations must give pointwise evaluations together with declared
/// envelopes on the working window; [`validate_coefficients`] cross-checks
/// the two. The derivative accessors are optional: when absent, routines
/// that need them (the weighted Feynman-Kac estimator) refuse to run.
///
/// [`validate_coefficients`]: super::validate_coefficients
pub trait Coefficients {
    /// Drift of the trait SDE.
    fn zeta(&self, x: f64, r: f64) -> f64;
    /// Diffusion coefficient (the SDE noise is `√(2 diff)`).
    fn diff(&self, x: f64, r: f64) -> f64;
    /// Division rate.
    fn birth(&self, x: f64, r: f64) -> f64;
    /// Death rate.
    fn death(&self, x: f64) -> f64;
    /// Per-individual resource consumption rate.
    fn chi(&self, x: f64, r: f64) -> f64;
    /// Resource inflow level.
    fn r_in(&self) -> f64;
    /// Declared envelopes on the working window.
    fn bounds(&self) -> &CoefficientBounds;
    /// Whether the diffusion coefficient vanishes at `x = 0`.
    fn degenerate_at_zero(&self) -> bool;

    /// `∂ zeta / ∂x`, when the implementation can provide it.
    fn d_zeta_dx(&self, x: f64, r: f64) -> Option<f64> {
        let _ = (x, r);
        None
    }

    /// `∂ diff / ∂x`, when the implementation can provide it.
    fn d_diff_dx(&self, x: f64, r: f64) -> Option<f64> {
        let _ = (x, r);
        None
    }

    /// Declared derivative envelopes, when available.
    fn derivative_bounds(&self) -> Option<DerivativeBounds> {
        None
    }

    /// Declared Hölder modulus of `diff` in `r`, when available.
    fn holder_in_r(&self) -> Option<HolderInR> {
        None
    }
}

/// A coefficient family member with its declared envelopes, pinned to a
/// working window `[0, x_max] × [0, r_bar]`.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    family: CoefficientFamily,
    r_in: f64,
    bounds: CoefficientBounds,
    derivative_bounds: DerivativeBounds,
    holder_in_r: HolderInR,
}

impl CoefficientSet {
    /// Builds the set and computes its envelopes analytically.
    ///
    /// Shape and scale parameters that must be nonnegative (`delta0`,
    /// `delta1`, `b0`, `chi0`, the half-saturations) are rejected when
    /// negative or not finite; sign conditions that the standing assumptions
    /// impose on the assembled coefficients (positive drift at the boundary,
    /// nonnegative rates) are the validator's business, not the
    /// constructor's.
    pub fn new(
        family: CoefficientFamily,
        r_in: f64,
        x_max: f64,
        r_bar: f64,
    ) -> Result<Self, ModelError> {
        let check = |name: &'static str, value: f64, nonneg: bool| -> Result<(), ModelError> {
            if !value.is_finite() || (nonneg && value < 0.0) {
                Err(ModelError::ParamOutOfRange { name, value })
            } else {
                Ok(())
            }
        };
        check("zeta0", family.zeta0, false)?;
        check("zeta1", family.zeta1, false)?;
        match family.diff {
            DiffForm::ResourceLinear { delta0, delta1 } => {
                check("delta0", delta0, true)?;
                check("delta1", delta1, true)?;
            }
            DiffForm::Saturating { delta0 } => check("delta0", delta0, true)?,
        }
        check("b0", family.b0, true)?;
        check("kappa_b", family.kappa_b, true)?;
        check("d1", family.d1, false)?;
        check("chi0", family.chi0, true)?;
        check("kappa_chi", family.kappa_chi, true)?;
        if !(r_in > 0.0 && r_in.is_finite()) {
            return Err(ModelError::ParamOutOfRange { name: "r_in", value: r_in });
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(ModelError::ParamOutOfRange { name: "x_max", value: x_max });
        }
        if !(r_bar >= r_in && r_bar.is_finite()) {
            return Err(ModelError::ParamOutOfRange { name: "r_bar", value: r_bar });
        }

        let monod_sup = |kappa: f64| monod(r_bar, kappa);
        let monod_dr_sup = |kappa: f64| if kappa == 0.0 { 0.0 } else { 1.0 / kappa };

        let zeta_sup = family.zeta0.abs().max((family.zeta0 + family.zeta1 * r_bar).abs());
        let zeta_lip = family.zeta1.abs();

        let (diff_sup, diff_dx, diff_dxx, diff_dr, holder) = match family.diff {
            DiffForm::ResourceLinear { delta0, delta1 } => (
                delta0 * x_max * (delta1 + r_bar),
                delta0 * (delta1 + r_bar),
                0.0,
                delta0 * x_max,
                HolderInR { c: delta0, k: 1.0, beta: 1.0 },
            ),
            DiffForm::Saturating { delta0 } => (
                delta0 * Shape::Saturating.eval(x_max),
                delta0,
                2.0 * delta0,
                0.0,
                HolderInR { c: 0.0, k: 0.0, beta: 1.0 },
            ),
        };

        let birth_sup = family.b0 * monod_sup(family.kappa_b) * family.birth_shape.sup_on(x_max);
        let birth_dx = family.b0 * monod_sup(family.kappa_b) * family.birth_shape.d1_sup();
        let birth_dxx = family.b0 * monod_sup(family.kappa_b) * family.birth_shape.d2_sup();
        let birth_dr =
            family.b0 * monod_dr_sup(family.kappa_b) * family.birth_shape.sup_on(x_max);

        let death_sup = (1.0 + family.d1 * family.death_shape.min_on())
            .abs()
            .max((1.0 + family.d1 * family.death_shape.sup_on(x_max)).abs());
        let death_dx = family.d1.abs() * family.death_shape.d1_sup();
        let death_dxx = family.d1.abs() * family.death_shape.d2_sup();

        let chi_sup = family.chi0 * monod_sup(family.kappa_chi) * family.chi_shape.sup_on(x_max);
        let chi_dx = family.chi0 * monod_sup(family.kappa_chi) * family.chi_shape.d1_sup();
        let chi_dxx = family.chi0 * monod_sup(family.kappa_chi) * family.chi_shape.d2_sup();
        let chi_dr =
            family.chi0 * monod_dr_sup(family.kappa_chi) * family.chi_shape.sup_on(x_max);

        let derivative_bounds = DerivativeBounds {
            zeta_dx: 0.0,
            zeta_dxx: 0.0,
            zeta_dr: zeta_lip,
            diff_dx,
            diff_dxx,
            diff_dr,
            birth_dx,
            birth_dxx,
            birth_dr,
            death_dx,
            death_dxx,
            chi_dx,
            chi_dxx,
            chi_dr,
        };
        let bounds = CoefficientBounds {
            x_max,
            r_bar,
            zeta_sup,
            zeta_lip,
            diff_sup,
            diff_lip: diff_dx.max(diff_dr),
            birth_sup,
            birth_lip: birth_dx.max(birth_dr),
            death_sup,
            death_lip: death_dx,
            chi_sup,
            chi_lip: chi_dx.max(chi_dr),
        };
        Ok(CoefficientSet { family, r_in, bounds, derivative_bounds, holder_in_r: holder })
    }

    /// The family parameters this set was built from.
    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    /// Largest constant `c` with `zeta ≥ c` and `diff ≥ c · x` on the
    /// working window; positive exactly when the comparison lower bound
    /// applies.
    pub fn comparison_floor(&self) -> f64 {
        let b = &self.bounds;
        let zeta_min = self.zeta(0.0, 0.0).min(self.zeta(0.0, b.r_bar));
        let diff_over_x_min = match self.family.diff {
            DiffForm::ResourceLinear { delta0, delta1 } => delta0 * delta1,
            DiffForm::Saturating { delta0 } => delta0 / (1.0 + b.x_max),
        };
        zeta_min.min(diff_over_x_min)
    }
}

impl Coefficients for CoefficientSet {
    fn zeta(&self, _x: f64, r: f64) -> f64 {
        self.family.zeta0 + self.family.zeta1 * r
    }

    fn diff(&self, x: f64, r: f64) -> f64 {
        match self.family.diff {
            DiffForm::ResourceLinear { delta0, delta1 } => delta0 * x * (delta1 + r),
            DiffForm::Saturating { delta0 } => delta0 * x / (1.0 + x),
        }
    }

    fn birth(&self, x: f64, r: f64) -> f64 {
        self.family.b0 * monod(r, self.family.kappa_b) * self.family.birth_shape.eval(x)
    }

    fn death(&self, x: f64) -> f64 {
        1.0 + self.family.d1 * self.family.death_shape.eval(x)
    }

    fn chi(&self, x: f64, r: f64) -> f64 {
        self.family.chi0 * monod(r, self.family.kappa_chi) * self.family.chi_shape.eval(x)
    }

    fn r_in(&self) -> f64 {
        self.r_in
    }

    fn bounds(&self) -> &CoefficientBounds {
        &self.bounds
    }

    fn degenerate_at_zero(&self) -> bool {
        true
    }

    fn d_zeta_dx(&self, _x: f64, _r: f64) -> Option<f64> {
        Some(0.0)
    }

    fn d_diff_dx(&self, x: f64, r: f64) -> Option<f64> {
        Some(match self.family.diff {
            DiffForm::ResourceLinear { delta0, delta1 } => delta0 * (delta1 + r),
            DiffForm::Saturating { delta0 } => {
                let s = 1.0 + x;
                delta0 / (s * s)
            }
        })
    }

    fn derivative_bounds(&self) -> Option<DerivativeBounds> {
        Some(self.derivative_bounds)
    }

    fn holder_in_r(&self) -> Option<HolderInR> {
        Some(self.holder_in_r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_family() -> CoefficientFamily {
        CoefficientFamily {
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
        }
    }

    #[test]
    fn evaluations_match_formulas() {
        let set = CoefficientSet::new(reference_family(), 1.0, 20.0, 1.0).unwrap();
        assert_relative_eq!(set.zeta(3.0, 0.8), 0.2 + 0.05 * 0.8);
        assert_relative_eq!(set.diff(3.0, 0.8), 0.2 * 3.0 * 1.3);
        assert_relative_eq!(set.birth(3.0, 1.0), 0.5);
        assert_relative_eq!(set.death(3.0), 1.0);
        assert_relative_eq!(set.chi(3.0, 1.0), 0.2);
    }

    #[test]
    fn kappa_zero_means_resource_independent() {
        let mut fam = reference_family();
        fam.kappa_b = 0.0;
        fam.b0 = 0.5;
        let set = CoefficientSet::new(fam, 1.0, 20.0, 2.0).unwrap();
        assert_eq!(set.birth(1.0, 0.0), 0.5);
        assert_eq!(set.birth(1.0, 2.0), 0.5);
    }

    #[test]
    fn chi_vanishes_without_resource() {
        let set = CoefficientSet::new(reference_family(), 1.0, 20.0, 1.0).unwrap();
        assert_eq!(set.chi(5.0, 0.0), 0.0);
    }

    #[test]
    fn negative_d1_reaches_zero_death() {
        let mut fam = reference_family();
        fam.d1 = -1.0;
        let set = CoefficientSet::new(fam, 1.0, 20.0, 1.0).unwrap();
        assert_eq!(set.death(7.0), 0.0);
        assert_eq!(set.bounds().death_sup, 0.0);
    }

    #[test]
    fn sup_bounds_dominate_dense_sampling() {
        let mut fam = reference_family();
        fam.birth_shape = Shape::Saturating;
        fam.diff = DiffForm::Saturating { delta0: 0.3 };
        fam.d1 = 0.5;
        fam.death_shape = Shape::Saturating;
        let set = CoefficientSet::new(fam, 1.0, 10.0, 2.0).unwrap();
        let b = *set.bounds();
        for i in 0..=100 {
            let x = 10.0 * i as f64 / 100.0;
            for j in 0..=100 {
                let r = 2.0 * j as f64 / 100.0;
                assert!(set.zeta(x, r).abs() <= b.zeta_sup + 1e-12);
                assert!(set.diff(x, r) <= b.diff_sup + 1e-12);
                assert!(set.birth(x, r) <= b.birth_sup + 1e-12);
                assert!(set.death(x) <= b.death_sup + 1e-12);
                assert!(set.chi(x, r) <= b.chi_sup + 1e-12);
            }
        }
    }

    #[test]
    fn comparison_floor_of_all_pass_example() {
        // zeta = 1 + r, diff = x(1 + r), b = 1, d = 1, chi = r/(1 + r)
        // on [0, 10] x [0, 2] has floor exactly 1.
        let fam = CoefficientFamily {
            zeta0: 1.0,
            zeta1: 1.0,
            diff: DiffForm::ResourceLinear { delta0: 1.0, delta1: 1.0 },
            b0: 1.0,
            kappa_b: 0.0,
            birth_shape: Shape::One,
            d1: 0.0,
            death_shape: Shape::One,
            chi0: 1.0,
            kappa_chi: 1.0,
            chi_shape: Shape::One,
        };
        let set = CoefficientSet::new(fam, 1.0, 10.0, 2.0).unwrap();
        assert_eq!(set.comparison_floor(), 1.0);
    }

    #[test]
    fn constructor_rejects_bad_scales() {
        let mut fam = reference_family();
        fam.b0 = -1.0;
        assert!(matches!(
            CoefficientSet::new(fam, 1.0, 20.0, 1.0),
            Err(ModelError::ParamOutOfRange { name: "b0", .. })
        ));
        let fam = reference_family();
        assert!(CoefficientSet::new(fam, 0.0, 20.0, 1.0).is_err());
        let fam = reference_family();
        assert!(CoefficientSet::new(fam, 1.0, 20.0, 0.5).is_err());
    }

    #[test]
    fn derivative_accessors_match_difference_quotients() {
        let set = CoefficientSet::new(
            CoefficientFamily {
                diff: DiffForm::Saturating { delta0: 0.7 },
                ..reference_family()
            },
            1.0,
            10.0,
            1.0,
        )
        .unwrap();
        let h = 1e-6;
        for x in [0.5, 2.0, 7.5] {
            let fd = (set.diff(x + h, 0.4) - set.diff(x - h, 0.4)) / (2.0 * h);
            assert_relative_eq!(set.d_diff_dx(x, 0.4).unwrap(), fd, epsilon = 1e-8);
        }
        assert_eq!(set.d_zeta_dx(1.0, 0.5), Some(0.0));
    }
}
