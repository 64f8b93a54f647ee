//! Moments, tail functionals, and a bounded-Lipschitz distance shared by
//! empirical and grid-based population measures.

use alloc::vec::Vec;
use core::fmt;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::GridFunction;

/// Errors from metric construction and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricsError {
    /// A dictionary member's sup norm plus Lipschitz constant exceeds 1.
    CertificationFailed { index: usize, sup: f64, lip: f64 },
    /// A scalar argument is outside its admissible range.
    ParamOutOfRange { name: &'static str, value: f64 },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::CertificationFailed { index, sup, lip } => write!(
                f,
                "dictionary member {index} violates the unit ball (sup {sup}, lip {lip})"
            ),
            MetricsError::ParamOutOfRange { name, value } => {
                write!(f, "parameter {name} = {value} is outside its admissible range")
            }
        }
    }
}

/// A finite nonnegative measure on `[0, ∞)` that can integrate test
/// functions.
pub trait Measure {
    /// `∫ phi dμ`.
    fn integrate(&self, phi: &dyn Fn(f64) -> f64) -> f64;

    /// Total mass `⟨μ, 1⟩`.
    fn mass(&self) -> f64 {
        self.integrate(&|_| 1.0)
    }
}

/// A rescaled sum of point masses `(1/K) Σ_i δ_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
    k: f64,
}

impl EmpiricalMeasure {
    /// Wraps sample points with normalization `1/k`.
    pub fn new(points: Vec<f64>, k: f64) -> Result<Self, MetricsError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(MetricsError::ParamOutOfRange { name: "k", value: k });
        }
        Ok(EmpiricalMeasure { points, k })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl Measure for EmpiricalMeasure {
    fn integrate(&self, phi: &dyn Fn(f64) -> f64) -> f64 {
        self.points.iter().map(|&x| phi(x)).sum::<f64>() / self.k
    }

    fn mass(&self) -> f64 {
        self.points.len() as f64 / self.k
    }
}

impl Measure for GridFunction {
    fn integrate(&self, phi: &dyn Fn(f64) -> f64) -> f64 {
        self.pair_with(phi)
    }

    fn mass(&self) -> f64 {
        GridFunction::mass(self)
    }
}

/// The moment functional `⟨μ, 1 + x^p⟩`.
///
/// At `p = 0` the integrand is the constant `2`, so the zeroth moment is
/// twice the mass.
pub fn moments<M: Measure + ?Sized>(mu: &M, p: u32) -> f64 {
    mu.integrate(&|x| 1.0 + x.powi(p as i32))
}

/// Smooth tail functional `⟨μ, f(·/n)⟩` where `f` climbs from `0` on
/// `[0, 1/2]` to `1` on `[1, ∞)` through a `C²` quintic ramp.
///
/// The value is sandwiched between the tail masses beyond `n` and beyond
/// `n/2`. Requires `n ≥ 1`.
pub fn tail_mass<M: Measure + ?Sized>(mu: &M, n: f64) -> Result<f64, MetricsError> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(MetricsError::ParamOutOfRange { name: "n", value: n });
    }
    Ok(mu.integrate(&|x| tail_profile(x / n)))
}

/// `C²` ramp used by [`tail_mass`]: `0` for `t ≤ 1/2`, `1` for `t ≥ 1`,
/// quintic smoothstep between.
pub fn tail_profile(t: f64) -> f64 {
    if t <= 0.5 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let u = 2.0 * t - 1.0;
        u * u * u * (10.0 + u * (6.0 * u - 15.0))
    }
}

/// One member of the bounded-Lipschitz test dictionary.
///
/// Every variant is normalized so both its sup norm and Lipschitz constant
/// on `[0, ∞)` are at most one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFn {
    /// The constant `value`; detects mass differences.
    Constant { value: f64 },
    /// `min(1, (x - a)_+ / w) · w / (1 + w)`; detects location shifts past
    /// `a` at scale `w`.
    Ramp { a: f64, w: f64 },
    /// `cos(k x) / (1 + k)`; detects oscillatory discrepancies.
    DampedCos { k: f64 },
    /// `exp(-lambda x) / (1 + lambda)`; detects mass near the origin.
    DampedExp { lambda: f64 },
}

impl TestFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFn::Constant { value } => value,
            TestFn::Ramp { a, w } => {
                let t = ((x - a) / w).clamp(0.0, 1.0);
                t * w / (1.0 + w)
            }
            TestFn::DampedCos { k } => (k * x).cos() / (1.0 + k),
            TestFn::DampedExp { lambda } => (-lambda * x).exp() / (1.0 + lambda),
        }
    }

    /// Analytic sup norm on `[0, ∞)`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFn::Constant { value } => value.abs(),
            TestFn::Ramp { a: _, w } => w / (1.0 + w),
            TestFn::DampedCos { k } => 1.0 / (1.0 + k),
            TestFn::DampedExp { lambda } => 1.0 / (1.0 + lambda),
        }
    }

    /// Analytic Lipschitz constant on `[0, ∞)`.
    pub fn lip_norm(&self) -> f64 {
        match *self {
            TestFn::Constant { .. } => 0.0,
            TestFn::Ramp { a: _, w } => 1.0 / (1.0 + w),
            TestFn::DampedCos { k } => k / (1.0 + k),
            TestFn::DampedExp { lambda } => lambda / (1.0 + lambda),
        }
    }
}

/// Slack allowed on the analytic unit-ball certificates.
const CERT_TOL: f64 = 1e-12;

/// Slack allowed on the grid re-measurement of the certificates.
const CERT_GRID_TOL: f64 = 1e-9;

/// A finite family of certified unit bounded-Lipschitz test functions.
///
/// The bounded-Lipschitz distance is the supremum of `⟨μ - ν, f⟩` over the
/// unit ball; the dictionary replaces the ball by a fixed family whose
/// members are certified (analytically and by grid re-measurement) to lie
/// inside it, so the reported distance is always a lower bound.
#[derive(Clone, Debug)]
pub struct TestDictionary {
    members: Vec<TestFn>,
}

impl TestDictionary {
    /// Certifies and wraps an explicit member list.
    ///
    /// Certification checks that each member's analytic sup norm plus
    /// Lipschitz constant stays within the unit ball and re-measures both
    /// on a 4096-point grid over `[0, x_hi]`.
    pub fn new(members: Vec<TestFn>, x_hi: f64) -> Result<Self, MetricsError> {
        if !(x_hi > 0.0 && x_hi.is_finite()) {
            return Err(MetricsError::ParamOutOfRange { name: "x_hi", value: x_hi });
        }
        if members.is_empty() {
            return Err(MetricsError::ParamOutOfRange { name: "members", value: 0.0 });
        }
        for (index, f) in members.iter().enumerate() {
            let sup = f.sup_norm();
            let lip = f.lip_norm();
            let declared = sup + lip;
            if declared.is_nan() || declared > 1.0 + CERT_TOL {
                return Err(MetricsError::CertificationFailed { index, sup, lip });
            }
            let n = 4096;
            let dx = x_hi / n as f64;
            let mut measured_sup = 0.0f64;
            let mut measured_lip = 0.0f64;
            let mut prev = f.eval(0.0);
            measured_sup = measured_sup.max(prev.abs());
            for i in 1..=n {
                let v = f.eval(i as f64 * dx);
                measured_sup = measured_sup.max(v.abs());
                measured_lip = measured_lip.max((v - prev).abs() / dx);
                prev = v;
            }
            let measured = measured_sup + measured_lip;
            if measured.is_nan() || measured > 1.0 + CERT_GRID_TOL {
                return Err(MetricsError::CertificationFailed {
                    index,
                    sup: measured_sup,
                    lip: measured_lip,
                });
            }
        }
        Ok(TestDictionary { members })
    }

    /// The standard dictionary for populations living in `[0, x_max]`.
    ///
    /// Holds one constant, damped cosines and exponentials over a fixed
    /// frequency ladder, and ramps at four widths whose feet densely cover
    /// `[0, min(0.8 x_max, 4)]`, where the population bulk sits for the
    /// models at hand. `size` must be at least 8; 64 is the usual choice.
    pub fn default_for(x_max: f64, size: usize) -> Result<Self, MetricsError> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(MetricsError::ParamOutOfRange { name: "x_max", value: x_max });
        }
        if size < 8 {
            return Err(MetricsError::ParamOutOfRange { name: "size", value: size as f64 });
        }
        const COS_K: [f64; 12] = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0];
        const EXP_L: [f64; 12] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0];
        const RAMP_W: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
        let n_cos = COS_K.len().min((size - 1) / 8);
        let n_exp = EXP_L.len().min((size - 1) / 8);
        let n_ramp = size - 1 - n_cos - n_exp;
        let n_feet = n_ramp.div_ceil(RAMP_W.len());
        let foot_hi = (0.8 * x_max).min(4.0);
        let mut members = Vec::with_capacity(size);
        members.push(TestFn::Constant { value: 1.0 });
        'fill: for i in 0..n_feet {
            let a = if n_feet == 1 { 0.0 } else { foot_hi * i as f64 / (n_feet - 1) as f64 };
            for &w in &RAMP_W {
                if members.len() == 1 + n_ramp {
                    break 'fill;
                }
                members.push(TestFn::Ramp { a, w });
            }
        }
        members.extend(COS_K[..n_cos].iter().map(|&k| TestFn::DampedCos { k }));
        members.extend(EXP_L[..n_exp].iter().map(|&lambda| TestFn::DampedExp { lambda }));
        Self::new(members, x_max)
    }

    pub fn members(&self) -> &[TestFn] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Dictionary bounded-Lipschitz distance
/// `max_f |⟨μ, f⟩ - ⟨ν, f⟩|` over the dictionary members.
pub fn bl_distance<M: Measure + ?Sized, N: Measure + ?Sized>(
    mu: &M,
    nu: &N,
    dict: &TestDictionary,
) -> f64 {
    dict.members
        .iter()
        .map(|f| (mu.integrate(&|x| f.eval(x)) - nu.integrate(&|x| f.eval(x))).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn zeroth_moment_is_twice_the_mass() {
        let mu = EmpiricalMeasure::new(vec![0.5, 1.5, 2.5], 2.0).unwrap();
        assert_relative_eq!(moments(&mu, 0), 2.0 * mu.mass(), max_relative = 1e-14);
        let g = GridFunction::from_fn(128, 4.0, |x| (1.0 - x).max(0.0));
        assert_relative_eq!(moments(&g, 0), 2.0 * Measure::mass(&g), max_relative = 1e-13);
    }

    #[test]
    fn first_moment_matches_sample_mean() {
        let mu = EmpiricalMeasure::new(vec![1.0, 2.0, 3.0], 3.0).unwrap();
        assert_relative_eq!(moments(&mu, 1), 1.0 + 2.0, max_relative = 1e-14);
    }

    #[test]
    fn tail_mass_is_sandwiched_between_indicators() {
        let g = GridFunction::from_fn(400, 8.0, |_| 0.25);
        for n in [1.0, 2.0, 4.0] {
            let t = tail_mass(&g, n).unwrap();
            let hard_upper = g.mass_above(n / 2.0);
            let hard_lower = g.mass_above(n);
            assert!(t <= hard_upper + 1e-12 && t >= hard_lower - 1e-12, "n = {n}: {t}");
        }
        assert!(tail_mass(&g, 0.5).is_err());
    }

    #[test]
    fn tail_profile_is_smooth_at_the_seams() {
        assert_eq!(tail_profile(0.5), 0.0);
        assert_eq!(tail_profile(1.0), 1.0);
        // C^2: first and second one-sided differences vanish at both seams.
        // The cubic leading term makes the first difference O(h^2) and the
        // second difference O(h); a kink or curvature jump would leave O(1).
        let h = 1e-5;
        for (seam, inside) in [(0.5, 1.0), (1.0, -1.0)] {
            let d1 = (tail_profile(seam + inside * h) - tail_profile(seam)) / h;
            assert!(d1.abs() < 1e-7, "first derivative at {seam}: {d1}");
            let d2 = (tail_profile(seam + 2.0 * inside * h) - 2.0 * tail_profile(seam + inside * h)
                + tail_profile(seam))
                / (h * h);
            assert!(d2.abs() < 1e-2, "second derivative at {seam}: {d2}");
        }
    }

    #[test]
    fn members_respect_the_unit_ball() {
        let dict = TestDictionary::default_for(16.0, 64).unwrap();
        assert_eq!(dict.len(), 64);
        for f in dict.members() {
            assert!(f.sup_norm() + f.lip_norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn certification_rejects_an_oversized_member() {
        let err = TestDictionary::new(vec![TestFn::Constant { value: 1.5 }], 4.0).unwrap_err();
        assert!(matches!(err, MetricsError::CertificationFailed { index: 0, .. }));
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let dict = TestDictionary::default_for(8.0, 32).unwrap();
        let mu = EmpiricalMeasure::new(vec![0.3, 1.1, 2.2], 3.0).unwrap();
        assert_eq!(bl_distance(&mu, &mu, &dict), 0.0);
    }

    #[test]
    fn point_masses_separate_at_lipschitz_rate() {
        let dict = TestDictionary::default_for(8.0, 64).unwrap();
        let at = |x: f64| EmpiricalMeasure::new(vec![x], 1.0).unwrap();
        for (x, y) in [(0.2, 0.5), (0.5, 0.9), (1.0, 1.6)] {
            let d = bl_distance(&at(x), &at(y), &dict);
            let gap = y - x;
            assert!(d <= gap + 1e-12, "distance {d} exceeds the Lipschitz cap {gap}");
            // The (a = 0, w = 1) ramp alone gives |x - y| / 2 below the knee.
            assert!(d >= gap / 2.0 - 1e-12, "distance {d} too small for gap {gap}");
        }
    }

    #[test]
    fn mass_gap_is_seen_by_the_constant() {
        let dict = TestDictionary::default_for(8.0, 32).unwrap();
        let mu = EmpiricalMeasure::new(vec![1.0, 2.0], 1.0).unwrap();
        let nu = EmpiricalMeasure::new(vec![1.0], 1.0).unwrap();
        assert!(bl_distance(&mu, &nu, &dict) >= 0.5 - 1e-12);
    }

    #[test]
    fn dictionary_tracks_brute_force_on_representative_pairs() {
        // The brute-force opponent draws 1000 functions from the same
        // structural classes with continuous random parameters. Pairs are
        // the kind the distance is used on: overlapping population-style
        // densities and their empirical samples.
        let x_max = 16.0;
        let dict = TestDictionary::default_for(x_max, 64).unwrap();
        let mut rng = crate::rng::StreamKey::new(2024).rng();
        let mut brute: Vec<TestFn> = Vec::with_capacity(1000);
        for i in 0..1000 {
            let f = match i % 3 {
                0 => TestFn::Ramp {
                    a: rng.random::<f64>() * 0.9 * x_max,
                    w: 0.05 * (4.0f64 / 0.05).powf(rng.random::<f64>()),
                },
                1 => TestFn::DampedCos { k: 0.05 * (40.0f64 / 0.05).powf(rng.random::<f64>()) },
                _ => TestFn::DampedExp {
                    lambda: 0.05 * (20.0f64 / 0.05).powf(rng.random::<f64>()),
                },
            };
            brute.push(f);
        }
        let gauss = |mean: f64, sd: f64| {
            move |x: f64| {
                let t = (x - mean) / sd;
                (-0.5 * t * t).exp()
            }
        };
        let pairs: [(GridFunction, GridFunction); 3] = [
            (
                GridFunction::from_fn(800, x_max, gauss(1.0, 0.3)),
                GridFunction::from_fn(800, x_max, gauss(1.6, 0.3)),
            ),
            (
                GridFunction::from_fn(800, x_max, gauss(2.0, 0.5)),
                GridFunction::from_fn(800, x_max, |x| 0.7 * gauss(2.0, 0.8)(x)),
            ),
            (
                GridFunction::from_fn(800, x_max, |x| gauss(1.0, 0.25)(x) + 0.5 * gauss(3.0, 0.5)(x)),
                GridFunction::from_fn(800, x_max, |x| gauss(1.2, 0.35)(x) + 0.4 * gauss(3.2, 0.5)(x)),
            ),
        ];
        for (mu, nu) in &pairs {
            let dict_value = bl_distance(mu, nu, &dict);
            let brute_value = brute
                .iter()
                .map(|f| (mu.pair_with(|x| f.eval(x)) - nu.pair_with(|x| f.eval(x))).abs())
                .fold(0.0, f64::max);
            assert!(
                dict_value >= 0.9 * brute_value,
                "dictionary {dict_value} vs brute force {brute_value}"
            );
        }
    }
}
