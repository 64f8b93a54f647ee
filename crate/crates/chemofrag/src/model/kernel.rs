//! Symmetric fragmentation kernels on `(0, 1)`.

use alloc::vec::Vec;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::ModelError;
use crate::quad::gauss_legendre;

/// Fragment fractions are snapped to this dyadic grid so that `1 - alpha` is
/// exactly representable and mirroring is an exact involution. The snap
/// moves a node by at most `2^-49`, far below quadrature accuracy.
const DYADIC_SCALE: f64 = 281_474_976_710_656.0; // 2^48

/// Relative tolerance for matching mirrored atoms of a discrete kernel.
const ATOM_MATCH_TOL: f64 = 1e-12;

/// Mirror pairs `(alpha, 1 - alpha, weight)` for nodes below one half, plus
/// the weight carried by a central atom at exactly one half.
type PairedNodes = (Vec<(f64, f64, f64)>, f64);

fn quantize(alpha: f64) -> f64 {
    (alpha * DYADIC_SCALE).round() / DYADIC_SCALE
}

/// The supported kernel families.
///
/// Every kernel is a probability measure `M` on `(0, 1)` that is symmetric
/// about `1/2`, so the two fragments `alpha x` and `(1 - alpha) x` are
/// exchangeable.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelVariant {
    /// Point mass at `1/2`: exact halving.
    DiracHalf,
    /// Uniform distribution on `(0, 1)`.
    Uniform01,
    /// `Beta(a, a)` distribution; `a > 0`.
    SymmetricBeta { a: f64 },
    /// Finitely many atoms `(alpha, weight)`; atoms must come in mirror
    /// pairs about `1/2` with equal weights.
    DiscreteSymmetric { atoms: Vec<(f64, f64)> },
}

/// A fragmentation kernel together with its quadrature discretization.
///
/// Continuous variants are discretized by a Gauss-Legendre rule whose nodes
/// are snapped to a dyadic grid: each node `alpha` is stored alongside its
/// exact mirror `1 - alpha`, sharing one weight. Mapping `alpha ↦ 1 - alpha`
/// therefore permutes the node set bitwise, which makes the symmetry
/// identities exact in floating point rather than merely approximate.
/// `DiracHalf` and `DiscreteSymmetric` represent their atoms directly, so
/// quadrature is exact for them.
#[derive(Clone, Debug)]
pub struct FragmentationKernel {
    variant: KernelVariant,
    /// Mirror pairs `(lo, hi, weight)` with `hi = 1 - lo` exactly and the
    /// weight carried once per side.
    pairs: Vec<(f64, f64, f64)>,
    /// Weight of the node at exactly `1/2`, zero when absent.
    center_weight: f64,
    /// All nodes flattened as `(alpha, weight)`, pairs interleaved
    /// `(lo, hi)` and the center node last.
    nodes: Vec<(f64, f64)>,
}

impl FragmentationKernel {
    /// Discretizes `variant` with an `n_quad`-point rule.
    ///
    /// `n_quad` applies to `Uniform01` and `SymmetricBeta` and must lie in
    /// `1..=64`; the atom variants ignore it. Weights are normalized to sum
    /// to one after discretization.
    pub fn build(variant: KernelVariant, n_quad: usize) -> Result<Self, ModelError> {
        let (pairs, center_weight) = match &variant {
            KernelVariant::DiracHalf => (Vec::new(), 1.0),
            KernelVariant::Uniform01 => gauss_pairs(n_quad, |_, _| 1.0)?,
            KernelVariant::SymmetricBeta { a } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(ModelError::ParamOutOfRange { name: "a", value: *a });
                }
                let a = *a;
                gauss_pairs(n_quad, move |lo, hi| (lo * hi).powf(a - 1.0))?
            }
            KernelVariant::DiscreteSymmetric { atoms } => discrete_pairs(atoms)?,
        };
        let (pairs, center_weight) = normalize(pairs, center_weight)?;
        let mut nodes = Vec::with_capacity(2 * pairs.len() + 1);
        for &(lo, hi, w) in &pairs {
            nodes.push((lo, w));
            nodes.push((hi, w));
        }
        if center_weight > 0.0 {
            nodes.push((0.5, center_weight));
        }
        Ok(FragmentationKernel { variant, pairs, center_weight, nodes })
    }

    /// The variant this kernel was built from.
    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    /// Quadrature nodes as `(alpha, weight)`, weights summing to one.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Mirror pairs `(lo, hi, weight)` with `hi = 1 - lo` exact; the node at
    /// `1/2`, if any, is not included here.
    pub fn mirror_pairs(&self) -> &[(f64, f64, f64)] {
        &self.pairs
    }

    /// Weight of the node at exactly `1/2` (zero when absent).
    pub fn center_weight(&self) -> f64 {
        self.center_weight
    }

    /// Quadrature approximation of `∫ g(alpha) M(dalpha)`.
    ///
    /// Accumulates mirror pairs as `w · (g(lo) + g(hi))`, so integrating
    /// `alpha ↦ g(1 - alpha)` returns a bitwise-identical value: the inner
    /// addition commutes and `1 - alpha` maps each stored node to its stored
    /// partner exactly.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let mut total = 0.0;
        for &(lo, hi, w) in &self.pairs {
            total += w * (g(lo) + g(hi));
        }
        if self.center_weight > 0.0 {
            total += self.center_weight * g(0.5);
        }
        total
    }

    /// Draws a fragment fraction from the kernel's law.
    ///
    /// Continuous variants sample the exact continuous distribution, not the
    /// quadrature nodes; atom variants sample their atoms.
    pub fn sample_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.variant {
            KernelVariant::DiracHalf => 0.5,
            KernelVariant::Uniform01 => rng.random::<f64>(),
            KernelVariant::SymmetricBeta { a } => {
                let beta = Beta::new(*a, *a).expect("parameter checked at build");
                beta.sample(rng)
            }
            KernelVariant::DiscreteSymmetric { .. } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for &(alpha, w) in &self.nodes {
                    acc += w;
                    if u < acc {
                        return alpha;
                    }
                }
                self.nodes.last().expect("kernel has nodes").0
            }
        }
    }
}

/// Builds quantized mirror pairs for a Gauss-Legendre rule on `(0, 1)` with
/// an unnormalized symmetric density given by `density(lo, hi)`.
fn gauss_pairs<F: Fn(f64, f64) -> f64>(
    n_quad: usize,
    density: F,
) -> Result<PairedNodes, ModelError> {
    if n_quad == 0 || n_quad > 64 {
        return Err(ModelError::QuadSizeOutOfRange { n_quad });
    }
    let (nodes, weights) = gauss_legendre(n_quad);
    let mut pairs = Vec::with_capacity(n_quad / 2);
    let mut center = 0.0;
    for i in 0..n_quad {
        let alpha = 0.5 * (1.0 + nodes[i]);
        if nodes[i] < 0.0 {
            let lo = quantize(alpha);
            debug_assert!(lo > 0.0 && lo < 0.5, "quantized node left the open interval");
            let hi = 1.0 - lo;
            pairs.push((lo, hi, 0.5 * weights[i] * density(lo, hi)));
        } else if nodes[i] == 0.0 {
            center = 0.5 * weights[i] * density(0.5, 0.5);
        }
    }
    Ok((pairs, center))
}

/// Validates and pairs the atoms of a discrete kernel.
fn discrete_pairs(atoms: &[(f64, f64)]) -> Result<PairedNodes, ModelError> {
    if atoms.is_empty() {
        return Err(ModelError::EmptyKernel);
    }
    for &(alpha, w) in atoms {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(ModelError::ParamOutOfRange { name: "atom alpha", value: alpha });
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(ModelError::ParamOutOfRange { name: "atom weight", value: w });
        }
    }
    let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("atoms checked finite"));
    let mut pairs = Vec::new();
    let mut center = 0.0;
    let mut i = 0;
    let mut j = sorted.len() - 1;
    while i < j {
        let (al, wl) = sorted[i];
        let (ar, wr) = sorted[j];
        if (al + ar - 1.0).abs() > ATOM_MATCH_TOL {
            let offender = if al + ar < 1.0 { al } else { ar };
            return Err(ModelError::AsymmetricAtoms { alpha: offender });
        }
        if (wl - wr).abs() > ATOM_MATCH_TOL * wl.max(wr) {
            return Err(ModelError::AsymmetricAtoms { alpha: al });
        }
        let lo = quantize(al.min(ar));
        pairs.push((lo, 1.0 - lo, 0.5 * (wl + wr)));
        i += 1;
        j -= 1;
    }
    if i == j {
        let (alpha, w) = sorted[i];
        if (alpha - 0.5).abs() > ATOM_MATCH_TOL {
            return Err(ModelError::AsymmetricAtoms { alpha });
        }
        center = w;
    }
    Ok((pairs, center))
}

/// Rescales weights to sum to one.
fn normalize(
    mut pairs: Vec<(f64, f64, f64)>,
    mut center: f64,
) -> Result<PairedNodes, ModelError> {
    let total: f64 = center + 2.0 * pairs.iter().map(|p| p.2).sum::<f64>();
    if !(total.is_finite() && total > 0.0) {
        return Err(ModelError::NonNormalizableWeights { total });
    }
    for p in &mut pairs {
        p.2 /= total;
    }
    center /= total;
    Ok((pairs, center))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;

    fn build(variant: KernelVariant, n: usize) -> FragmentationKernel {
        FragmentationKernel::build(variant, n).expect("kernel builds")
    }

    #[test]
    fn weights_sum_to_one() {
        let kernels = [
            build(KernelVariant::DiracHalf, 1),
            build(KernelVariant::Uniform01, 16),
            build(KernelVariant::Uniform01, 33),
            build(KernelVariant::SymmetricBeta { a: 2.0 }, 32),
            build(KernelVariant::SymmetricBeta { a: 0.5 }, 24),
            build(
                KernelVariant::DiscreteSymmetric { atoms: vec![(0.3, 0.25), (0.7, 0.25), (0.5, 0.5)] },
                1,
            ),
        ];
        for k in &kernels {
            let total: f64 = k.nodes().iter().map(|&(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-14, "weight sum {total}");
        }
    }

    #[test]
    fn mirroring_permutes_nodes_bitwise() {
        for k in [
            build(KernelVariant::Uniform01, 32),
            build(KernelVariant::SymmetricBeta { a: 3.0 }, 17),
            build(KernelVariant::DiscreteSymmetric { atoms: vec![(0.2, 0.5), (0.8, 0.5)] }, 1),
        ] {
            let mut mirrored: Vec<(u64, u64)> = k
                .nodes()
                .iter()
                .map(|&(a, w)| ((1.0 - a).to_bits(), w.to_bits()))
                .collect();
            let mut original: Vec<(u64, u64)> =
                k.nodes().iter().map(|&(a, w)| (a.to_bits(), w.to_bits())).collect();
            mirrored.sort_unstable();
            original.sort_unstable();
            assert_eq!(mirrored, original);
        }
    }

    #[test]
    fn mirrored_integrands_are_bitwise_equal() {
        for k in [
            build(KernelVariant::SymmetricBeta { a: 2.0 }, 32),
            build(KernelVariant::Uniform01, 33),
            build(KernelVariant::DiracHalf, 1),
        ] {
            let g = |a: f64| (3.0 * a).exp() / (1.0 + a);
            let forward = k.integrate(g);
            let mirrored = k.integrate(|a| g(1.0 - a));
            assert_eq!(forward.to_bits(), mirrored.to_bits());
        }
    }

    #[test]
    fn mean_fraction_is_half() {
        for k in [
            build(KernelVariant::DiracHalf, 1),
            build(KernelVariant::Uniform01, 16),
            build(KernelVariant::SymmetricBeta { a: 2.0 }, 32),
        ] {
            assert!((k.integrate(|a| a) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_rule_integrates_cubic() {
        let k = build(KernelVariant::Uniform01, 16);
        assert!((k.integrate(|a| a * a * a) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn beta_two_matches_closed_form_second_moment() {
        // Beta(2, 2): E[alpha^2] = 3/10.
        let k = build(KernelVariant::SymmetricBeta { a: 2.0 }, 32);
        assert!((k.integrate(|a| a * a) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn discrete_kernel_rejects_unmatched_atom() {
        let err = FragmentationKernel::build(
            KernelVariant::DiscreteSymmetric { atoms: vec![(0.3, 0.5), (0.6, 0.5)] },
            1,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::AsymmetricAtoms { .. }));
    }

    #[test]
    fn discrete_kernel_rejects_boundary_atom() {
        let err = FragmentationKernel::build(
            KernelVariant::DiscreteSymmetric { atoms: vec![(0.0, 0.5), (1.0, 0.5)] },
            1,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ParamOutOfRange { .. }));
    }

    #[test]
    fn quad_size_is_bounded() {
        assert!(matches!(
            FragmentationKernel::build(KernelVariant::Uniform01, 0).unwrap_err(),
            ModelError::QuadSizeOutOfRange { n_quad: 0 }
        ));
        assert!(matches!(
            FragmentationKernel::build(KernelVariant::Uniform01, 65).unwrap_err(),
            ModelError::QuadSizeOutOfRange { n_quad: 65 }
        ));
    }

    #[test]
    fn beta_parameter_must_be_positive() {
        let err =
            FragmentationKernel::build(KernelVariant::SymmetricBeta { a: 0.0 }, 8).unwrap_err();
        assert!(matches!(err, ModelError::ParamOutOfRange { name: "a", .. }));
    }

    #[test]
    fn sampling_matches_kernel_mean_and_symmetry() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = build(KernelVariant::SymmetricBeta { a: 2.0 }, 32);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| k.sample_alpha(&mut rng)).sum::<f64>() / n as f64;
        // Beta(2, 2) has mean 1/2 and variance 1/20; 5 sigma of the sample mean.
        assert!((mean - 0.5).abs() < 5.0 * (0.05f64 / n as f64).sqrt());
    }

    #[test]
    fn discrete_sampling_hits_each_atom() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = build(
            KernelVariant::DiscreteSymmetric { atoms: vec![(0.25, 0.5), (0.75, 0.5)] },
            1,
        );
        let n = 4000;
        let low = (0..n).filter(|_| k.sample_alpha(&mut rng) < 0.5).count();
        let frac = low as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.05, "low-atom fraction {frac}");
    }
}
