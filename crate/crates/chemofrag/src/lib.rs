//! Simulation and diagnostics for a population of dividing individuals whose
//! size trait drifts and diffuses while a shared resource is consumed.
//!
//! The model couples a measure-valued population on `[0, ∞)` to a scalar
//! resource `R`. Individuals move by the SDE `dX = ζ(X, R) dt + √(2 D(X, R)) dW`,
//! divide at rate `b(X, R)` into complementary fragments `(αX, (1 − α)X)` with
//! `α` drawn from a symmetric fragmentation kernel, and die at rate `d(X)`.
//! The resource follows `Ṙ = r_in − R − ⟨ν, χ(·, R)⟩` where `ν` is the
//! population measure.
//!
//! The crate provides:
//!
//! * [`model`]: coefficient families, fragmentation kernels, the primal and
//!   dual fragmentation operators, and an assumption-checking validator.
//! * [`ibm`]: the individual-based stochastic model at carrying capacity `K`.
//! * [`pde`]: a conservative finite-volume solver for the deterministic
//!   limit, with weak-form and mild-form residual diagnostics.
//! * [`sde`]: single-trait Euler schemes, Feynman-Kac estimators, and the
//!   square-root comparison process used for lower bounds.
//! * [`metrics`]: bounded-Lipschitz distance, moments, and tail functionals
//!   shared by the stochastic and deterministic representations.
//! * [`besov`]: finite-difference machinery for `B^s_{1,∞}` norms, Gaussian
//!   derivative benchmarks, and the regularity exponents predicted for the
//!   population density.
//!
//! The crate is `no_std` (it allocates through `alloc`); everything involving
//! files, threads, or a command line lives in the companion CLI crate.

#![no_std]

extern crate alloc;

pub mod besov;
pub mod grid;
pub mod ibm;
pub mod metrics;
pub mod model;
pub mod pde;
pub mod quad;
pub mod rng;
pub mod run;
pub mod sde;
