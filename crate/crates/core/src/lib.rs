//! Homotopy operators for the ∂̄-equation on model convex domains in ℂ², with
//! the numerical machinery used to verify their kernel estimates.
//!
//! Module map:
//! - [`cforms`]: exterior algebra on `ℂⁿ_z × ℂⁿ_ζ` and the ⊤/⊥ projections.
//! - [`domains`]: balls, complex ellipsoids and custom polynomial domains.
//! - [`minimal_basis`]: ε-minimal bases, τ-radii and the polydisc-like sets `P_ε(ζ)`.
//! - [`support_leray`]: holomorphic support functions and Leray maps.
//! - [`kernels`]: Bochner–Martinelli and Cauchy–Fantappiè kernels.
//! - [`quadrature_estimates`]: samplers, Monte Carlo integration, Schur test, exponent fits.
//! - [`littlewood_paley`]: dyadic families, Triebel–Lizorkin norms, extensions, commutators.
//! - [`solver`]: homotopy operator assembly, residual and regularity experiments.
//! - [`cli`]: configuration, experiment drivers and report writers.

pub mod cforms;
pub mod cli;
pub mod domains;
pub mod error;
pub mod kernels;
pub mod littlewood_paley;
pub mod minimal_basis;
pub mod quadrature_estimates;
pub mod scalar;
pub mod solver;
pub mod support_leray;

pub use error::{Error, Result};
pub use scalar::{c64, Jet2, Scalar, C64};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reproducible generator used by every sampler in the crate.
pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal deviate.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
