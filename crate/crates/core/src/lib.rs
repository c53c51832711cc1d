//! Mercer spectra of deep dot-product kernels on the unit sphere.
//!
//! A stack of activations `σ_1, …, σ_N` induces the kernel
//! `K_N(x, x') = f_N ∘ … ∘ f_1(⟨x, x'⟩)` on `S^{d-1}`, where `f_i` carries the
//! absolute Taylor coefficients of `σ_i`. The modules build that kernel's
//! power series, its exact eigenvalues on spherical-harmonic spaces, the
//! decay diagnostics that drive kernel ridge regression rates, and the
//! learning-curve and MLP norm experiments on top of them.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`series`] | activation catalog, series composition, decay regimes |
//! | [`sphere`] | harmonic dimensions, zonal polynomials, uniform sampling |
//! | [`spectrum`] | distinct and sorted eigenvalues, degrees of freedom, decay checks |
//! | [`kernel`] | kernel evaluation, Gram matrices, empirical and quadrature spectra |
//! | [`rls`] | zonal targets, schedules, kernel ridge regression, learning curves |
//! | [`mlp`] | weight ingestion, forward pass, RKHS-norm and risk certificates |

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod mlp;
pub mod quad;
pub mod rls;
pub mod series;
pub mod special;
pub mod spectrum;
pub mod sphere;

pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use series::{Activation, DecayRegime, PowerSeries, RegimeKind};
pub use spectrum::{Normalization, SpectrumTable};
pub use sphere::SphereDim;
