//! Special functions: `K_nu` of complex order and argument, Bessel and Riesz
//! potentials, and the lattice Riesz multiplier.

pub mod bessel;
pub mod gamma;
pub mod potentials;

pub use bessel::{bessel_k, bessel_k_boundary, bessel_k_imaginary, bessel_k_with, ComplexOrder, KRepresentation};
pub use gamma::{gamma, ln_gamma};
pub use potentials::{bessel_potential, riesz_apply, riesz_apply_with, riesz_kernel, BesselPotentialParams, RieszApplied};
