//! Radial kernels of `(-Laplacian + mu)^{-alpha}` and `(-Laplacian)^{-alpha/2}`,
//! and the lattice Riesz multiplier.

use super::bessel::{bessel_k, ComplexOrder};
use super::gamma::{is_gamma_pole, ln_gamma};
use crate::error::{Error, Result};
use crate::fourier::{GridField, Spectral};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Order, spectral parameter and dimension of a Bessel potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselPotentialParams {
    pub alpha: Complex64,
    pub mu: Complex64,
    pub dim: usize,
}

impl BesselPotentialParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Domain(format!("dimension {} < 2", self.dim)));
        }
        if self.mu.im == 0.0 && self.mu.re <= 0.0 {
            return Err(Error::Domain(format!("mu = {} lies on (-inf, 0]", self.mu)));
        }
        if is_gamma_pole(self.alpha) {
            return Err(Error::Domain(format!("alpha = {} is a non-positive integer", self.alpha)));
        }
        Ok(())
    }
}

/// Radial profile `F_alpha(r, mu)` of the kernel of `(-Laplacian + mu)^{-alpha}`:
/// `2^{1-alpha} (2 pi)^{-d/2} (sqrt(mu)/r)^{d/2-alpha} K_{d/2-alpha}(sqrt(mu) r)`.
pub fn bessel_potential(params: BesselPotentialParams, r: f64) -> Result<Complex64> {
    params.validate()?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("bessel_potential needs r > 0, got {r}")));
    }
    let d = params.dim as f64;
    let nu = Complex64::new(0.5 * d, 0.0) - params.alpha;
    let root = params.mu.sqrt();
    let k = bessel_k(ComplexOrder::from(nu), root * r)?;
    let pref = ((1.0 - params.alpha) * 2f64.ln()).exp() / (2.0 * PI).powf(0.5 * d);
    let power = (nu * (root / r).ln()).exp();
    Ok(pref * power * k)
}

/// Kernel of the Riesz potential of order `alpha`:
/// `pi^{-d/2} 2^{-alpha} Gamma((d-alpha)/2) / Gamma(alpha/2) |x|^{alpha-d}`.
pub fn riesz_kernel(alpha: Complex64, dim: usize, x: &[f64]) -> Result<Complex64> {
    let d = dim as f64;
    if !(alpha.re > 0.0 && alpha.re < d) {
        return Err(Error::Domain(format!("Riesz order {alpha} outside 0 < Re < {dim}")));
    }
    if x.len() != dim {
        return Err(Error::Domain(format!("point has {} coordinates, need {dim}", x.len())));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Domain("Riesz kernel at the origin".into()));
    }
    let ln_num = ln_gamma((d - alpha) / 2.0);
    let ln_den = ln_gamma(alpha / 2.0);
    let ln_val = -0.5 * d * PI.ln() - alpha * 2f64.ln() + ln_num - ln_den + (alpha - d) * r.ln();
    Ok(ln_val.exp())
}

/// Output of [`riesz_apply`]: the field and the zero mode that was discarded.
#[derive(Debug, Clone)]
pub struct RieszApplied {
    pub field: GridField,
    /// Lattice mean of the input lying on the (unshifted) zero frequency.
    pub removed_zero_mode: Complex64,
}

/// Applies the lattice multiplier `|xi_k|^{-alpha}`; the zero mode, if the
/// lattice has one, is mapped to zero.
pub fn riesz_apply(alpha: Complex64, field: &GridField) -> RieszApplied {
    let spectral = Spectral::new(field.grid);
    riesz_apply_with(&spectral, alpha, field)
}

pub fn riesz_apply_with(spectral: &Spectral, alpha: Complex64, field: &GridField) -> RieszApplied {
    let removed = if field.grid.shifted {
        Complex64::new(0.0, 0.0)
    } else {
        field.mean()
    };
    let out = spectral.apply(field, |xi| {
        let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            (-alpha * 0.5 * k2.ln()).exp()
        }
    });
    RieszApplied {
        field: out,
        removed_zero_mode: removed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{relative_l2, Grid};

    #[test]
    fn two_dimensional_case_is_k0_over_two_pi() {
        let p = BesselPotentialParams {
            alpha: Complex64::new(1.0, 0.0),
            mu: Complex64::new(2.0, 0.5),
            dim: 2,
        };
        let r = 0.8;
        let v = bessel_potential(p, r).unwrap();
        let k0 = bessel_k(ComplexOrder::real(0.0), p.mu.sqrt() * r).unwrap();
        assert!((v - k0 / (2.0 * PI)).norm() < 1e-14 * v.norm());
    }

    #[test]
    fn invalid_parameters() {
        let mut p = BesselPotentialParams {
            alpha: Complex64::new(1.0, 0.0),
            mu: Complex64::new(-1.0, 0.0),
            dim: 3,
        };
        assert!(bessel_potential(p, 1.0).is_err());
        p.mu = Complex64::new(1.0, 0.0);
        p.alpha = Complex64::new(-2.0, 0.0);
        assert!(bessel_potential(p, 1.0).is_err());
        assert!(riesz_kernel(Complex64::new(3.0, 0.0), 3, &[1.0, 0.0, 0.0]).is_err());
        assert!(riesz_kernel(Complex64::new(1.0, 0.0), 3, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn riesz_kernel_homogeneity() {
        let a = riesz_kernel(Complex64::new(2.0, 0.0), 3, &[1.0, 0.0, 0.0]).unwrap();
        let b = riesz_kernel(Complex64::new(2.0, 0.0), 3, &[0.0, 2.0, 0.0]).unwrap();
        assert!((b - a / 2.0).norm() < 1e-15);
    }

    #[test]
    fn order_zero_is_identity_on_mean_free_fields() {
        let g = Grid::cubic(8, 2.0, false);
        let f = GridField::from_fn(g, |x| Complex64::new((PI * x[0]).sin() * (PI * x[2]).cos(), 0.0));
        let out = riesz_apply(Complex64::new(0.0, 0.0), &f);
        assert!(relative_l2(&out.field.values, &f.values) < 1e-14);
        assert!(out.removed_zero_mode.norm() < 1e-15);
    }
}
