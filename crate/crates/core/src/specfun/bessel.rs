//! Modified Bessel function of the second kind `K_nu(w)` for complex order
//! and argument with `Re w > 0`.
//!
//! Two integral representations are used:
//!
//! * `K_nu(w) = int_0^inf e^{-w cosh t} cosh(nu t) dt`, with `u = sinh t`,
//!   when `|arg w| <= pi/4` (few oscillations before the envelope dies);
//! * the Laplace form
//!   `K_nu(w) = sqrt(pi/(2w)) e^{-w} / Gamma(nu+1/2) int_0^inf e^{-t} t^{nu-1/2} (1 + t/(2w))^{nu-1/2} dt`
//!   with `t = q^2`, which stays non-oscillatory up to the imaginary axis.

use super::gamma::ln_gamma;
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `-ln(1e-18)`: envelope level at which integrals are truncated.
const TAIL: f64 = 41.446_531_673_892_82;

/// Order `nu = re + i im` of `K_nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexOrder {
    pub re: f64,
    pub im: f64,
}

impl ComplexOrder {
    pub fn real(re: f64) -> Self {
        ComplexOrder { re, im: 0.0 }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl From<f64> for ComplexOrder {
    fn from(re: f64) -> Self {
        ComplexOrder::real(re)
    }
}

impl From<Complex64> for ComplexOrder {
    fn from(z: Complex64) -> Self {
        ComplexOrder { re: z.re, im: z.im }
    }
}

/// Which integral representation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KRepresentation {
    Auto,
    Cosh,
    Laplace,
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 0.0,
        rel_tol: 2e-15,
        max_intervals: 4000,
        initial_pieces: 4,
    }
}

/// `K_nu(w)` for `Re w > 0`.
pub fn bessel_k(order: ComplexOrder, arg: Complex64) -> Result<Complex64> {
    bessel_k_with(order, arg, KRepresentation::Auto)
}

/// `K_nu(w)` with an explicit choice of representation.
pub fn bessel_k_with(order: ComplexOrder, arg: Complex64, repr: KRepresentation) -> Result<Complex64> {
    if !(arg.re > 0.0) || !arg.im.is_finite() {
        return Err(Error::Domain(format!("bessel_k needs Re(arg) > 0, got {arg}")));
    }
    if !order.re.is_finite() || !order.im.is_finite() {
        return Err(Error::Domain("bessel_k order must be finite".into()));
    }
    let use_cosh = match repr {
        KRepresentation::Cosh => true,
        KRepresentation::Laplace => false,
        KRepresentation::Auto => arg.re >= arg.im.abs(),
    };
    if use_cosh {
        cosh_form(order.to_complex(), arg)
    } else {
        laplace_form(order.to_complex(), arg)
    }
}

fn cosh_form(nu: Complex64, w: Complex64) -> Result<Complex64> {
    let growth = nu.re.abs();
    // Solve sqrt(1+U^2) - 1 = (TAIL + growth * asinh U) / Re w.
    let mut u_max: f64 = 1.0;
    for _ in 0..30 {
        let c = 1.0 + (TAIL + growth * u_max.asinh()) / w.re;
        let next = (c * c - 1.0).sqrt();
        if (next - u_max).abs() < 1e-6 * next {
            u_max = next;
            break;
        }
        u_max = next;
    }
    let q = integrate(
        |u| {
            let s = (1.0 + u * u).sqrt();
            let excess = u * u / (s + 1.0);
            let t = u.asinh();
            (-w * excess).exp() * (nu * t).cosh() / s
        },
        0.0,
        u_max,
        &quad_opts(),
    )?;
    Ok(q.value * (-w).exp())
}

/// Laplace-type representation; valid for `|arg w| < pi` (including the
/// imaginary axis), order reflected into `Re nu >= 0`.
pub(crate) fn laplace_form(nu: Complex64, w: Complex64) -> Result<Complex64> {
    if w.norm() == 0.0 {
        return Err(Error::Domain("bessel_k at w = 0".into()));
    }
    let nu = if nu.re < 0.0 { -nu } else { nu };
    let a = nu - 0.5;
    let growth = 2.0 * nu.re + a.re.abs();
    let mut q_max: f64 = 7.0;
    for _ in 0..30 {
        let next = (TAIL + growth * (1.0 + q_max * q_max).ln().max(0.0) + 1.0).sqrt();
        if (next - q_max).abs() < 1e-6 * next {
            q_max = next;
            break;
        }
        q_max = next;
    }
    let inv2w = 0.5 / w;
    let two_nu = 2.0 * nu;
    let q = integrate(
        |q| {
            if q == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let t = q * q;
            let base = 1.0 + t * inv2w;
            2.0 * (-t).exp() * (two_nu * q.ln()).exp() * (a * base.ln()).exp()
        },
        0.0,
        q_max,
        &quad_opts(),
    )?;
    let pref = (PI / (2.0 * w)).sqrt() * (-w - ln_gamma(nu + 0.5)).exp();
    Ok(pref * q.value)
}

/// `K_nu(i y)` on the imaginary axis from offsets `Re arg = eps` in
/// `{1e-3, 1e-4, 1e-5}`, extrapolated quadratically to `eps = 0`.
pub fn bessel_k_boundary(order: ComplexOrder, y: f64) -> Result<Complex64> {
    if y == 0.0 || !y.is_finite() {
        return Err(Error::Domain("bessel_k_boundary needs y != 0".into()));
    }
    let eps = [1e-3, 1e-4, 1e-5];
    let vals: Vec<Complex64> = eps
        .iter()
        .map(|&e| bessel_k(order, Complex64::new(e, y)))
        .collect::<Result<_>>()?;
    // Lagrange interpolation evaluated at 0.
    let mut out = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        let mut l = 1.0;
        for j in 0..3 {
            if i != j {
                l *= eps[j] / (eps[j] - eps[i]);
            }
        }
        out += vals[i] * l;
    }
    Ok(out)
}

/// Direct evaluation on the imaginary axis through the Laplace form.
pub fn bessel_k_imaginary(order: ComplexOrder, y: f64) -> Result<Complex64> {
    if y == 0.0 {
        return Err(Error::Domain("bessel_k_imaginary needs y != 0".into()));
    }
    laplace_form(order.to_complex(), Complex64::new(0.0, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn half_order_closed_form() {
        for w in [c(1.0, 0.0), c(0.3, 0.0), c(5.0, 2.0), c(0.2, 3.0), c(40.0, -1.0)] {
            let exact = (PI / (2.0 * w)).sqrt() * (-w).exp();
            for repr in [KRepresentation::Cosh, KRepresentation::Laplace] {
                let v = bessel_k_with(ComplexOrder::real(0.5), w, repr).unwrap();
                assert!((v - exact).norm() < 1e-12 * exact.norm(), "{w} {repr:?} {v} {exact}");
            }
        }
    }

    #[test]
    fn representations_agree_on_overlap() {
        for &(nu, w) in &[
            (c(0.0, 0.0), c(1.0, 0.5)),
            (c(1.3, 0.0), c(2.0, -1.0)),
            (c(0.25, 0.7), c(0.7, 0.6)),
            (c(-2.2, 0.0), c(3.0, 0.0)),
        ] {
            let a = bessel_k_with(nu.into(), w, KRepresentation::Cosh).unwrap();
            let b = bessel_k_with(nu.into(), w, KRepresentation::Laplace).unwrap();
            assert!((a - b).norm() < 1e-12 * a.norm(), "{nu} {w}: {a} vs {b}");
        }
    }

    #[test]
    fn three_halves_closed_form() {
        // K_{3/2}(w) = sqrt(pi/(2w)) e^{-w} (1 + 1/w)
        for w in [c(0.5, 0.0), c(1.0, 4.0), c(0.01, 1.0)] {
            let exact = (PI / (2.0 * w)).sqrt() * (-w).exp() * (1.0 + 1.0 / w);
            let v = bessel_k(ComplexOrder::real(1.5), w).unwrap();
            assert!((v - exact).norm() < 1e-12 * exact.norm());
        }
    }

    #[test]
    fn domain_error() {
        assert!(matches!(
            bessel_k(ComplexOrder::real(0.0), c(0.0, 1.0)),
            Err(Error::Domain(_))
        ));
        assert!(bessel_k(ComplexOrder::real(0.0), c(-1.0, 0.0)).is_err());
    }

    #[test]
    fn boundary_extrapolation_matches_direct_axis_value() {
        for y in [0.5, 1.0, 3.0, -2.0] {
            let a = bessel_k_boundary(ComplexOrder::real(0.0), y).unwrap();
            let b = bessel_k_imaginary(ComplexOrder::real(0.0), y).unwrap();
            assert!((a - b).norm() < 1e-9 * b.norm(), "{y}: {a} {b}");
        }
    }
}
