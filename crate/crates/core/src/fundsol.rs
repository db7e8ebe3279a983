//! Fundamental solution `E_tau` of the conjugated Laplacian in 3D, i.e. the
//! inverse Fourier transform of `1 / p_tau(xi)` with
//! `p_tau(xi) = |xi|^2 + 2 i tau xi_1 - tau^2`, plus the reduction of a
//! complex vector `z` with `z.z = 0` to the canonical pair `(tau, U, v)`.
//!
//! The value is evaluated as
//! `E_tau(x_1, r) = (1 / 2 pi^2) Re int_0^inf e^{i x_1 s} K_0(r (s + i tau)) ds`.
//! Exchanging this with the `cosh` integral for `K_0` and rotating the
//! resulting contour into the lower half plane gives the production form
//!
//! `E_tau = (1 / 2 pi^2) Re int_0^inf c e^{-tau q^2} / ((r - i q^2 - i x_1) sqrt(2 r - i q^2)) dq`,
//! `c = -2 i e^{i pi / 4} e^{-i tau r}`,
//!
//! whose integrand is smooth and Gaussian-damped. The Fourier-side form is
//! kept as an independent evaluator ([`e1_fourier_route`]).

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_with_breaks, FilonLegendre, QuadOptions};
use crate::specfun::{bessel_k, ComplexOrder};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Upper constant in `|E_tau(x)| <= C / |x|`.
pub const POINTWISE_BOUND: f64 = 0.337_618_618_558_914_84; // 3 sqrt(2) / (4 pi)
/// Free-space value `|x| E_0(x) = 1 / (4 pi)`.
pub const FREE_PROFILE: f64 = 0.079_577_471_545_947_67;

/// Complex 3-vector with `z.z = 0` and its canonical data:
/// `z = tau U^T (i e_1 + e_2)` and `p_z(xi) = p_tau(U xi + v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgoVector {
    pub z: [Complex64; 3],
    pub tau: f64,
    /// Rows are `Im z / tau`, `Re z / tau` and their cross product.
    pub u: [[f64; 3]; 3],
    pub v: [f64; 3],
}

impl CgoVector {
    pub fn norm(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.tau
    }

    pub fn re(&self) -> [f64; 3] {
        [self.z[0].re, self.z[1].re, self.z[2].re]
    }

    pub fn im(&self) -> [f64; 3] {
        [self.z[0].im, self.z[1].im, self.z[2].im]
    }

    /// `U x`.
    pub fn rotate(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| dot(self.u[i], x))
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Bilinear (unconjugated) product `z.w`.
pub fn cdot(z: &[Complex64; 3], w: &[Complex64; 3]) -> Complex64 {
    z[0] * w[0] + z[1] * w[1] + z[2] * w[2]
}

/// Builds the canonical data of `z`; fails unless `z != 0` and `z.z = 0`
/// to `1e-10` relative.
pub fn z_to_canonical(z: [Complex64; 3]) -> Result<CgoVector> {
    let n2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::DegenerateZ("z must be non-zero and finite".into()));
    }
    let zz = cdot(&z, &z);
    if zz.norm() > 1e-10 * n2 {
        return Err(Error::DegenerateZ(format!("z.z = {zz} is not zero (|z|^2 = {n2:e})")));
    }
    let tau = (n2 / 2.0).sqrt();
    let re = [z[0].re / tau, z[1].re / tau, z[2].re / tau];
    let im = [z[0].im / tau, z[1].im / tau, z[2].im / tau];
    let third = cross(im, re);
    Ok(CgoVector {
        z,
        tau,
        u: [im, re, third],
        v: [0.0, tau, 0.0],
    })
}

/// `z = s (e + i f)` for orthonormal real `e`, `f`.
pub fn cgo_vector_from_frame(s: f64, e: [f64; 3], f: [f64; 3]) -> Result<CgoVector> {
    z_to_canonical(std::array::from_fn(|i| Complex64::new(s * e[i], s * f[i])))
}

/// Either form of the conjugated symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConjugatedSymbolParams {
    /// `p_tau(xi) = |xi|^2 + 2 i tau xi_1 - tau^2`.
    Tau(f64),
    /// `p_z(xi) = |xi|^2 + 2 z.xi`.
    Z([Complex64; 3]),
}

pub fn conjugated_symbol(params: ConjugatedSymbolParams, xi: [f64; 3]) -> Complex64 {
    let k2 = dot(xi, xi);
    match params {
        ConjugatedSymbolParams::Tau(tau) => Complex64::new(k2 - tau * tau, 2.0 * tau * xi[0]),
        ConjugatedSymbolParams::Z(z) => {
            let zx = z[0] * xi[0] + z[1] * xi[1] + z[2] * xi[2];
            k2 + 2.0 * zx
        }
    }
}

/// `r -> 0` limit of `E_1(x_1, r)`.
fn e1_on_axis(x1: f64) -> f64 {
    if x1 > 0.0 {
        1.0 / (4.0 * PI * x1)
    } else {
        (2.0 * x1.exp() - 1.0) / (4.0 * PI * x1.abs())
    }
}

/// Rotated-contour integral for `E_tau(x_1, r)`, `tau > 0`, `r > 0`, with
/// absolute error target `tol`.
fn contour_integral(tau: f64, x1: f64, r: f64, tol: f64) -> Result<f64> {
    let c = Complex64::new(0.0, -2.0) * Complex64::from_polar(1.0, PI / 4.0 - tau * r);
    let q_max = (45.0 / tau).sqrt();
    let mut breaks = vec![0.0, q_max];
    let knee = (2.0 * r).sqrt();
    for k in [0.25, 1.0, 4.0] {
        breaks.push(k * knee);
    }
    if x1 < 0.0 && tau * x1.abs() < 45.0 {
        // Near-pole of the first denominator at q^2 = -x_1, width ~ r / (2 q0).
        let q0 = x1.abs().sqrt();
        let w = r / (2.0 * q0);
        for k in [-8.0, -1.0, 0.0, 1.0, 8.0] {
            breaks.push(q0 + k * w);
        }
    }
    breaks.retain(|&b| (0.0..=q_max).contains(&b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut f = |q: f64| {
        let q2 = q * q;
        c * (-tau * q2).exp() / (Complex64::new(r, -q2 - x1) * Complex64::new(2.0 * r, -q2).sqrt())
    };
    let opts = QuadOptions {
        abs_tol: tol * 2.0 * PI * PI,
        rel_tol: 1e-14,
        max_intervals: 4000,
        initial_pieces: 1,
    };
    let q = integrate_with_breaks(&mut f, &breaks, &opts)?;
    Ok(q.value.re / (2.0 * PI * PI))
}

fn check_point(x1: f64, r: f64, tol: f64) -> Result<()> {
    if !(r >= 0.0) || !x1.is_finite() || !r.is_finite() {
        return Err(Error::Domain(format!("invalid point (x1, r) = ({x1}, {r})")));
    }
    if x1 == 0.0 && r == 0.0 {
        return Err(Error::Domain("fundamental solution at the origin".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// `E_1(x_1, r)` with absolute error target `tol`.
pub fn e1(x1: f64, r: f64, tol: f64) -> Result<f64> {
    check_point(x1, r, tol)?;
    if r == 0.0 {
        return Ok(e1_on_axis(x1));
    }
    contour_integral(1.0, x1, r, tol)
}

/// `E_tau(x_1, |x'| = r)` in 3D through `E_tau(x) = tau E_1(tau x)` and
/// `E_{-tau}(x_1, r) = E_tau(-x_1, r)`; absolute error target `tol`.
pub fn fundamental_solution_3d(tau: f64, x1: f64, r: f64, tol: f64) -> Result<f64> {
    check_point(x1, r, tol)?;
    if tau == 0.0 {
        return Ok(1.0 / (4.0 * PI * (x1 * x1 + r * r).sqrt()));
    }
    if tau < 0.0 {
        return fundamental_solution_3d(-tau, -x1, r, tol);
    }
    Ok(tau * e1(tau * x1, tau * r, tol / tau)?)
}

/// `E_tau` evaluated with `tau` kept inside the integrand (no rescaling);
/// used to check the scaling law.
pub fn fundamental_solution_3d_unscaled(tau: f64, x1: f64, r: f64, tol: f64) -> Result<f64> {
    check_point(x1, r, tol)?;
    if !(tau > 0.0) {
        return Err(Error::Domain("unscaled evaluation needs tau > 0".into()));
    }
    if r == 0.0 {
        return Ok(tau * e1_on_axis(tau * x1));
    }
    contour_integral(tau, x1, r, tol)
}

/// Complex-plane kernel of `G_z`: `e^{-i v.(U x)} E_tau(U x)`.
pub fn fundamental_solution_z(z: &CgoVector, x: [f64; 3], tol: f64) -> Result<Complex64> {
    let y = z.rotate(x);
    let r = (y[1] * y[1] + y[2] * y[2]).sqrt();
    let e = fundamental_solution_3d(z.tau, y[0], r, tol)?;
    Ok(Complex64::from_polar(e, -dot(z.v, y)))
}

/// `E_1` from the Fourier-side integral `int_0^inf e^{i x_1 s} K_0(r (s + i)) ds`.
///
/// With `s = eta / r` the integral splits at `eta = 1`: adaptive
/// Gauss-Kronrod on `[0, 1]` and Filon-Legendre panels on the tail, where
/// `K_0` decays like `e^{-eta}`. Returns the full complex value of
/// `(1 / 2 pi^2) int_0^inf ...` so the real part is `E_1`.
pub fn e1_fourier_route(x1: f64, r: f64, tol: f64) -> Result<Complex64> {
    if !(r > 0.0) {
        return Err(Error::Domain("Fourier-side evaluation needs r > 0".into()));
    }
    let kappa = x1 / r;
    let ir = Complex64::new(0.0, r);
    let mut g = |eta: f64| -> Complex64 {
        bessel_k(ComplexOrder::real(0.0), Complex64::new(eta, 0.0) + ir).unwrap_or(Complex64::new(f64::NAN, 0.0))
    };
    let pieces = ((kappa.abs() / PI).ceil() as usize).clamp(2, 2000);
    let opts = QuadOptions {
        abs_tol: tol * 2.0 * PI * PI * r,
        rel_tol: 1e-13,
        max_intervals: 20_000,
        initial_pieces: pieces,
    };
    let head = integrate(|eta| g(eta) * Complex64::from_polar(1.0, kappa * eta), 0.0, 1.0, &opts)?;
    let filon = FilonLegendre::new(24);
    let mut tail = Complex64::new(0.0, 0.0);
    let mut a = 1.0;
    while a < 45.0 {
        let b = a + 1.0;
        tail += filon.panel(&mut g, a, b, kappa);
        a = b;
    }
    let total = head.value + tail;
    if !total.re.is_finite() {
        return Err(Error::QuadratureFailure {
            context: "K_0 evaluation failed inside the Fourier-side integral".into(),
            estimate: f64::NAN,
            error: f64::NAN,
        });
    }
    Ok(total / (2.0 * PI * PI * r))
}

/// 4D analogue `E_tau(x) = (cos(tau r) - x_1 sin(tau r) / r) / (2 pi |x|^2)`.
pub fn fundamental_solution_4d(tau: f64, x1: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain("4D closed form needs r > 0".into()));
    }
    let x2 = x1 * x1 + r * r;
    Ok(((tau * r).cos() - x1 * (tau * r).sin() / r) / (2.0 * PI * x2))
}

/// Sampling plan for bound verification: `x_1` uniform, `|x'|` log-uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub samples_per_tau: usize,
    pub x1_range: [f64; 2],
    pub r_range: [f64; 2],
    pub seed: u64,
    pub tol: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            samples_per_tau: 2000,
            x1_range: [-10.0, 10.0],
            r_range: [1e-2, 10.0],
            seed: 0,
            tol: 1e-9,
        }
    }
}

/// One evaluated sample of a bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub tau: f64,
    pub x1: f64,
    pub r: f64,
    pub value: f64,
    /// `|E| |x|`.
    pub ratio: f64,
}

/// A numerically verified inequality `sup ratio <= upper` together with the
/// requirement that `ratio >= lower` somewhere in the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub quantity: String,
    pub upper_bound: f64,
    pub lower_bound_somewhere: f64,
    pub tolerance: f64,
    pub sample_count: usize,
    pub max_ratio: f64,
    pub argmax: Option<BoundSample>,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub passed: bool,
    #[serde(skip)]
    pub samples: Vec<BoundSample>,
}

/// Draws the sample points for one `tau`.
pub fn draw_samples(spec: &SampleSpec, tau_index: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(tau_index as u64 * 0x9E37_79B9));
    let [xa, xb] = spec.x1_range;
    let [ra, rb] = spec.r_range;
    (0..spec.samples_per_tau)
        .map(|_| {
            let x1 = xa + (xb - xa) * rng.random::<f64>();
            let t: f64 = rng.random();
            let r = (ra.ln() + (rb.ln() - ra.ln()) * (1.0 - t)).exp();
            (x1, r)
        })
        .collect()
}

/// Evaluates `|E_tau(x)| |x|` over the sample plan for every `tau`.
pub fn verify_pointwise_bound(tau_list: &[f64], spec: &SampleSpec, tolerance: f64) -> Result<BoundReport> {
    let mut samples = Vec::new();
    for (ti, &tau) in tau_list.iter().enumerate() {
        let pts = draw_samples(spec, ti);
        let evaluated: Vec<Result<BoundSample>> = pts
            .par_iter()
            .map(|&(x1, r)| {
                let value = fundamental_solution_3d(tau, x1, r, spec.tol).map_err(|e| match e {
                    Error::QuadratureFailure { context, estimate, error } => Error::QuadratureFailure {
                        context: format!("{context} at tau = {tau}, x1 = {x1}, r = {r}"),
                        estimate,
                        error,
                    },
                    other => other,
                })?;
                let norm = (x1 * x1 + r * r).sqrt();
                Ok(BoundSample {
                    tau,
                    x1,
                    r,
                    value,
                    ratio: value.abs() * norm,
                })
            })
            .collect();
        for s in evaluated {
            samples.push(s?);
        }
    }
    let argmax = samples.iter().copied().max_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let max_ratio = argmax.map_or(0.0, |s| s.ratio);
    let upper_ok = max_ratio <= POINTWISE_BOUND + tolerance;
    let lower_ok = samples.is_empty() || max_ratio >= FREE_PROFILE - tolerance;
    Ok(BoundReport {
        quantity: "|E_tau(x)| |x|".into(),
        upper_bound: POINTWISE_BOUND,
        lower_bound_somewhere: FREE_PROFILE,
        tolerance,
        sample_count: samples.len(),
        max_ratio,
        argmax,
        upper_ok,
        lower_ok,
        passed: upper_ok && lower_ok,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((POINTWISE_BOUND - 3.0 * 2f64.sqrt() / (4.0 * PI)).abs() < 1e-16);
        assert!((FREE_PROFILE - 1.0 / (4.0 * PI)).abs() < 1e-17);
    }

    #[test]
    fn symbol_examples() {
        let z = [Complex64::new(1.0, 2.0), Complex64::new(0.0, 1.0), Complex64::new(3.0, 0.0)];
        assert_eq!(conjugated_symbol(ConjugatedSymbolParams::Z(z), [0.0; 3]), Complex64::new(0.0, 0.0));
        let p = conjugated_symbol(ConjugatedSymbolParams::Tau(1.0), [1.0, 0.0, 0.0]);
        assert!((p - Complex64::new(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn canonical_reduction_rejects_bad_vectors() {
        let zero = [Complex64::new(0.0, 0.0); 3];
        assert!(matches!(z_to_canonical(zero), Err(Error::DegenerateZ(_))));
        let bad = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(0.0, 0.0)];
        assert!(matches!(z_to_canonical(bad), Err(Error::DegenerateZ(_))));
    }

    #[test]
    fn four_dimensional_examples() {
        let v = fundamental_solution_4d(3.0, 0.0, 0.7).unwrap();
        assert!((v - (2.1f64).cos() / (2.0 * PI * 0.49)).abs() < 1e-15);
        let v = fundamental_solution_4d(0.0, 1.0, 2.0).unwrap();
        assert!((v - 1.0 / (2.0 * PI * 5.0)).abs() < 1e-15);
        assert!(fundamental_solution_4d(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn tau_zero_and_origin() {
        let v = fundamental_solution_3d(0.0, 3.0, 4.0, 1e-10).unwrap();
        assert!((v - 1.0 / (20.0 * PI)).abs() < 1e-16);
        assert!(matches!(fundamental_solution_3d(1.0, 0.0, 0.0, 1e-10), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_tau_list_gives_empty_report() {
        let rep = verify_pointwise_bound(&[], &SampleSpec::default(), 1e-3).unwrap();
        assert_eq!(rep.sample_count, 0);
        assert!(rep.passed);
    }
}
