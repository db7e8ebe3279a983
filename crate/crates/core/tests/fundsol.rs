use cgolab::fundsol::*;
use cgolab::quad::{integrate, QuadOptions};
use cgolab::specfun::{bessel_k, ComplexOrder};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const TOL: f64 = 1e-10;

#[test]
fn contour_and_fourier_routes_agree() {
    let pts = [
        (0.5, 0.7),
        (-1.3, 0.4),
        (2.0, 0.5),
        (0.0, 1.0),
        (-3.0, 1.5),
        (6.0, 0.2),
        (-6.0, 0.3),
        (0.05, 2.5),
        (-0.2, 0.05),
        (9.0, 4.0),
    ];
    for (x1, r) in pts {
        let b = e1(x1, r, TOL).unwrap();
        let a = e1_fourier_route(x1, r, TOL).unwrap().re;
        assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "({x1}, {r}): contour {b}, fourier {a}");
    }
}

#[test]
fn known_value_from_scratch_quadrature() {
    // Direct truncated Fourier-side quadrature with K_0 from the library:
    // r = 1 gives an e^{-s} envelope, so [0, 60] suffices.
    let (x1, r) = (0.5, 1.0);
    let opts = QuadOptions {
        initial_pieces: 60,
        ..QuadOptions::with_tol(1e-15, 1e-13)
    };
    let q = integrate(
        |s| Complex64::from_polar(1.0, x1 * s) * bessel_k(ComplexOrder::real(0.0), Complex64::new(r * s, r)).unwrap(),
        0.0,
        60.0,
        &opts,
    )
    .unwrap();
    let direct = q.value.re / (2.0 * PI * PI);
    assert!((direct - e1(x1, r, TOL).unwrap()).abs() < 1e-10);
}

#[test]
fn full_line_integral_is_real() {
    // The negative half-line is evaluated from its own integrand
    // e^{i x1 s} K_0(r sgn(s)(s + i)) at s < 0.
    for (x1, r) in [(0.7, 1.0), (-1.5, 2.0)] {
        let k0 = |w: Complex64| bessel_k(ComplexOrder::real(0.0), w).unwrap();
        let opts = QuadOptions {
            initial_pieces: 40,
            ..QuadOptions::with_tol(1e-15, 1e-13)
        };
        let pos = integrate(|s| Complex64::from_polar(1.0, x1 * s) * k0(Complex64::new(r * s, r)), 0.0, 50.0, &opts).unwrap();
        let neg = integrate(
            |s| Complex64::from_polar(1.0, x1 * s) * k0(-Complex64::new(s, 1.0) * r),
            -50.0,
            0.0,
            &opts,
        )
        .unwrap();
        let total = (pos.value + neg.value) / (4.0 * PI * PI);
        assert!(total.im.abs() < 1e-12, "imaginary residue {}", total.im);
        assert!((total.re - e1(x1, r, TOL).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn axis_limit_is_continuous() {
    for x1 in [0.7, -0.7, -3.0, 2.5, -0.05] {
        let at0 = e1(x1, 0.0, TOL).unwrap();
        let near = e1(x1, 1e-7, TOL).unwrap();
        assert!((at0 - near).abs() < 1e-5 * at0.abs().max(1e-3), "{x1}: {at0} vs {near}");
    }
}

#[test]
fn transverse_bound_on_the_plane_x1_zero() {
    for r in [0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 50.0] {
        let v = e1(0.0, r, TOL).unwrap();
        assert!(v.abs() <= 1.0 / (4.0 * PI * r) + TOL, "r = {r}: {v}");
    }
}

#[test]
fn scaling_law_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 1e-10;
    for _ in 0..1000 {
        let tau = 0.5 + 15.5 * rng.random::<f64>();
        let x1 = -10.0 + 20.0 * rng.random::<f64>();
        let r = (1e-2f64.ln() + (10f64.ln() - 1e-2f64.ln()) * rng.random::<f64>()).exp();
        let scaled = fundamental_solution_3d(tau, x1, r, tol).unwrap();
        let direct = fundamental_solution_3d_unscaled(tau, x1, r, tol).unwrap();
        assert!((scaled - direct).abs() < 2.0 * tol, "tau {tau} x1 {x1} r {r}: {scaled} {direct}");
    }
}

#[test]
fn reflection_in_tau() {
    let a = fundamental_solution_3d(-2.0, 0.8, 0.4, TOL).unwrap();
    let b = fundamental_solution_3d(2.0, -0.8, 0.4, TOL).unwrap();
    assert_eq!(a, b);
}

#[test]
fn canonical_reduction_reproduces_symbol() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = [1.0 / 3f64.sqrt(); 3];
    let f = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let z = cgo_vector_from_frame(2.7, e, f).unwrap();
    for _ in 0..100 {
        let xi: [f64; 3] = std::array::from_fn(|_| -5.0 + 10.0 * rng.random::<f64>());
        let lhs = conjugated_symbol(ConjugatedSymbolParams::Z(z.z), xi);
        let u = z.rotate(xi);
        let eta = [u[0] + z.v[0], u[1] + z.v[1], u[2] + z.v[2]];
        let rhs = conjugated_symbol(ConjugatedSymbolParams::Tau(z.tau), eta);
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }
    let utu: Vec<f64> = (0..9)
        .map(|k| {
            let (i, j) = (k / 3, k % 3);
            (0..3).map(|m| z.u[m][i] * z.u[m][j]).sum()
        })
        .collect();
    for (k, v) in utu.iter().enumerate() {
        let id = if k % 4 == 0 { 1.0 } else { 0.0 };
        assert!((v - id).abs() < 1e-12);
    }
    let vnorm = z.v.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!((vnorm - z.tau).abs() < 1e-12);
}

#[test]
fn canonical_example_tau_three() {
    let z = [Complex64::new(0.0, 3.0), Complex64::new(3.0, 0.0), Complex64::new(0.0, 0.0)];
    let c = z_to_canonical(z).unwrap();
    assert!((c.tau - 3.0).abs() < 1e-14);
    assert_eq!(c.u, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
}

#[test]
fn kernel_depends_on_transverse_radius_only() {
    let z = z_to_canonical([Complex64::new(0.0, 1.5), Complex64::new(1.5, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
    let (x1, r) = (0.6, 0.9);
    let reference = fundamental_solution_z(&z, [x1, r, 0.0], TOL).unwrap().norm();
    for k in 1..8 {
        let th = k as f64 * 0.7;
        let v = fundamental_solution_z(&z, [x1, r * th.cos(), r * th.sin()], TOL).unwrap().norm();
        assert!((v - reference).abs() < 1e-12);
    }
}

#[test]
fn four_dimensional_bound_fails() {
    // The 3D-style bound |E| |x|^{n-2} <= C fails in 4D: near the x_1 axis
    // |E_tau| |x|^2 grows like tau |x_1| / (2 pi).
    let tau = 100.0;
    let profile = 1.0 / (2.0 * PI);
    let mut found = 0;
    for k in 1..=50 {
        let x1 = 0.1 * k as f64;
        let r = 1e-4;
        let v = fundamental_solution_4d(tau, x1, r).unwrap();
        if v.abs() * (x1 * x1 + r * r) > 10.0 * profile {
            found += 1;
        }
    }
    assert!(found > 10);
    let v = fundamental_solution_4d(tau, 3.0, 1e-5).unwrap();
    assert!((v.abs() - tau / (2.0 * PI * 3.0)).abs() < 0.01 * tau / (2.0 * PI * 3.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pointwise_bound_holds(x1 in -20.0f64..20.0, lr in -4.0f64..3.0) {
        let r = 10f64.powf(lr);
        let v = e1(x1, r, TOL).unwrap();
        prop_assert!(v.abs() * (x1 * x1 + r * r).sqrt() <= POINTWISE_BOUND);
    }

    #[test]
    fn rotated_z_keeps_tau(a in 0.0f64..6.3, b in 0.0f64..6.3, s in 0.1f64..20.0) {
        let e = [a.cos() * b.sin(), a.sin() * b.sin(), b.cos()];
        let t = if e[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let d = e[0] * t[0] + e[1] * t[1] + e[2] * t[2];
        let mut f = [t[0] - d * e[0], t[1] - d * e[1], t[2] - d * e[2]];
        let n = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
        f.iter_mut().for_each(|c| *c /= n);
        let z = cgo_vector_from_frame(s, e, f).unwrap();
        prop_assert!((z.tau - s).abs() < 1e-12 * s);
    }
}
