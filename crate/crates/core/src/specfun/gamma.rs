//! Complex log-Gamma by the Lanczos approximation (g = 7, 9 terms).

use num_complex::Complex64;
use std::f64::consts::PI;

const G: f64 = 7.0;
const COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `log Gamma(z)` up to an additive multiple of `2 pi i`.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // Reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z).
        let s = (z * PI).sin();
        return Complex64::new(PI.ln(), 0.0) - s.ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = Complex64::new(COEF[0], 0.0);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

pub fn gamma(z: Complex64) -> Complex64 {
    ln_gamma(z).exp()
}

/// True when `z` is a pole of Gamma (a non-positive integer).
pub fn is_gamma_pole(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_and_half_integers() {
        let mut f = 1.0;
        for n in 1..15 {
            let g = gamma(Complex64::new(n as f64, 0.0));
            assert!((g.re - f).abs() < 1e-13 * f && g.im.abs() < 1e-13 * f);
            f *= n as f64;
        }
        let g = gamma(Complex64::new(0.5, 0.0));
        assert!((g.re - PI.sqrt()).abs() < 1e-14);
        let g = gamma(Complex64::new(-0.5, 0.0));
        assert!((g.re + 2.0 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn recurrence_on_complex_points() {
        for &(a, b) in &[(0.3, 1.7), (2.5, -3.0), (-1.2, 0.4), (7.0, 10.0)] {
            let z = Complex64::new(a, b);
            let lhs = gamma(z + 1.0);
            let rhs = z * gamma(z);
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm());
        }
    }

    #[test]
    fn modulus_on_imaginary_axis() {
        // |Gamma(i y)|^2 = pi / (y sinh(pi y))
        for y in [0.5, 1.0, 3.0] {
            let g = gamma(Complex64::new(0.0, y)).norm_sqr();
            let exact = PI / (y * (PI * y).sinh());
            assert!((g - exact).abs() < 1e-13 * exact);
        }
    }
}
