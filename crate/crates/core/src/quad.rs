//! Globally adaptive Gauss-Kronrod (10/21 point) quadrature for complex
//! valued integrands on finite intervals.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_791_725_826,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Number of equal pieces the range is cut into before adapting.
    pub initial_pieces: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 2000,
            initial_pieces: 1,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

/// Integral estimate with its error bound and evaluation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadValue {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod panel; the error is |K21 - G10|.
pub fn kronrod21<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut kron = fc * WGK[10];
    for j in 0..5 {
        let k = 2 * j + 1;
        let dx = hl * XGK[k];
        let s = f(c - dx) + f(c + dx);
        gauss += s * WG[j];
        kron += s * WGK[k];
    }
    for j in 0..5 {
        let k = 2 * j;
        let dx = hl * XGK[k];
        kron += (f(c - dx) + f(c + dx)) * WGK[k];
    }
    let value = kron * hl;
    let error = ((kron - gauss) * hl).norm();
    (value, error)
}

/// Adaptive integration over `[a, b]`, bisecting the panel with the largest
/// error until `error <= max(abs_tol, rel_tol |I|)`.
pub fn integrate<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadValue> {
    integrate_with_breaks(&mut f, &[a, b], opts)
}

/// Adaptive integration over consecutive intervals `breaks[i]..breaks[i+1]`.
pub fn integrate_with_breaks<F: FnMut(f64) -> Complex64>(
    f: &mut F,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<QuadValue> {
    if breaks.len() < 2 {
        return Ok(QuadValue {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    let pieces = opts.initial_pieces.max(1);
    let mut evals = 0usize;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo == hi {
            continue;
        }
        for p in 0..pieces {
            let a = lo + (hi - lo) * p as f64 / pieces as f64;
            let b = if p + 1 == pieces {
                hi
            } else {
                lo + (hi - lo) * (p + 1) as f64 / pieces as f64
            };
            let (value, error) = kronrod21(f, a, b);
            evals += 21;
            total += value;
            err += error;
            heap.push(Piece { a, b, value, error });
        }
    }
    let target = |total: Complex64| opts.abs_tol.max(opts.rel_tol * total.norm());
    while err > target(total) {
        if !total.re.is_finite() || !total.im.is_finite() {
            return Err(Error::QuadratureFailure {
                context: "non-finite integrand".into(),
                estimate: total.norm(),
                error: err,
            });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure {
                context: format!("interval budget {} exhausted", opts.max_intervals),
                estimate: total.norm(),
                error: err,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Cannot split further in floating point; accept what is there.
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            err -= worst.error;
            continue;
        }
        let (v1, e1) = kronrod21(f, worst.a, mid);
        let (v2, e2) = kronrod21(f, mid, worst.b);
        evals += 42;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to remove drift from the incremental updates.
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    for p in heap.iter() {
        value += p.value;
        error += p.error;
    }
    Ok(QuadValue {
        value,
        error,
        evaluations: evals,
    })
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<(f64, f64)> {
    let q = integrate(|x| Complex64::new(f(x), 0.0), a, b, opts)?;
    Ok((q.value.re, q.error))
}

/// Integral over `[a, inf)` through the map `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    opts: &QuadOptions,
) -> Result<QuadValue> {
    integrate(
        |t| {
            let s = 1.0 - t;
            let x = a + t / s;
            let v = f(x);
            if v == Complex64::new(0.0, 0.0) {
                v
            } else {
                v / (s * s)
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Spherical Bessel functions `j_0..=j_kmax` at `x >= 0`.
pub fn spherical_bessel_j(kmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < 1e-3 {
        // Leading two terms of the power series.
        let mut lead = 1.0;
        for k in 0..=kmax {
            if k > 0 {
                lead *= x / (2 * k + 1) as f64;
            }
            out[k] = lead * (1.0 - x * x / (2.0 * (2 * k + 3) as f64));
        }
        return out;
    }
    let j0 = x.sin() / x;
    if x > kmax as f64 {
        out[0] = j0;
        if kmax >= 1 {
            out[1] = x.sin() / (x * x) - x.cos() / x;
        }
        for k in 1..kmax {
            out[k + 1] = (2 * k + 1) as f64 / x * out[k] - out[k - 1];
        }
        return out;
    }
    // Miller's downward recurrence, normalized by j_0.
    let start = kmax + 20 + (x as usize);
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut tmp = vec![0.0; start + 1];
    tmp[start] = j;
    for k in (1..=start).rev() {
        let jm1 = (2 * k + 1) as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        tmp[k - 1] = j;
        if j.abs() > 1e250 {
            for t in tmp.iter_mut().skip(k - 1) {
                *t *= 1e-250;
            }
            jp1 *= 1e-250;
            j *= 1e-250;
        }
    }
    let scale = j0 / tmp[0];
    for k in 0..=kmax {
        out[k] = tmp[k] * scale;
    }
    out
}

/// Filon-type panel rule for `int_a^b g(t) e^{i kappa t} dt`: `g` is
/// projected onto Legendre polynomials of degree `< nodes` with Gauss
/// points and the oscillatory moments `2 i^k j_k(omega)` are exact.
pub struct FilonLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `P_k(t_i)` for each node.
    legendre: Vec<Vec<f64>>,
}

impl FilonLegendre {
    pub fn new(nodes: usize) -> Self {
        let (x, w) = gauss_legendre(nodes);
        let legendre = x
            .iter()
            .map(|&t| {
                let mut p = vec![0.0; nodes];
                p[0] = 1.0;
                if nodes > 1 {
                    p[1] = t;
                }
                for k in 2..nodes {
                    p[k] = ((2 * k - 1) as f64 * t * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64;
                }
                p
            })
            .collect();
        FilonLegendre {
            nodes: x,
            weights: w,
            legendre,
        }
    }

    pub fn panel<F: FnMut(f64) -> Complex64>(&self, g: &mut F, a: f64, b: f64, kappa: f64) -> Complex64 {
        let n = self.nodes.len();
        let c = 0.5 * (a + b);
        let hl = 0.5 * (b - a);
        let mut coef = vec![Complex64::new(0.0, 0.0); n];
        for (i, &t) in self.nodes.iter().enumerate() {
            let gv = g(c + hl * t) * self.weights[i];
            for k in 0..n {
                coef[k] += gv * self.legendre[i][k];
            }
        }
        let omega = kappa * hl;
        let j = spherical_bessel_j(n - 1, omega.abs());
        let mut acc = Complex64::new(0.0, 0.0);
        let mut ik = Complex64::new(1.0, 0.0);
        for k in 0..n {
            // Odd moments change sign with omega.
            let jk = if omega < 0.0 && k % 2 == 1 { -j[k] } else { j[k] };
            acc += coef[k] * (k as f64 + 0.5) * 2.0 * ik * jk;
            ik *= Complex64::new(0.0, 1.0);
        }
        acc * hl * Complex64::from_polar(1.0, kappa * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(
            |x| Complex64::new(x.powi(20), x),
            -1.0,
            2.0,
            &QuadOptions::default(),
        )
        .unwrap();
        let exact = (2f64.powi(21) + 1.0) / 21.0;
        assert!((q.value.re - exact).abs() < 1e-10 * exact);
        assert!((q.value.im - 1.5).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        let (v, _) = integrate_real(|x| 1.0 / x.sqrt(), 0.0, 1.0, &QuadOptions::with_tol(1e-12, 1e-12))
            .unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite_exponential() {
        let q = integrate_to_infinity(|x| Complex64::new((-x).exp(), 0.0), 0.0, &QuadOptions::default())
            .unwrap();
        assert!((q.value.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let opts = QuadOptions {
            max_intervals: 3,
            ..QuadOptions::with_tol(1e-15, 1e-15)
        };
        let r = integrate(|x| Complex64::new((50.0 * x).sin() / x.sqrt(), 0.0), 0.0, 10.0, &opts);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((s - 2.0 / 23.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spherical_bessel_closed_forms() {
        for &x in &[0.0005, 0.3, 2.0, 7.5, 40.0] {
            let j = spherical_bessel_j(3, x);
            let j2 = if x < 0.01 {
                x * x / 15.0 * (1.0 - x * x / 14.0)
            } else {
                (3.0 / (x * x) - 1.0) * x.sin() / x - 3.0 * x.cos() / (x * x)
            };
            assert!((j[0] - x.sin() / x).abs() < 1e-13);
            assert!((j[2] - j2).abs() < 1e-9 * (1.0 + j2.abs()), "{x}: {} {}", j[2], j2);
        }
    }

    #[test]
    fn filon_matches_closed_form() {
        // int_0^3 e^{-t} e^{i 40 t} dt
        let f = FilonLegendre::new(24);
        let k = 40.0;
        let mut v = Complex64::new(0.0, 0.0);
        for p in 0..3 {
            v += f.panel(&mut |t| Complex64::new((-t).exp(), 0.0), p as f64, p as f64 + 1.0, k);
        }
        let z = Complex64::new(-1.0, k);
        let exact = ((z * 3.0).exp() - 1.0) / z;
        assert!((v - exact).norm() < 1e-13);
    }
}
