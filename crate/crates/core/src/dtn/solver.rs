//! Linear algebra for the interior system `(-Laplacian_h + V) u = b` of the
//! 7-point stencil: matrix-free Jacobi-preconditioned CG, preconditioned
//! MINRES for the indefinite case, and a banded `L D L^T` factorization.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Banded factorization below `direct_below` cells per axis, CG above.
    #[default]
    Auto,
    Direct,
    Cg,
    Minres,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub backend: Backend,
    pub direct_below: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 20_000,
            backend: Backend::Auto,
            direct_below: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub backend: Backend,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Interior operator on an `m^3` block of unknowns (`m = n - 1`) with
/// spacing `h`: diagonal `6 / h^2 + V`, neighbours `-1 / h^2`.
#[derive(Debug, Clone)]
pub struct InteriorOperator {
    pub m: usize,
    pub inv_h2: f64,
    pub potential: Vec<f64>,
}

fn dotc(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

impl InteriorOperator {
    pub fn len(&self) -> usize {
        self.m.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn diagonal(&self, p: usize) -> f64 {
        6.0 * self.inv_h2 + self.potential[p]
    }

    /// Gershgorin bound on `||A||_2`.
    pub fn norm_bound(&self) -> f64 {
        self.potential
            .iter()
            .map(|v| (6.0 * self.inv_h2 + v).abs() + 6.0 * self.inv_h2)
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[C], y: &mut [C]) {
        let m = self.m;
        let s = self.inv_h2;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let p = (i * m + j) * m + k;
                    let mut nb = C::new(0.0, 0.0);
                    if i > 0 {
                        nb += x[p - m * m];
                    }
                    if i + 1 < m {
                        nb += x[p + m * m];
                    }
                    if j > 0 {
                        nb += x[p - m];
                    }
                    if j + 1 < m {
                        nb += x[p + m];
                    }
                    if k > 0 {
                        nb += x[p - 1];
                    }
                    if k + 1 < m {
                        nb += x[p + 1];
                    }
                    y[p] = x[p] * self.diagonal(p) - nb * s;
                }
            }
        }
    }

    fn residual(&self, x: &[C], b: &[C]) -> f64 {
        let mut ax = vec![C::new(0.0, 0.0); x.len()];
        self.apply(x, &mut ax);
        let r: f64 = ax.iter().zip(b).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>().sqrt();
        let bn = nrm(b);
        if bn == 0.0 {
            r
        } else {
            r / bn
        }
    }
}

/// Outcome of an iterative method: converged, hit an indefinite direction,
/// or ran out of iterations.
enum Iterative {
    Converged(Vec<C>, usize),
    Indefinite,
    Exhausted(Vec<C>, usize),
}

fn pcg(a: &InteriorOperator, b: &[C], tol: f64, max_iter: usize) -> Iterative {
    let n = b.len();
    let dinv: Vec<f64> = (0..n).map(|p| 1.0 / a.diagonal(p)).collect();
    if dinv.iter().any(|d| !(*d > 0.0)) {
        return Iterative::Indefinite;
    }
    let bn = nrm(b);
    let mut x = vec![C::new(0.0, 0.0); n];
    if bn == 0.0 {
        return Iterative::Converged(x, 0);
    }
    let mut r = b.to_vec();
    let mut z: Vec<C> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dotc(&r, &z);
    let mut ap = vec![C::new(0.0, 0.0); n];
    for it in 1..=max_iter {
        a.apply(&p, &mut ap);
        let pap = dotc(&p, &ap).re;
        if !(pap > 0.0) {
            return Iterative::Indefinite;
        }
        let alpha = rz / pap;
        for q in 0..n {
            x[q] += alpha * p[q];
            r[q] -= alpha * ap[q];
        }
        if nrm(&r) <= tol * bn {
            return Iterative::Converged(x, it);
        }
        for q in 0..n {
            z[q] = r[q] * dinv[q];
        }
        let rz_new = dotc(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for q in 0..n {
            p[q] = z[q] + beta * p[q];
        }
    }
    Iterative::Exhausted(x, max_iter)
}

/// Preconditioned MINRES for Hermitian (here real symmetric) operators.
fn minres(a: &InteriorOperator, b: &[C], tol: f64, max_iter: usize) -> Iterative {
    let n = b.len();
    let zero = C::new(0.0, 0.0);
    let diag: Vec<f64> = (0..n).map(|p| a.diagonal(p)).collect();
    let precondition = diag.iter().all(|d| *d > 0.0);
    let minv = |r: &[C]| -> Vec<C> {
        if precondition {
            r.iter().zip(&diag).map(|(r, d)| r / d).collect()
        } else {
            r.to_vec()
        }
    };
    let mut x = vec![zero; n];
    let bn = nrm(b);
    if bn == 0.0 {
        return Iterative::Converged(x, 0);
    }
    let mut r1 = b.to_vec();
    let mut y = minv(&r1);
    let beta1 = dotc(&r1, &y).re.sqrt();
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![zero; n];
    let mut w2 = vec![zero; n];
    let mut v = vec![zero; n];
    let mut av = vec![zero; n];
    for it in 1..=max_iter {
        let s = 1.0 / beta;
        for q in 0..n {
            v[q] = y[q] * s;
        }
        a.apply(&v, &mut av);
        y.copy_from_slice(&av);
        if it >= 2 {
            let f = beta / oldb;
            for q in 0..n {
                y[q] -= r1[q] * f;
            }
        }
        let alfa = dotc(&v, &y).re;
        let f = alfa / beta;
        for q in 0..n {
            y[q] -= r2[q] * f;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        y = minv(&r2);
        oldb = beta;
        beta = dotc(&r2, &y).re.max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        for q in 0..n {
            let w1 = w2[q];
            w2[q] = w[q];
            w[q] = (v[q] - w1 * oldeps - w2[q] * delta) * denom;
            x[q] += w[q] * phi;
        }
        // phibar estimates the preconditioned residual; confirm with the true one.
        if phibar <= tol * beta1 || beta == 0.0 {
            if a.residual(&x, b) <= tol {
                return Iterative::Converged(x, it);
            }
            if beta == 0.0 {
                return Iterative::Exhausted(x, it);
            }
        }
    }
    Iterative::Exhausted(x, max_iter)
}

/// Banded `L D L^T` of the interior operator in natural ordering
/// (half-bandwidth `m^2`).
#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    /// `l[i * bw + (bw - (i - j))]` holds `L_ij` for `i - bw <= j < i`.
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdl {
    pub fn factor(a: &InteriorOperator) -> Result<Self> {
        let n = a.len();
        let m = a.m;
        let bw = (m * m).max(1);
        let entry = |i: usize, j: usize| -> f64 {
            // j < i within the band
            let d = i - j;
            if d == 1 && i % m != 0 || d == m && (i / m) % m != 0 || d == m * m {
                -a.inv_h2
            } else {
                0.0
            }
        };
        let mut l = vec![0.0; n * bw];
        let mut d = vec![0.0; n];
        let scale = a.norm_bound();
        let mut wrow = vec![0.0; bw];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                let mut s = entry(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= wrow[k - j0] * l[j * bw + (bw - (j - k))];
                }
                let lij = s / d[j];
                l[i * bw + (bw - (i - j))] = lij;
                wrow[j - j0] = lij * d[j];
            }
            let mut di = a.diagonal(i);
            for j in j0..i {
                di -= l[i * bw + (bw - (i - j))] * wrow[j - j0];
            }
            if di.abs() < 1e-13 * scale {
                return Err(Error::SolverDivergence(format!("tiny pivot {di:e} at row {i}")));
            }
            d[i] = di;
        }
        Ok(BandedLdl { n, bw, l, d })
    }

    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let (n, bw) = (self.n, self.bw);
        let mut y = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = y[i];
            for j in j0..i {
                s -= y[j] * self.l[i * bw + (bw - (i - j))];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..(i + bw + 1).min(n) {
                s -= y[j] * self.l[j * bw + (bw - (j - i))];
            }
            y[i] = s;
        }
        y
    }
}

/// Solver bound to one interior operator.
#[derive(Debug, Clone)]
pub struct InteriorSolver {
    pub op: InteriorOperator,
    opts: SolverOptions,
    ldl: Option<BandedLdl>,
}

impl InteriorSolver {
    pub fn new(op: InteriorOperator, opts: SolverOptions) -> Self {
        let n_cells = op.m + 1;
        let want_direct = match opts.backend {
            Backend::Direct => true,
            Backend::Auto => n_cells < opts.direct_below,
            _ => false,
        };
        // A failed factorization (tiny pivot) leaves the iterative path.
        let ldl = if want_direct { BandedLdl::factor(&op).ok() } else { None };
        InteriorSolver { op, opts, ldl }
    }

    pub fn uses_direct(&self) -> bool {
        self.ldl.is_some()
    }

    pub fn solve(&self, b: &[C]) -> Result<(Vec<C>, SolveInfo)> {
        let tol = self.opts.tol;
        if let Some(ldl) = &self.ldl {
            let mut x = ldl.solve(b);
            let mut res = self.op.residual(&x, b);
            // One step of iterative refinement.
            if res > tol {
                let mut ax = vec![C::new(0.0, 0.0); x.len()];
                self.op.apply(&x, &mut ax);
                let r: Vec<C> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
                let dx = ldl.solve(&r);
                x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
                res = self.op.residual(&x, b);
            }
            if res <= tol.max(1e-13) {
                return Ok((
                    x,
                    SolveInfo {
                        backend: Backend::Direct,
                        iterations: 1,
                        relative_residual: res,
                    },
                ));
            }
        }
        if self.opts.backend != Backend::Minres {
            match pcg(&self.op, b, tol, self.opts.max_iter) {
                Iterative::Converged(x, it) => {
                    let res = self.op.residual(&x, b);
                    return Ok((
                        x,
                        SolveInfo {
                            backend: Backend::Cg,
                            iterations: it,
                            relative_residual: res,
                        },
                    ));
                }
                Iterative::Indefinite | Iterative::Exhausted(..) => {}
            }
        }
        match minres(&self.op, b, tol, self.opts.max_iter) {
            Iterative::Converged(x, it) => {
                let res = self.op.residual(&x, b);
                Ok((
                    x,
                    SolveInfo {
                        backend: Backend::Minres,
                        iterations: it,
                        relative_residual: res,
                    },
                ))
            }
            Iterative::Exhausted(x, it) => Err(Error::SolverDivergence(format!(
                "MINRES stopped after {it} iterations at relative residual {:e}",
                self.op.residual(&x, b)
            ))),
            Iterative::Indefinite => unreachable!("MINRES does not report indefiniteness"),
        }
    }

    /// Smallest-magnitude eigenvalue by inverse iteration from a fixed
    /// smooth start vector.
    pub fn smallest_eigenvalue(&self, iterations: usize) -> Result<f64> {
        let m = self.op.m;
        let n = self.op.len();
        let mut x: Vec<C> = (0..n)
            .map(|p| {
                let (i, j, k) = (p / (m * m), (p / m) % m, p % m);
                let t = |c: usize| ((c + 1) as f64 * std::f64::consts::PI / (m + 1) as f64).sin();
                C::new(t(i) * t(j) * t(k) + 1e-3 * (((p * 7919) % 101) as f64 / 101.0 - 0.5), 0.0)
            })
            .collect();
        let mut lambda = f64::INFINITY;
        for _ in 0..iterations {
            let xn = nrm(&x);
            x.iter_mut().for_each(|c| *c /= xn);
            let (y, _) = self.solve(&x)?;
            // Rayleigh quotient of A at y: <y, A y>/<y, y> = <y, x>/<y, y>.
            let yy = dotc(&y, &y).re;
            lambda = dotc(&y, &x).re / yy;
            x = y;
        }
        Ok(lambda)
    }
}
