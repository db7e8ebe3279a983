//! Kato norm `sup_x int |V(y)| / |x - y| dy`, its modulus
//! `eta(r) = sup_x int_{|x - y| < r} |V(y)| / |x - y| dy`, mollification and
//! the small-plus-bounded splitting.
//!
//! The supremum is searched in two stages. A lattice over the support box
//! (dilated by [`KatoOptions::dilate`]) gives a cheap estimate of the
//! potential at every node through an FFT convolution with a cell-averaged
//! `1/|x|` kernel. The best nodes, together with nodes where `V` is not
//! finite, are then evaluated with a spherical rule centred at the node and
//! refined by a shrinking pattern search.

use super::potential::{Formula, PotentialSpec, SupportBox};
use crate::error::{Error, Result};
use crate::fourier::{Grid, Spectral};
use crate::quad::gauss_legendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `int_{[-1/2, 1/2]^3} dy / |y|`.
pub const UNIT_CELL_INVERSE_DISTANCE: f64 = 2.380_077_363_979_553;

/// Spherical product rule around a centre `x`.
///
/// Radii use `rho = R exp(1 - e^v)`, so both bounded integrands (decaying
/// like `rho^2`) and integrands with `|log rho|^{-k}` tails are resolved with
/// a modest number of Gauss panels in `v`. The polar angle is measured from
/// the `x_1` axis; on `[0, polar_split]` (and its mirror) it uses the same map
/// as the radius when `polar_tail_panel > 0`, which resolves potentials
/// singular along that axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereRule {
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    /// Panel width in the radial variable `v`.
    pub radial_panel: f64,
    /// Smallest radius, relative to the outer radius.
    pub rho_min: f64,
    /// Gauss panels on `[polar_split, pi/2]`.
    pub polar_panels: usize,
    pub polar_split: f64,
    /// Panel width of the mapped variable on `[0, polar_split]`; `<= 0`
    /// uses one plain Gauss panel there.
    pub polar_tail_panel: f64,
    pub theta_min: f64,
    pub azimuth: usize,
}

impl Default for SphereRule {
    fn default() -> Self {
        SphereRule {
            order: 8,
            radial_panel: 0.25,
            rho_min: 1e-300,
            polar_panels: 4,
            polar_split: 0.25,
            polar_tail_panel: 0.5,
            theta_min: 1e-300,
            azimuth: 16,
        }
    }
}

impl SphereRule {
    /// A cheap rule for bounded, smooth potentials.
    pub fn coarse() -> Self {
        SphereRule {
            order: 6,
            radial_panel: 0.5,
            rho_min: 1e-8,
            polar_panels: 3,
            polar_split: 0.25,
            polar_tail_panel: 0.0,
            theta_min: 0.0,
            azimuth: 8,
        }
    }

    /// Directions `omega` and weights including `sin(theta)`, summing to
    /// `4 pi` up to the polar truncation.
    fn directions(&self) -> Vec<([f64; 3], f64)> {
        let (gx, gw) = gauss_legendre(self.order);
        let mut polar: Vec<(f64, f64)> = Vec::new(); // (theta, weight) on (0, pi/2]
        let split = self.polar_split.clamp(0.0, 0.5 * PI);
        let pw = (0.5 * PI - split) / self.polar_panels.max(1) as f64;
        for p in 0..self.polar_panels.max(1) {
            let a = split + p as f64 * pw;
            for (x, w) in gx.iter().zip(&gw) {
                polar.push((a + 0.5 * pw * (x + 1.0), 0.5 * pw * w));
            }
        }
        if split > 0.0 {
            if self.polar_tail_panel > 0.0 && self.theta_min > 0.0 {
                // theta = split exp(1 - e^w)
                let wmax = (1.0 + (split / self.theta_min).ln()).ln();
                let np = (wmax / self.polar_tail_panel).ceil().max(1.0) as usize;
                let step = wmax / np as f64;
                for p in 0..np {
                    for (x, w) in gx.iter().zip(&gw) {
                        let t = (p as f64 + 0.5 * (x + 1.0)) * step;
                        let theta = split * (1.0 - t.exp()).exp();
                        polar.push((theta, 0.5 * step * w * theta * t.exp()));
                    }
                }
            } else {
                for (x, w) in gx.iter().zip(&gw) {
                    polar.push((0.5 * split * (x + 1.0), 0.5 * split * w));
                }
            }
        }
        let na = self.azimuth.max(1);
        let mut out = Vec::with_capacity(2 * polar.len() * na);
        for &(theta, w) in &polar {
            let (s, c) = theta.sin_cos();
            for mirror in [1.0, -1.0] {
                for k in 0..na {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / na as f64;
                    let (sp, cp) = phi.sin_cos();
                    out.push(([mirror * c, s * cp, s * sp], w * s * 2.0 * PI / na as f64));
                }
            }
        }
        out
    }
}

/// Distances along the ray `x + rho omega` at which the formula jumps.
fn ray_breaks(f: &Formula, x: [f64; 3], omega: [f64; 3], out: &mut Vec<f64>) {
    match f {
        Formula::Ball { radius, center, .. } => {
            // |x - c + rho omega|^2 = radius^2
            let d: [f64; 3] = std::array::from_fn(|a| x[a] - center[a]);
            let b: f64 = (0..3).map(|a| d[a] * omega[a]).sum();
            let c: f64 = (0..3).map(|a| d[a] * d[a]).sum::<f64>() - radius * radius;
            let disc = b * b - c;
            if disc > 0.0 {
                let s = disc.sqrt();
                for rho in [-b - s, -b + s] {
                    if rho > 0.0 {
                        out.push(rho);
                    }
                }
            }
        }
        Formula::Scaled { inner, .. } | Formula::Truncated { inner, .. } => ray_breaks(inner, x, omega, out),
        Formula::Sum { terms } => terms.iter().for_each(|t| ray_breaks(t, x, omega, out)),
        _ => {}
    }
}

fn farthest_corner(b: &SupportBox, x: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| {
            let d = (x[a] - b.lo[a]).abs().max((x[a] - b.hi[a]).abs());
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `int |V(y)| / |x - y| dy` and its restrictions to `|x - y| < r` for each
/// `r` in `radii` (any order). Non-finite values of `V` count as zero.
pub fn sphere_integral(v: &PotentialSpec, x: [f64; 3], radii: &[f64], rule: &SphereRule) -> (f64, Vec<f64>) {
    if v.is_zero() || v.support.is_empty() {
        return (0.0, vec![0.0; radii.len()]);
    }
    let big_r = farthest_corner(&v.support, x);
    let (gx, gw) = gauss_legendre(rule.order);
    let dirs = rule.directions();
    let vmap = |rho: f64| (1.0 + (big_r / rho).ln()).ln();
    let vmax = vmap(big_r * rule.rho_min);
    let mut total = 0.0;
    let mut partial = vec![0.0; radii.len()];
    let mut breaks = Vec::new();
    for (omega, wdir) in &dirs {
        breaks.clear();
        ray_breaks(&v.formula, x, *omega, &mut breaks);
        breaks.extend(radii.iter().copied());
        let mut knots: Vec<f64> = breaks
            .iter()
            .filter(|&&r| r > big_r * rule.rho_min && r < big_r)
            .map(|&r| vmap(r))
            .collect();
        knots.push(0.0);
        knots.push(vmax);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        for pair in knots.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let np = ((b - a) / rule.radial_panel).ceil().max(1.0) as usize;
            let step = (b - a) / np as f64;
            let mut seg = 0.0;
            for p in 0..np {
                for (t, w) in gx.iter().zip(&gw) {
                    let vv = a + (p as f64 + 0.5 * (t + 1.0)) * step;
                    let ev = vv.exp();
                    let rho = big_r * (1.0 - ev).exp();
                    let y = [x[0] + rho * omega[0], x[1] + rho * omega[1], x[2] + rho * omega[2]];
                    let val = v.eval(y).abs();
                    if val.is_finite() {
                        // int rho |V| drho with drho = rho e^v dv
                        seg += 0.5 * step * w * rho * rho * ev * val;
                    }
                }
            }
            seg *= wdir;
            total += seg;
            // The segment lies inside |x - y| < r iff its outer end does.
            let outer = big_r * (1.0 - a.exp()).exp();
            for (k, &r) in radii.iter().enumerate() {
                if outer <= r * (1.0 + 1e-12) {
                    partial[k] += seg;
                }
            }
        }
    }
    for (k, &r) in radii.iter().enumerate() {
        if r >= big_r {
            partial[k] = total;
        }
    }
    (total, partial)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoOptions {
    /// Lattice nodes per axis on each side of the centre.
    pub grid_half: usize,
    /// Dilation of the support box for candidate points.
    pub dilate: f64,
    /// Best lattice nodes passed to the spherical rule.
    pub top_candidates: usize,
    /// Cap on lattice nodes with non-finite `V` used as candidates.
    pub singular_candidates: usize,
    /// Step halvings of the pattern search.
    pub refine_rounds: usize,
    /// A stencil step gaining more than `tol` (relative) moves the centre
    /// instead of halving the step.
    pub tol: f64,
    /// Moves allowed before the search is declared unstable.
    pub max_moves: usize,
    pub rule: SphereRule,
    /// Radii of the modulus table.
    pub modulus_radii: Vec<f64>,
}

impl Default for KatoOptions {
    fn default() -> Self {
        KatoOptions {
            grid_half: 16,
            dilate: 1.0,
            top_candidates: 4,
            singular_candidates: 16,
            refine_rounds: 3,
            tol: 1e-3,
            max_moves: 24,
            rule: SphereRule::default(),
            modulus_radii: (1..=10).map(|k| 2f64.powi(-k)).collect(),
        }
    }
}

impl KatoOptions {
    pub fn coarse() -> Self {
        KatoOptions {
            grid_half: 12,
            top_candidates: 2,
            singular_candidates: 0,
            refine_rounds: 2,
            rule: SphereRule::coarse(),
            modulus_radii: Vec::new(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoReport {
    pub norm: f64,
    /// `(r, eta(r))` with `r` decreasing.
    pub modulus: Vec<(f64, f64)>,
    pub argmax: [f64; 3],
    /// Largest lattice estimate.
    pub lattice_estimate: f64,
    /// Centres evaluated with the spherical rule.
    pub evaluations: usize,
    /// Relative gain of the last stencil evaluation.
    pub last_gain: f64,
}

struct Candidate {
    x: [f64; 3],
    total: f64,
    partial: Vec<f64>,
}

/// Lattice estimate of `int |V| / |x - y|` at every node; returns the
/// node coordinates' origin, spacing, node count per axis and the values,
/// plus the nodes where `V` is not finite.
fn lattice_estimate(v: &PotentialSpec, opts: &KatoOptions) -> (Vec<[f64; 3]>, Vec<f64>, Vec<[f64; 3]>) {
    let sb = v.support.dilate(opts.dilate);
    let c: [f64; 3] = std::array::from_fn(|a| 0.5 * (sb.lo[a] + sb.hi[a]));
    let half = (0..3).map(|a| 0.5 * (sb.hi[a] - sb.lo[a])).fold(0.0, f64::max);
    let j = opts.grid_half.max(1);
    let h = half / j as f64;
    let n = 2 * j + 1;
    let m = 2 * n;
    let node = |i: usize, k: usize, l: usize| -> [f64; 3] {
        [
            c[0] + (i as f64 - j as f64) * h,
            c[1] + (k as f64 - j as f64) * h,
            c[2] + (l as f64 - j as f64) * h,
        ]
    };
    let points: Vec<[f64; 3]> = (0..n * n * n).map(|q| node(q / (n * n), (q / n) % n, q % n)).collect();
    let samples: Vec<f64> = points.par_iter().map(|&p| v.eval(p).abs()).collect();
    let singular: Vec<[f64; 3]> = points
        .iter()
        .zip(&samples)
        .filter(|(_, s)| !s.is_finite())
        .map(|(p, _)| *p)
        .collect();
    let grid = Grid::cubic(m, m as f64 * h, false);
    let spectral = Spectral::new(grid);
    let mut data = vec![Complex64::new(0.0, 0.0); m * m * m];
    for q in 0..n * n * n {
        let s = samples[q];
        if s.is_finite() {
            data[((q / (n * n)) * m + (q / n) % n) * m + q % n] = Complex64::new(s, 0.0);
        }
    }
    let wrap = |i: usize| -> f64 {
        let s = if i < m / 2 { i as f64 } else { i as f64 - m as f64 };
        s
    };
    let mut kernel = vec![Complex64::new(0.0, 0.0); m * m * m];
    for a in 0..m {
        for b in 0..m {
            for d in 0..m {
                let r = (wrap(a).powi(2) + wrap(b).powi(2) + wrap(d).powi(2)).sqrt();
                let k = if r == 0.0 { UNIT_CELL_INVERSE_DISTANCE } else { 1.0 / r };
                // h^3 * (1 / (h r)) = h^2 / r
                kernel[(a * m + b) * m + d] = Complex64::new(k * h * h, 0.0);
            }
        }
    }
    spectral.forward_raw(&mut data);
    spectral.forward_raw(&mut kernel);
    data.iter_mut().zip(&kernel).for_each(|(x, k)| *x *= k);
    spectral.inverse_raw(&mut data);
    let values = (0..n * n * n)
        .map(|q| data[((q / (n * n)) * m + (q / n) % n) * m + q % n].re)
        .collect();
    (points, values, singular)
}

fn evaluate(v: &PotentialSpec, xs: &[[f64; 3]], opts: &KatoOptions) -> Vec<Candidate> {
    xs.par_iter()
        .map(|&x| {
            let (total, partial) = sphere_integral(v, x, &opts.modulus_radii, &opts.rule);
            Candidate { x, total, partial }
        })
        .collect()
}

/// Kato norm with modulus table. Errors with `QuadratureFailure` if the
/// pattern search needs more than `opts.max_moves` moves.
pub fn kato_norm(v: &PotentialSpec, opts: &KatoOptions) -> Result<KatoReport> {
    let mut radii = opts.modulus_radii.clone();
    radii.sort_by(|a, b| b.total_cmp(a));
    let opts = KatoOptions {
        modulus_radii: radii.clone(),
        ..opts.clone()
    };
    if v.is_zero() || v.support.is_empty() {
        return Ok(KatoReport {
            norm: 0.0,
            modulus: radii.iter().map(|&r| (r, 0.0)).collect(),
            argmax: [0.0; 3],
            lattice_estimate: 0.0,
            evaluations: 0,
            last_gain: 0.0,
        });
    }
    let (points, values, singular) = lattice_estimate(v, &opts);
    let lattice_max = values.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut starts: Vec<[f64; 3]> = order.iter().take(opts.top_candidates.max(1)).map(|&i| points[i]).collect();
    let sb = v.support;
    let centre: [f64; 3] = std::array::from_fn(|a| 0.5 * (sb.lo[a] + sb.hi[a]));
    let mut sing = singular;
    sing.sort_by(|p, q| dist(*p, centre).total_cmp(&dist(*q, centre)));
    starts.extend(sing.into_iter().take(opts.singular_candidates));

    let mut all = evaluate(v, &starts, &opts);
    let mut best = best_index(&all);
    let h = (0..3).map(|a| sb.hi[a] - sb.lo[a] + 2.0 * opts.dilate).fold(0.0, f64::max) / (2 * opts.grid_half.max(1)) as f64;
    let mut step = 0.5 * h;
    let mut last_gain = 0.0;
    let (mut halvings, mut moves) = (0, 0);
    while halvings < opts.refine_rounds {
        let x0 = all[best].x;
        let before = all[best].total;
        let stencil: Vec<[f64; 3]> = (0..6)
            .map(|k| {
                let mut x = x0;
                x[k / 2] += if k % 2 == 0 { step } else { -step };
                x
            })
            .collect();
        all.extend(evaluate(v, &stencil, &opts));
        best = best_index(&all);
        last_gain = if before > 0.0 { (all[best].total - before) / before } else { 0.0 };
        if last_gain > opts.tol {
            moves += 1;
            if moves > opts.max_moves {
                return Err(Error::QuadratureFailure {
                    context: "Kato norm pattern search did not stabilise".into(),
                    estimate: all[best].total,
                    error: last_gain,
                });
            }
        } else {
            halvings += 1;
            step *= 0.5;
        }
    }
    let modulus = radii
        .iter()
        .enumerate()
        .map(|(k, &r)| (r, all.iter().map(|c| c.partial[k]).fold(0.0, f64::max)))
        .collect();
    Ok(KatoReport {
        norm: all[best].total,
        modulus,
        argmax: all[best].x,
        lattice_estimate: lattice_max,
        evaluations: all.len(),
        last_gain,
    })
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn best_index(c: &[Candidate]) -> usize {
    (0..c.len()).max_by(|&a, &b| c[a].total.total_cmp(&c[b].total)).expect("candidates")
}

/// `V * phi_delta`; the zero potential stays zero.
pub fn mollify(v: &PotentialSpec, delta: f64) -> PotentialSpec {
    assert!(delta > 0.0, "mollification width must be positive");
    if v.is_zero() {
        return PotentialSpec::zero();
    }
    PotentialSpec::new(
        format!("mollify({}, {delta})", v.label),
        Formula::Mollified {
            inner: Box::new(v.formula.clone()),
            delta,
        },
    )
}

fn truncate(v: &PotentialSpec, level: f64, keep_small: bool) -> PotentialSpec {
    let mut out = PotentialSpec::new(
        format!("{}[{}{level}]", v.label, if keep_small { "<=" } else { ">" }),
        Formula::Truncated {
            inner: Box::new(v.formula.clone()),
            level,
            keep_small,
        },
    );
    out.support = v.support;
    out
}

/// `V = V1 + V2` with `V2 = V 1_{|V| <= M}` bounded and `||V1||_K < eps`,
/// `M` the smallest power of two `2^k`, `0 <= k <= 60`, that achieves the
/// bound (bisection in `k`, assuming the norm of `V1` decreases with `M`).
/// Potentials with a known bound split as `(0, V)`.
pub fn split_small_bounded(v: &PotentialSpec, eps: f64, opts: &KatoOptions) -> Result<(PotentialSpec, PotentialSpec, Option<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if v.is_zero() || v.formula.sup_bound().is_some() {
        return Ok((PotentialSpec::zero(), v.clone(), None));
    }
    let small_at = |k: i32| -> Result<bool> { Ok(kato_norm(&truncate(v, 2f64.powi(k), false), opts)?.norm < eps) };
    if !small_at(60)? {
        return Err(Error::SplitFailure { eps });
    }
    let (mut lo, mut hi) = (-1i32, 60i32); // small_at(hi) holds; lo is "not known to hold"
    if small_at(0)? {
        hi = 0;
    } else {
        lo = 0;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if small_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let level = 2f64.powi(hi);
    Ok((truncate(v, level, false), truncate(v, level, true), Some(level)))
}

/// The log-singular test potential `|x'|^{-2} |log |x'||^{-delta}` near the
/// `x_1` axis, cut off smoothly between `|x| = 1/2` and `|x| = 3/4`.
pub fn example_potential(delta: f64) -> Result<PotentialSpec> {
    if !(delta > 2.0) {
        return Err(Error::Domain(format!("the log-singular example needs delta > 2, got {delta}")));
    }
    Ok(PotentialSpec::new(format!("log_singular(delta={delta})"), Formula::LogSingular { delta }))
}
