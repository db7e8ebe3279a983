//! Fourier modes of `V1 - V2` from DtN data.
//!
//! For a target frequency `xi` and magnitude `s`, two CGO phases with
//! `z1 + z2 = xi` are built, the CGO solutions for `V1` at `z1` and `V2` at
//! `z2` are restricted to the box boundary, and the boundary pairing
//! `<Lambda_1 phi_1, phi_2> - <Lambda_2 phi_2, phi_1>` estimates
//! `int (V1 - V2) e^{i xi.x} dx`. The mode table is then inverted on a
//! periodic output grid.
//!
//! With [`SymbolKind::FiniteDifference`] the phases are corrected to satisfy
//! the discrete dispersion relation of the 7-point Laplacian, and the CGO
//! grid shares its nodes with the DtN box. The restricted CGO solution is
//! then the discrete Dirichlet solution for its own trace, so the pairing
//! equals the volumetric sum `h^3 sum w (V1 - V2) u1 u2` up to solver
//! tolerance.

use crate::cgo::{assemble_solution, fd_dispersion, lattice_cgo_vector, solve_cgo_sampled, CgoOptions, GzOperator, SymbolKind};
use crate::dtn::{alessandrini_pairing, BoundaryBasis, DiscreteDomain, DtnMap};
use crate::error::{Error, Result};
use crate::fourier::{Grid, GridField, Spectral};
use crate::fundsol::{cdot, z_to_canonical};
use crate::kato::PotentialSpec;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C = Complex64;

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Phases `z1 = xi/2 + r eta1 + i s eta2`, `z2 = xi/2 - r eta1 - i s eta2`
/// with `r = sqrt(s^2 - |xi|^2 / 4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub xi: [f64; 3],
    pub s: f64,
    pub eta1: [f64; 3],
    pub eta2: [f64; 3],
    pub r: f64,
    pub z1: [C; 3],
    pub z2: [C; 3],
}

/// Unit vectors `eta1`, `eta2` with `{xi, eta1, eta2}` orthogonal:
/// Gram-Schmidt on the coordinate axis least aligned with `xi` (first such
/// axis on ties), then `eta2 = xi_hat x eta1`. For `xi = 0` the frame is
/// `(e_2, e_3)`.
pub fn orthogonal_frame(xi: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let n = norm(xi);
    if n == 0.0 {
        return ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]);
    }
    let xh = xi.map(|c| c / n);
    let axis = (0..3).min_by(|&a, &b| xh[a].abs().total_cmp(&xh[b].abs())).expect("three axes");
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p = xh[axis];
    let mut eta1: [f64; 3] = std::array::from_fn(|a| e[a] - p * xh[a]);
    let n1 = norm(eta1);
    eta1.iter_mut().for_each(|c| *c /= n1);
    let eta2 = [
        xh[1] * eta1[2] - xh[2] * eta1[1],
        xh[2] * eta1[0] - xh[0] * eta1[2],
        xh[0] * eta1[1] - xh[1] * eta1[0],
    ];
    (eta1, eta2)
}

/// Fails with `Domain` unless `s > |xi| / 2`.
pub fn make_z_pair(xi: [f64; 3], s: f64) -> Result<FrequencyPlan> {
    let half = 0.5 * norm(xi);
    if !(s > half) || !s.is_finite() {
        return Err(Error::Domain(format!("need s > |xi|/2 = {half}, got s = {s}")));
    }
    let r = ((s - half) * (s + half)).sqrt();
    let (eta1, eta2) = orthogonal_frame(xi);
    let z1 = std::array::from_fn(|a| C::new(0.5 * xi[a] + r * eta1[a], s * eta2[a]));
    let z2 = std::array::from_fn(|a| C::new(0.5 * xi[a] - r * eta1[a], -s * eta2[a]));
    Ok(FrequencyPlan { xi, s, eta1, eta2, r, z1, z2 })
}

/// Corrects `plan.z1` by complex Newton iteration with minimum-norm steps so
/// that both `z1` and `xi - z1` satisfy the discrete dispersion relation
/// for spacing `h`. Returns `(z1, z2)` with `z1 + z2 = xi` exactly in the
/// real part up to rounding.
pub fn lattice_z_pair(plan: &FrequencyPlan, h: f64, tol: f64) -> Result<([C; 3], [C; 3])> {
    let xi = plan.xi.map(|c| C::new(c, 0.0));
    let hh = [h; 3];
    let scale = 2.0 * plan.s * plan.s;
    let mut z = plan.z1;
    for _ in 0..50 {
        let w: [C; 3] = std::array::from_fn(|a| xi[a] - z[a]);
        let f = [fd_dispersion(&z, hh), fd_dispersion(&w, hh)];
        if f[0].norm().max(f[1].norm()) <= tol * scale {
            return Ok((z, w));
        }
        // d/dz_a sum (4/h^2) sin^2(z_a h / 2) = (2/h) sin(z_a h)
        let j0: [C; 3] = std::array::from_fn(|a| (z[a] * h).sin() * (2.0 / h));
        let j1: [C; 3] = std::array::from_fn(|a| -(w[a] * h).sin() * (2.0 / h));
        // delta = -J^H (J J^H)^{-1} F
        let herm = |x: &[C; 3], y: &[C; 3]| (0..3).map(|a| x[a] * y[a].conj()).sum::<C>();
        let (a00, a01, a11) = (herm(&j0, &j0), herm(&j0, &j1), herm(&j1, &j1));
        let a10 = a01.conj();
        let det = a00 * a11 - a01 * a10;
        let (y0, y1) = if det.norm() > 1e-10 * a00.norm() * a11.norm() {
            ((a11 * f[0] - a01 * f[1]) / det, (a00 * f[1] - a10 * f[0]) / det)
        } else {
            // Parallel rows (xi = 0 makes both constraints the same): one
            // equation suffices.
            if a00.norm() == 0.0 {
                return Err(Error::DegenerateZ("singular Jacobian in the dispersion correction".into()));
            }
            (f[0] / a00, C::new(0.0, 0.0))
        };
        for a in 0..3 {
            z[a] -= j0[a].conj() * y0 + j1[a].conj() * y1;
        }
    }
    Err(Error::NoConvergence {
        iterations: 50,
        context: "discrete dispersion correction of the z pair".into(),
    })
}

/// DtN box `[-1/2, 1/2]^3` and a periodic CGO grid of side `padding` that
/// contains the box nodes as grid nodes.
#[derive(Debug, Clone)]
pub struct ReconstructionSetup {
    pub domain: DiscreteDomain,
    pub grid: Grid,
    /// CGO grid index of every box node.
    node_map: Vec<usize>,
}

impl ReconstructionSetup {
    pub fn new(n_box: usize, padding: usize) -> Result<Self> {
        if n_box < 2 {
            return Err(Error::Domain(format!("box needs at least 2 cells, got {n_box}")));
        }
        if padding < 2 {
            return Err(Error::Domain(format!(
                "padding factor {padding} leaves no periodic grid around the box (need >= 2)"
            )));
        }
        Self::with_grid(DiscreteDomain::centered(n_box), Grid::cubic(n_box * padding, padding as f64, true))
    }

    /// Fails with `Domain` if some box node is not a grid node.
    pub fn with_grid(domain: DiscreteDomain, grid: Grid) -> Result<Self> {
        let tol = 1e-9;
        let node_map = (0..domain.len())
            .map(|i| {
                grid.node_at(domain.point(i), tol)
                    .ok_or_else(|| Error::Domain(format!("box node {:?} is not a CGO grid node", domain.point(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReconstructionSetup { domain, grid, node_map })
    }

    /// Period of the frequency lattice used by default, `1.5` times the CGO
    /// grid side. Every pair vanishes at `-xi` in frequency; with this ratio
    /// no `-xi` of the output lattice lies on the half-shifted CGO lattice.
    pub fn frequency_side(&self) -> f64 {
        1.5 * self.grid.side
    }

    pub fn node_map(&self) -> &[usize] {
        &self.node_map
    }

    fn box_values(&self, f: &GridField) -> Vec<C> {
        self.node_map.iter().map(|&m| f.values[m]).collect()
    }
}

/// How nodal boundary traces are turned into DtN data.
#[derive(Debug, Clone, Copy)]
pub enum TraceBasis<'a> {
    Nodal,
    /// Least-squares projection; the relative residual must stay below
    /// [`ReconstructOptions::trace_threshold`].
    Projected(&'a BoundaryBasis),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub kind: SymbolKind,
    pub cgo: CgoOptions,
    /// Smallest `s` in the schedule `max(s_min, |xi|) 2^k`.
    pub s_min: f64,
    pub max_doublings: usize,
    /// Further doublings tried after the first accepted `s`.
    pub extra_doublings: usize,
    /// Both CGO contraction estimates must be below this.
    pub contraction_gate: f64,
    /// Upper limit for `max|phi_1| max|phi_2|` on the boundary.
    pub max_amplification: f64,
    pub trace_threshold: f64,
    /// Relative tolerance of the discrete dispersion relation.
    pub dispersion_tol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            kind: SymbolKind::FiniteDifference,
            cgo: CgoOptions::default(),
            s_min: 4.0,
            max_doublings: 3,
            extra_doublings: 1,
            contraction_gate: 0.25,
            max_amplification: 1e8,
            trace_threshold: 1e-3,
            dispersion_tol: 1e-13,
        }
    }
}

/// Shared, read-only inputs of a mode sweep.
pub struct ModeContext<'a> {
    pub setup: &'a ReconstructionSetup,
    pub v1: &'a PotentialSpec,
    pub v2: &'a PotentialSpec,
    pub dtn1: &'a (dyn DtnMap + Sync),
    pub dtn2: &'a (dyn DtnMap + Sync),
    pub trace: TraceBasis<'a>,
    pub opts: ReconstructOptions,
    spectral: Spectral,
    samples: [Vec<f64>; 2],
    masks: [Vec<bool>; 2],
    /// `V1 - V2` on the box nodes.
    diff: Vec<f64>,
}

impl<'a> ModeContext<'a> {
    /// Fails with `Domain` if either support leaves the box interior.
    pub fn new(
        setup: &'a ReconstructionSetup,
        v1: &'a PotentialSpec,
        v2: &'a PotentialSpec,
        dtn1: &'a (dyn DtnMap + Sync),
        dtn2: &'a (dyn DtnMap + Sync),
        trace: TraceBasis<'a>,
        opts: ReconstructOptions,
    ) -> Result<Self> {
        let dom = &setup.domain;
        for v in [v1, v2] {
            let sb = &v.support;
            if !sb.is_empty() && (0..3).any(|a| sb.lo[a] < dom.lo[a] || sb.hi[a] > dom.lo[a] + dom.side) {
                return Err(Error::Domain(format!("support of {} leaves the DtN box", v.label)));
            }
        }
        let grid = setup.grid;
        let diff = (0..dom.len()).map(|i| v1.eval(dom.point(i)) - v2.eval(dom.point(i))).collect();
        Ok(ModeContext {
            setup,
            v1,
            v2,
            dtn1,
            dtn2,
            trace,
            opts,
            spectral: Spectral::new(grid),
            samples: [v1.sample(&grid), v2.sample(&grid)],
            masks: [v1.support.mask(&grid), v2.support.mask(&grid)],
            diff,
        })
    }

    fn phases(&self, plan: &FrequencyPlan) -> Result<([C; 3], [C; 3], f64)> {
        let h = self.setup.grid.spacing(0);
        match self.opts.kind {
            SymbolKind::Spectral => {
                let d = cdot(&plan.z1, &plan.z1).norm().max(cdot(&plan.z2, &plan.z2).norm());
                Ok((plan.z1, plan.z2, d))
            }
            SymbolKind::FiniteDifference => {
                let (z1, z2) = lattice_z_pair(plan, h, self.opts.dispersion_tol)?;
                let d = fd_dispersion(&z1, [h; 3]).norm().max(fd_dispersion(&z2, [h; 3]).norm());
                Ok((z1, z2, d))
            }
        }
    }

    fn operator(&self, z: [C; 3]) -> Result<GzOperator> {
        let h = self.setup.grid.spacing(0);
        let cz = match self.opts.kind {
            SymbolKind::Spectral => z_to_canonical(z)?,
            SymbolKind::FiniteDifference => lattice_cgo_vector(z, [h; 3], 10.0 * self.opts.dispersion_tol)?,
        };
        GzOperator::with_spectral(&cz, self.spectral.clone(), self.opts.kind)
    }

    fn data(&self, trace: &[C]) -> Result<(Vec<C>, f64)> {
        match self.trace {
            TraceBasis::Nodal => Ok((trace.to_vec(), 0.0)),
            TraceBasis::Projected(basis) => {
                let (c, res) = basis.project(trace)?;
                if res > self.opts.trace_threshold {
                    return Err(Error::TraceResolution {
                        residual: res,
                        threshold: self.opts.trace_threshold,
                    });
                }
                Ok((c, res))
            }
        }
    }

    /// `h^3 sum w (V1 - V2) e^{i xi.x}` over the box nodes.
    pub fn volumetric_mode(&self, xi: [f64; 3]) -> C {
        let dom = &self.setup.domain;
        let h3 = dom.h().powi(3);
        (0..dom.len())
            .filter(|&i| self.diff[i] != 0.0)
            .map(|i| C::new(0.0, dot(xi, dom.point(i))).exp() * (self.diff[i] * dom.node_weight(i)))
            .sum::<C>()
            * h3
    }
}

/// Diagnostics of one `(xi, s)` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAttempt {
    pub s: f64,
    pub z1: [C; 3],
    pub z2: [C; 3],
    /// Largest defect of the harmonic-phase relation for the two phases.
    pub dispersion_defect: f64,
    pub contraction: [f64; 2],
    pub cgo_residual: [f64; 2],
    /// `||r||` over the support box of the respective potential.
    pub r_norm: [f64; 2],
    /// `sup |r|` over the nodes where `V1 != V2`.
    pub r_sup: [f64; 2],
    pub amplification: f64,
    pub trace_residual: f64,
    /// The boundary pairing.
    pub estimate: C,
    /// `h^3 sum w (V1 - V2) u1 u2`, the same quantity from the CGO fields.
    pub volumetric: C,
    /// `||V1 - V2||_1 (a + b + a b)` with `a, b` the entries of `r_sup`;
    /// bounds `|volumetric - volumetric_mode(xi)|`.
    pub bias_bound: f64,
}

impl ModeAttempt {
    pub fn passes(&self, opts: &ReconstructOptions) -> bool {
        self.contraction[0] < opts.contraction_gate
            && self.contraction[1] < opts.contraction_gate
            && self.amplification <= opts.max_amplification
    }
}

/// Evaluates the boundary pairing for one plan.
pub fn fourier_mode_estimate(ctx: &ModeContext, plan: &FrequencyPlan) -> Result<ModeAttempt> {
    let setup = ctx.setup;
    let (z1, z2, dispersion_defect) = ctx.phases(plan)?;
    let mut fields = Vec::with_capacity(2);
    let mut reports = Vec::with_capacity(2);
    for (j, z) in [z1, z2].into_iter().enumerate() {
        let op = ctx.operator(z)?;
        let sol = solve_cgo_sampled(&ctx.samples[j], &ctx.masks[j], &op, &ctx.opts.cgo)?;
        fields.push((setup.box_values(&assemble_solution(op.z(), &sol.r)), setup.box_values(&sol.r)));
        reports.push(sol.report);
    }
    let dom = &setup.domain;
    let bidx = dom.boundary_indices();
    let traces: Vec<Vec<C>> = fields.iter().map(|(u, _)| bidx.iter().map(|&b| u[b]).collect()).collect();
    let sup = |t: &[C]| t.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let amplification = sup(&traces[0]) * sup(&traces[1]);
    let (d1, res1) = ctx.data(&traces[0])?;
    let (d2, res2) = ctx.data(&traces[1])?;
    let estimate = alessandrini_pairing(ctx.dtn1, ctx.dtn2, &d1, &d2)?;

    let h3 = dom.h().powi(3);
    let (mut volumetric, mut l1) = (C::new(0.0, 0.0), 0.0);
    let mut r_sup = [0.0f64; 2];
    for i in 0..dom.len() {
        let d = ctx.diff[i];
        if d == 0.0 {
            continue;
        }
        let w = dom.node_weight(i) * h3;
        volumetric += fields[0].0[i] * fields[1].0[i] * (d * w);
        l1 += d.abs() * w;
        for j in 0..2 {
            r_sup[j] = r_sup[j].max(fields[j].1[i].norm());
        }
    }
    Ok(ModeAttempt {
        s: plan.s,
        z1,
        z2,
        dispersion_defect,
        contraction: [reports[0].contraction_estimate, reports[1].contraction_estimate],
        cgo_residual: [reports[0].residual, reports[1].residual],
        r_norm: [reports[0].r_norm, reports[1].r_norm],
        r_sup,
        amplification,
        trace_residual: res1.max(res2),
        estimate,
        volumetric,
        bias_bound: l1 * (r_sup[0] + r_sup[1] + r_sup[0] * r_sup[1]),
    })
}

/// One step of a mode's `s` schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub s: f64,
    pub attempt: Option<ModeAttempt>,
    pub error: Option<String>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub xi: [f64; 3],
    /// Accepted `s`, if any.
    pub s: Option<f64>,
    pub estimate: Option<C>,
    pub steps: Vec<ScheduleStep>,
}

/// Walks `s = max(s_min, |xi|) 2^k`, `k = 0..=max_doublings`. The first
/// passing step is accepted, up to `extra_doublings` further passing steps
/// replace it; the walk stops at the first failure after an acceptance.
pub fn estimate_mode(ctx: &ModeContext, xi: [f64; 3]) -> ModeRecord {
    let base = ctx.opts.s_min.max(norm(xi));
    let mut steps: Vec<ScheduleStep> = Vec::new();
    let mut best: Option<usize> = None;
    let mut extra = ctx.opts.extra_doublings;
    for k in 0..=ctx.opts.max_doublings {
        let s = base * 2f64.powi(k as i32);
        let outcome = make_z_pair(xi, s).and_then(|plan| fourier_mode_estimate(ctx, &plan));
        let (attempt, error, ok) = match outcome {
            Ok(a) => {
                let ok = a.passes(&ctx.opts);
                (Some(a), None, ok)
            }
            Err(e) => (None, Some(e.to_string()), false),
        };
        steps.push(ScheduleStep { s, attempt, error, accepted: false });
        if ok {
            best = Some(steps.len() - 1);
            if extra == 0 {
                break;
            }
            extra -= 1;
        } else if best.is_some() {
            break;
        }
    }
    let (s, estimate) = match best {
        Some(i) => {
            steps[i].accepted = true;
            (Some(steps[i].s), steps[i].attempt.as_ref().map(|a| a.estimate))
        }
        None => (None, None),
    };
    ModeRecord { xi, s, estimate, steps }
}

/// All `(2 pi / side) k`, `k` integer, with `|xi| <= radius`, in
/// lexicographic order of `k`. The set is symmetric under `xi -> -xi`.
pub fn frequency_lattice(side: f64, radius: f64) -> Vec<[f64; 3]> {
    let d = 2.0 * PI / side;
    let kmax = (radius / d).floor() as i64;
    let mut out = Vec::new();
    for i in -kmax..=kmax {
        for j in -kmax..=kmax {
            for k in -kmax..=kmax {
                let xi = [i as f64 * d, j as f64 * d, k as f64 * d];
                if norm(xi) <= radius * (1.0 + 1e-12) {
                    out.push(xi);
                }
            }
        }
    }
    out
}

/// Radial raised-cosine taper: `1` up to `(1 - taper) radius`, then
/// `cos^2` down to `0` at `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub radius: f64,
    pub taper: f64,
}

impl Window {
    pub fn weight(&self, xi: [f64; 3]) -> f64 {
        let t = norm(xi);
        let flat = (1.0 - self.taper) * self.radius;
        if t <= flat {
            1.0
        } else if t >= self.radius {
            0.0
        } else {
            (0.5 * PI * (t - flat) / (self.radius - flat)).cos().powi(2)
        }
    }
}

/// Symmetrized, windowed entry of the mode table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub xi: [f64; 3],
    pub weight: f64,
    /// `(m(xi) + conj m(-xi)) / 2` from the available estimates.
    pub value: C,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub modes: Vec<ModeEntry>,
    pub records: Vec<ModeRecord>,
    pub failed: usize,
    /// `side^-3 sum_xi weight m(xi) e^{-i xi.x}` on the output grid.
    pub potential: GridField,
}

fn partner(xis: &[[f64; 3]], xi: [f64; 3]) -> Option<usize> {
    let tol = 1e-9 * (1.0 + norm(xi));
    xis.iter().position(|p| (0..3).all(|a| (p[a] + xi[a]).abs() <= tol))
}

/// Hermitian symmetrization: `(m(xi) + conj m(-xi)) / 2`, or the one
/// available estimate; zero when neither exists.
pub fn symmetrize(xis: &[[f64; 3]], raw: &[Option<C>]) -> Vec<C> {
    (0..xis.len())
        .map(|i| {
            let mine = raw[i];
            let theirs = partner(xis, xis[i]).and_then(|j| raw[j]).map(|c| c.conj());
            match (mine, theirs) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => C::new(0.0, 0.0),
            }
        })
        .collect()
}

/// `side^-3 sum weight value e^{-i xi.x}`: the potential whose
/// `int V e^{i xi.x}` equals `weight value` on the grid torus.
pub fn synthesize(modes: &[ModeEntry], grid: &Grid) -> GridField {
    let vol = grid.side.powi(3);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|m| {
            let x = grid.point(m);
            modes.iter().map(|e| C::new(0.0, -dot(e.xi, x)).exp() * (e.weight * e.value)).sum::<C>() / vol
        })
        .collect();
    GridField { grid: *grid, values }
}

/// Estimates every mode in `xis` (a symmetric set), symmetrizes, windows and
/// inverts on `output`, which must have `side` equal to the lattice period
/// of `xis`. Fails only if more than half of the modes fail.
pub fn reconstruct_potential(ctx: &ModeContext, xis: &[[f64; 3]], window: Window, output: &Grid) -> Result<ReconstructionResult> {
    let records: Vec<ModeRecord> = xis.par_iter().map(|&xi| estimate_mode(ctx, xi)).collect();
    let failed = records.iter().filter(|r| r.estimate.is_none()).count();
    if 2 * failed > records.len() {
        return Err(Error::ReconstructionFailed {
            failed,
            total: records.len(),
        });
    }
    let raw: Vec<Option<C>> = records.iter().map(|r| r.estimate).collect();
    let values = symmetrize(xis, &raw);
    let modes: Vec<ModeEntry> = xis
        .iter()
        .zip(values)
        .map(|(&xi, value)| ModeEntry {
            xi,
            weight: window.weight(xi),
            value,
        })
        .collect();
    let potential = synthesize(&modes, output);
    Ok(ReconstructionResult {
        modes,
        records,
        failed,
        potential,
    })
}

/// `||sum w (m - t) e_xi|| / ||sum w t e_xi||` by Parseval over the mode
/// table, with `t` the reference modes.
pub fn band_limited_error(modes: &[ModeEntry], truth: &[C]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (e, t) in modes.iter().zip(truth) {
        num += (e.weight * (e.value - t)).norm_sqr();
        den += (e.weight * t).norm_sqr();
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Row of a convergence study at fixed `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub s: f64,
    pub estimate: Option<C>,
    /// `volumetric_mode(xi)`.
    pub truth: C,
    /// `|estimate - truth|`.
    pub error: Option<f64>,
    /// `||r||` of the CGO correction for `V1` at `z1` and at `z2`.
    pub r_norm: [f64; 2],
    pub contraction: [f64; 2],
    pub bias_bound: Option<f64>,
    pub error_message: Option<String>,
}

/// Mode error against the volumetric ground truth along `s_list`. The
/// context is expected to carry `V2 = 0`; the `z2` column solves the CGO
/// problem for `V1` at `z2` as a diagnostic.
pub fn convergence_study(ctx: &ModeContext, xi: [f64; 3], s_list: &[f64]) -> Vec<StudyRow> {
    let truth = ctx.volumetric_mode(xi);
    s_list
        .par_iter()
        .map(|&s| {
            let run = || -> Result<(ModeAttempt, f64, f64)> {
                let plan = make_z_pair(xi, s)?;
                let a = fourier_mode_estimate(ctx, &plan)?;
                let op = ctx.operator(a.z2)?;
                let sol = solve_cgo_sampled(&ctx.samples[0], &ctx.masks[0], &op, &ctx.opts.cgo)?;
                Ok((a, sol.report.r_norm, sol.report.contraction_estimate))
            };
            match run() {
                Ok((a, r2, c2)) => StudyRow {
                    s,
                    estimate: Some(a.estimate),
                    truth,
                    error: Some((a.estimate - truth).norm()),
                    r_norm: [a.r_norm[0], r2],
                    contraction: [a.contraction[0], c2],
                    bias_bound: Some(a.bias_bound),
                    error_message: None,
                },
                Err(e) => StudyRow {
                    s,
                    estimate: None,
                    truth,
                    error: None,
                    r_norm: [f64::NAN; 2],
                    contraction: [f64::NAN; 2],
                    bias_bound: None,
                    error_message: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        let p = make_z_pair([1.0, 0.0, 0.0], 2.0).unwrap();
        assert!((p.r - 15f64.sqrt() / 2.0).abs() < 1e-15);
        let want = [C::new(0.5, 0.0), C::new(15f64.sqrt() / 2.0, 0.0), C::new(0.0, 2.0)];
        for a in 0..3 {
            assert!((p.z1[a] - want[a]).norm() < 1e-15);
        }
        assert!(cdot(&p.z1, &p.z1).norm() < 1e-12);
        let n2: f64 = p.z1.iter().map(|c| c.norm_sqr()).sum();
        assert!((n2 - 8.0).abs() < 1e-12);

        let p0 = make_z_pair([0.0; 3], 1.0).unwrap();
        assert_eq!(p0.z1, [C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 1.0)]);
        assert!(matches!(make_z_pair([1.0, 0.0, 0.0], 0.4), Err(Error::Domain(_))));
    }

    #[test]
    fn lattice_pair_is_dispersive_and_sums_to_xi() {
        for xi in [[1.2, -0.7, 2.0], [0.0; 3]] {
            check_lattice_pair(xi);
        }
    }

    fn check_lattice_pair(xi: [f64; 3]) {
        let plan = make_z_pair(xi, 5.0).unwrap();
        let h = 1.0 / 32.0;
        let (z1, z2) = lattice_z_pair(&plan, h, 1e-14).unwrap();
        for z in [&z1, &z2] {
            assert!(fd_dispersion(z, [h; 3]).norm() < 1e-12 * 50.0);
        }
        for a in 0..3 {
            assert!((z1[a] + z2[a] - plan.xi[a]).norm() < 1e-13);
            assert!((z1[a] - plan.z1[a]).norm() < 0.1);
        }
    }

    #[test]
    fn window_and_lattice() {
        let w = Window { radius: 4.0, taper: 0.5 };
        assert_eq!(w.weight([1.0, 0.0, 0.0]), 1.0);
        assert!((w.weight([3.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(w.weight([4.0, 0.0, 0.0]), 0.0);
        let xis = frequency_lattice(4.0, 4.0);
        assert!(xis.iter().all(|xi| partner(&xis, *xi).is_some()));
        assert!(frequency_lattice(4.0, 1.0).len() == 1);
    }

    #[test]
    fn symmetrized_table_is_hermitian() {
        let xis = frequency_lattice(4.0, 2.0);
        let raw: Vec<Option<C>> = (0..xis.len())
            .map(|i| if i % 5 == 3 { None } else { Some(C::new(i as f64, (i * i) as f64 * 0.1)) })
            .collect();
        let v = symmetrize(&xis, &raw);
        for i in 0..xis.len() {
            let j = partner(&xis, xis[i]).unwrap();
            assert_eq!(v[i], v[j].conj());
        }
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        assert!(ReconstructionSetup::new(8, 1).is_err());
        let dom = DiscreteDomain::centered(8);
        assert!(ReconstructionSetup::with_grid(dom, Grid::cubic(24, 2.0, true)).is_err());
        let ok = ReconstructionSetup::new(8, 2).unwrap();
        assert_eq!(ok.node_map().len(), dom.len());
    }
}
