//! Discrete Dirichlet problem for `-Laplacian + V` on a box (7-point
//! stencil), its Dirichlet-to-Neumann map through the weighted bilinear form
//!
//! `a_V(u, e) = h sum_edges w_e (u_i - u_j)(e_i - e_j) + h^3 sum_nodes w_n V u e`
//!
//! (edge weights 1 inside, 1/2 on faces, 1/4 on box edges; trapezoid node
//! weights), and the boundary pairing identity between two potentials.
//!
//! For `e` vanishing on the boundary, `a_V(u, e) = h^3 sum e (-Laplacian_h u + V u)`,
//! so the functional `psi -> a_V(P_V phi, E psi)` does not depend on the
//! extension `E psi` once `P_V phi` solves the interior equations.

mod basis;
mod domain;
mod solver;

pub use basis::*;
pub use domain::*;
pub use solver::*;

use crate::error::{Error, Result};
use crate::kato::PotentialSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletOptions {
    pub solver: SolverOptions,
    /// Inverse-iteration steps for the spectrum guard (0 disables it).
    pub guard_iterations: usize,
    /// `SpectrumAtZero` when `|lambda_min| < guard_ratio * ||A||`.
    pub guard_ratio: f64,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        DirichletOptions {
            solver: SolverOptions::default(),
            guard_iterations: 4,
            guard_ratio: 1e-8,
        }
    }
}

/// Dirichlet solver for one potential on one domain; the spectrum guard runs
/// once at construction.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    dom: DiscreteDomain,
    /// Potential at every node.
    potential: Vec<f64>,
    solver: InteriorSolver,
    lambda_min: Option<f64>,
    norm_bound: f64,
}

impl DirichletSolver {
    pub fn new(v: &PotentialSpec, dom: DiscreteDomain, opts: &DirichletOptions) -> Result<Self> {
        let potential: Vec<f64> = dom
            .node_values(|x| v.eval(x))
            .into_iter()
            .map(|s| if s.is_finite() { s } else { 0.0 })
            .collect();
        Self::from_samples(potential, dom, opts)
    }

    pub fn from_samples(potential: Vec<f64>, dom: DiscreteDomain, opts: &DirichletOptions) -> Result<Self> {
        if dom.n < 2 {
            return Err(Error::Domain("the box needs at least two cells per axis".into()));
        }
        let m = dom.n - 1;
        let h = dom.h();
        let mut interior = Vec::with_capacity(m * m * m);
        for i in 1..dom.n {
            for j in 1..dom.n {
                for k in 1..dom.n {
                    interior.push(potential[dom.index(i, j, k)]);
                }
            }
        }
        let op = InteriorOperator {
            m,
            inv_h2: 1.0 / (h * h),
            potential: interior,
        };
        let norm_bound = op.norm_bound();
        let solver = InteriorSolver::new(op, opts.solver);
        let mut out = DirichletSolver {
            dom,
            potential,
            solver,
            lambda_min: None,
            norm_bound,
        };
        if opts.guard_iterations > 0 {
            let lam = match out.solver.smallest_eigenvalue(opts.guard_iterations) {
                Ok(l) => l,
                Err(_) => 0.0,
            };
            out.lambda_min = Some(lam);
            if !(lam.abs() >= opts.guard_ratio * norm_bound) {
                return Err(Error::SpectrumAtZero {
                    lambda_min: lam,
                    norm: norm_bound,
                });
            }
        }
        Ok(out)
    }

    pub fn domain(&self) -> &DiscreteDomain {
        &self.dom
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn lambda_min(&self) -> Option<f64> {
        self.lambda_min
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn uses_direct(&self) -> bool {
        self.solver.uses_direct()
    }

    /// Solves `-Laplacian_h u + V u = f` inside with `u = phi` on the
    /// boundary. `phi` is in boundary-index order, `source` (if any) is
    /// node-indexed. Returns node values.
    pub fn solve(&self, phi: &[C], source: Option<&[C]>) -> Result<(Vec<C>, SolveInfo)> {
        let dom = &self.dom;
        let bidx = dom.boundary_indices();
        if phi.len() != bidx.len() {
            return Err(Error::Domain(format!(
                "boundary data has {} values, the domain has {} boundary nodes",
                phi.len(),
                bidx.len()
            )));
        }
        let mut u = vec![C::new(0.0, 0.0); dom.len()];
        for (&b, &p) in bidx.iter().zip(phi) {
            u[b] = p;
        }
        let n = dom.n;
        let m = n - 1;
        let inv_h2 = 1.0 / (dom.h() * dom.h());
        let mut rhs = Vec::with_capacity(m * m * m);
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    let mut b = source.map_or(C::new(0.0, 0.0), |f| f[dom.index(i, j, k)]);
                    let nbrs = [
                        (i - 1, j, k),
                        (i + 1, j, k),
                        (i, j - 1, k),
                        (i, j + 1, k),
                        (i, j, k - 1),
                        (i, j, k + 1),
                    ];
                    for (a, bb, c) in nbrs {
                        let q = dom.index(a, bb, c);
                        if dom.is_boundary(q) {
                            b += u[q] * inv_h2;
                        }
                    }
                    rhs.push(b);
                }
            }
        }
        let (x, info) = self.solver.solve(&rhs)?;
        let mut p = 0;
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    u[dom.index(i, j, k)] = x[p];
                    p += 1;
                }
            }
        }
        Ok((u, info))
    }

    /// `P_V phi` as node values.
    pub fn extend(&self, phi: &[C]) -> Result<Vec<C>> {
        Ok(self.solve(phi, None)?.0)
    }

    /// Neumann data of `P_V phi`: the functional `psi -> a_V(P_V phi, E psi)`
    /// as a boundary vector.
    pub fn dtn_apply(&self, phi: &[C]) -> Result<BoundaryFunctional> {
        let u = self.extend(phi)?;
        Ok(BoundaryFunctional {
            values: form_gradient(&self.dom, &self.potential, &u, true),
        })
    }
}

/// Convenience wrapper: build the solver and solve once.
pub fn dirichlet_solve(v: &PotentialSpec, dom: DiscreteDomain, phi: &[C], source: Option<&[C]>) -> Result<Vec<C>> {
    let s = DirichletSolver::new(v, dom, &DirichletOptions::default())?;
    Ok(s.solve(phi, source)?.0)
}

/// A boundary functional stored by its values on boundary nodes;
/// `pair(psi) = sum_b g_b psi_b` (bilinear).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunctional {
    pub values: Vec<C>,
}

impl BoundaryFunctional {
    pub fn pair(&self, psi: &[C]) -> C {
        self.values.iter().zip(psi).map(|(g, p)| g * p).sum()
    }
}

fn edge_weight(dom: &DiscreteDomain, a: [usize; 3], axis: usize) -> f64 {
    // An edge along `axis` lies on a face for every other coordinate on the boundary.
    let on = (0..3).filter(|&c| c != axis && (a[c] == 0 || a[c] == dom.n)).count();
    0.5f64.powi(on as i32)
}

/// `a_V(u, e)` with the weighted edge/node sums.
pub fn bilinear_form(dom: &DiscreteDomain, potential: &[f64], u: &[C], e: &[C]) -> C {
    let h = dom.h();
    let n = dom.n;
    let mut grad = C::new(0.0, 0.0);
    let mut mass = C::new(0.0, 0.0);
    for idx in 0..dom.len() {
        let a = dom.unravel(idx);
        for axis in 0..3 {
            if a[axis] < n {
                let mut b = a;
                b[axis] += 1;
                let j = dom.index(b[0], b[1], b[2]);
                grad += (u[idx] - u[j]) * (e[idx] - e[j]) * edge_weight(dom, a, axis);
            }
        }
        mass += u[idx] * e[idx] * (potential[idx] * dom.node_weight(idx));
    }
    grad * h + mass * h.powi(3)
}

/// Partial derivatives `d a_V(u, .) / d e_i` for all nodes, or only the
/// boundary nodes (in boundary order) when `boundary_only`.
pub fn form_gradient(dom: &DiscreteDomain, potential: &[f64], u: &[C], boundary_only: bool) -> Vec<C> {
    let h = dom.h();
    let n = dom.n;
    let mut g = vec![C::new(0.0, 0.0); dom.len()];
    for idx in 0..dom.len() {
        let a = dom.unravel(idx);
        for axis in 0..3 {
            if a[axis] < n {
                let mut b = a;
                b[axis] += 1;
                let j = dom.index(b[0], b[1], b[2]);
                let t = (u[idx] - u[j]) * (edge_weight(dom, a, axis) * h);
                g[idx] += t;
                g[j] -= t;
            }
        }
        g[idx] += u[idx] * (potential[idx] * dom.node_weight(idx) * h.powi(3));
    }
    if boundary_only {
        dom.boundary_indices().into_iter().map(|b| g[b]).collect()
    } else {
        g
    }
}

/// Extension of boundary data by zero to interior nodes.
pub fn trivial_extension(dom: &DiscreteDomain, psi: &[C]) -> Vec<C> {
    let mut e = vec![C::new(0.0, 0.0); dom.len()];
    for (b, p) in dom.boundary_indices().into_iter().zip(psi) {
        e[b] = *p;
    }
    e
}

/// `h^3 sum w_n (V_1 - V_2) u_1 u_2` over nodes.
pub fn volumetric_pairing(dom: &DiscreteDomain, v1: &[f64], v2: &[f64], u1: &[C], u2: &[C]) -> C {
    let h3 = dom.h().powi(3);
    (0..dom.len())
        .map(|i| u1[i] * u2[i] * ((v1[i] - v2[i]) * dom.node_weight(i)))
        .sum::<C>()
        * h3
}

/// Anything that pairs boundary data through a DtN map.
pub trait DtnMap {
    /// Label of the representation of boundary data (basis or nodal).
    fn basis_label(&self) -> String;
    fn data_len(&self) -> usize;
    /// `<Lambda phi, psi>`.
    fn pair(&self, phi: &[C], psi: &[C]) -> Result<C>;
}

impl DtnMap for DirichletSolver {
    fn basis_label(&self) -> String {
        format!("nodal(n={})", self.dom.n)
    }

    fn data_len(&self) -> usize {
        self.dom.boundary_indices().len()
    }

    fn pair(&self, phi: &[C], psi: &[C]) -> Result<C> {
        check_len(self, psi)?;
        Ok(self.dtn_apply(phi)?.pair(psi))
    }
}

fn check_len<M: DtnMap + ?Sized>(m: &M, x: &[C]) -> Result<()> {
    if x.len() != m.data_len() {
        return Err(Error::BasisMismatch(format!(
            "data has {} coefficients, {} expects {}",
            x.len(),
            m.basis_label(),
            m.data_len()
        )));
    }
    Ok(())
}

/// `<(Lambda_1 - Lambda_2) phi_1, phi_2>` written as
/// `<Lambda_1 phi_1, phi_2> - <Lambda_2 phi_2, phi_1>`.
pub fn alessandrini_pairing<A: DtnMap + ?Sized, B: DtnMap + ?Sized>(m1: &A, m2: &B, phi1: &[C], phi2: &[C]) -> Result<C> {
    if m1.basis_label() != m2.basis_label() || m1.data_len() != m2.data_len() {
        return Err(Error::BasisMismatch(format!("{} vs {}", m1.basis_label(), m2.basis_label())));
    }
    check_len(m1, phi1)?;
    check_len(m1, phi2)?;
    Ok(m1.pair(phi1, phi2)? - m2.pair(phi2, phi1)?)
}

/// DtN map restricted to a finite boundary basis: `entries[i][j] = <Lambda phi_i, phi_j>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtnMatrix {
    pub domain: DiscreteDomain,
    pub basis: Vec<BasisDescriptor>,
    pub label: String,
    /// Row-major `dim x dim`.
    pub entries: Vec<C>,
}

impl DtnMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn get(&self, i: usize, j: usize) -> C {
        self.entries[i * self.dim() + j]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }
}

impl DtnMap for DtnMatrix {
    fn basis_label(&self) -> String {
        format!("{}(n={},dim={})", self.label, self.domain.n, self.dim())
    }

    fn data_len(&self) -> usize {
        self.dim()
    }

    fn pair(&self, phi: &[C], psi: &[C]) -> Result<C> {
        check_len(self, phi)?;
        check_len(self, psi)?;
        let d = self.dim();
        let mut s = C::new(0.0, 0.0);
        for i in 0..d {
            if phi[i] == C::new(0.0, 0.0) {
                continue;
            }
            for j in 0..d {
                s += phi[i] * self.get(i, j) * psi[j];
            }
        }
        Ok(s)
    }
}

/// Assembles the DtN matrix over `basis` (one Dirichlet solve per element).
pub fn dtn_matrix(solver: &DirichletSolver, basis: &BoundaryBasis) -> Result<DtnMatrix> {
    use rayon::prelude::*;
    let traces = &basis.traces;
    let rows: Vec<BoundaryFunctional> = traces.par_iter().map(|t| solver.dtn_apply(t)).collect::<Result<_>>()?;
    let d = traces.len();
    let mut entries = Vec::with_capacity(d * d);
    for row in &rows {
        for t in traces {
            entries.push(row.pair(t));
        }
    }
    Ok(DtnMatrix {
        domain: *solver.domain(),
        basis: basis.descriptors.clone(),
        label: basis.label.clone(),
        entries,
    })
}
