//! Lattice inverse of the conjugated Laplacian and CGO solutions
//! `u_z = e^{i z.x} (1 + r_z)` of `(-Laplacian + V) u = 0`, built from the
//! Neumann series for `f + w G_z (v f) = -v` with `v = |V|^{1/2}`,
//! `w = sgn(V) |V|^{1/2}` and `r_z = G_z (v f)`.

use crate::error::{Error, Result};
use crate::fourier::{Grid, GridField, Spectral};
use crate::fundsol::{cdot, z_to_canonical, CgoVector};
use crate::kato::{factor_potential, PotentialSpec};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which discrete operator `G_z` inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    /// `|xi|^2 + 2 z.xi`, the spectral conjugated Laplacian.
    #[default]
    Spectral,
    /// `sum_a (4 / h_a^2) sin^2((xi_a + z_a) h_a / 2)`: the 7-point Laplacian
    /// conjugated by `e^{i z.x}`. Requires the discrete dispersion relation
    /// `sum_a (4 / h_a^2) sin^2(z_a h_a / 2) = 0` for `e^{i z.x}` to be
    /// discrete-harmonic.
    FiniteDifference,
}

/// Smallest admissible `|p_z(xi)|` on the lattice.
pub fn symbol_floor(z: &CgoVector) -> f64 {
    1e-8 * z.norm().powi(2)
}

fn symbol_value(kind: SymbolKind, z: &[Complex64; 3], h: [f64; 3], xi: [f64; 3]) -> Complex64 {
    match kind {
        SymbolKind::Spectral => {
            let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            Complex64::new(k2, 0.0) + 2.0 * (z[0] * xi[0] + z[1] * xi[1] + z[2] * xi[2])
        }
        SymbolKind::FiniteDifference => (0..3)
            .map(|a| {
                let s = ((z[a] + xi[a]) * (0.5 * h[a])).sin();
                s * s * (4.0 / (h[a] * h[a]))
            })
            .sum(),
    }
}

/// Discrete `sum_a (4 / h_a^2) sin^2(z_a h_a / 2)`; zero for FD-dispersive `z`.
pub fn fd_dispersion(z: &[Complex64; 3], h: [f64; 3]) -> Complex64 {
    symbol_value(SymbolKind::FiniteDifference, z, h, [0.0; 3])
}

/// Wraps a complex vector satisfying the discrete dispersion relation for
/// spacing `h` (to `tol` relative to `|z|^2`) for use with
/// [`SymbolKind::FiniteDifference`]. Such `z` is not exactly null, so only
/// `z` and `tau = |z| / sqrt 2` are meaningful in the result.
pub fn lattice_cgo_vector(z: [Complex64; 3], h: [f64; 3], tol: f64) -> Result<CgoVector> {
    let n2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::DegenerateZ("z must be non-zero and finite".into()));
    }
    let defect = fd_dispersion(&z, h);
    if defect.norm() > tol * n2 {
        return Err(Error::DegenerateZ(format!("discrete dispersion defect {defect:e} (|z|^2 = {n2:e})")));
    }
    let tau = (n2 / 2.0).sqrt();
    let im = std::array::from_fn(|a| z[a].im / tau);
    let re = std::array::from_fn(|a| z[a].re / tau);
    Ok(CgoVector {
        z,
        tau,
        u: [im, re, [0.0; 3]],
        v: [0.0, tau, 0.0],
    })
}

/// `G_z` as a tabulated lattice multiplier.
#[derive(Debug, Clone)]
pub struct GzOperator {
    spectral: Spectral,
    z: CgoVector,
    kind: SymbolKind,
    symbol: Vec<Complex64>,
    inverse: Vec<Complex64>,
    min_symbol: f64,
}

impl GzOperator {
    pub fn new(z: &CgoVector, grid: Grid, kind: SymbolKind) -> Result<Self> {
        Self::with_spectral(z, Spectral::new(grid), kind)
    }

    /// Fails with `SymbolZero` if some lattice frequency has
    /// `|p_z(xi)| <= symbol_floor(z)`.
    pub fn with_spectral(z: &CgoVector, spectral: Spectral, kind: SymbolKind) -> Result<Self> {
        let grid = *spectral.grid();
        let h = [grid.spacing(0), grid.spacing(1), grid.spacing(2)];
        let symbol = spectral.tabulate(|xi| symbol_value(kind, &z.z, h, xi));
        let floor = symbol_floor(z);
        let (mut min_symbol, mut argmin) = (f64::INFINITY, 0);
        for (m, p) in symbol.iter().enumerate() {
            if p.norm() < min_symbol {
                min_symbol = p.norm();
                argmin = m;
            }
        }
        if !(min_symbol > floor) {
            let [i, j, k] = grid.unravel(argmin);
            return Err(Error::SymbolZero {
                xi: [grid.frequency(0, i), grid.frequency(1, j), grid.frequency(2, k)],
                value: min_symbol,
            });
        }
        let inverse = symbol.iter().map(|p| p.inv()).collect();
        Ok(GzOperator {
            spectral,
            z: *z,
            kind,
            symbol,
            inverse,
            min_symbol,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.spectral.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn z(&self) -> &CgoVector {
        &self.z
    }

    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    pub fn min_symbol(&self) -> f64 {
        self.min_symbol
    }

    /// Multiplier values in FFT bin order.
    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    pub fn apply_in_place(&self, data: &mut [Complex64]) {
        self.spectral.apply_multiplier_in_place(data, &self.inverse);
    }

    /// `G_z^*` (multiplier `conj(1 / p_z)`).
    pub fn apply_adjoint_in_place(&self, data: &mut [Complex64]) {
        let conj: Vec<Complex64> = self.inverse.iter().map(|c| c.conj()).collect();
        self.spectral.apply_multiplier_in_place(data, &conj);
    }

    pub fn apply(&self, field: &GridField) -> GridField {
        let mut values = field.values.clone();
        self.apply_in_place(&mut values);
        GridField {
            grid: *self.grid(),
            values,
        }
    }

    /// The forward operator `p_z(D)`.
    pub fn apply_symbol(&self, field: &GridField) -> GridField {
        let mut values = field.values.clone();
        self.spectral.apply_multiplier_in_place(&mut values, &self.symbol);
        GridField {
            grid: *self.grid(),
            values,
        }
    }
}

/// `G_z u` with a freshly tabulated spectral multiplier.
pub fn gz_apply(z: &CgoVector, field: &GridField) -> Result<GridField> {
    Ok(GzOperator::new(z, field.grid, SymbolKind::Spectral)?.apply(field))
}

/// Builds `G_z`, rescaling `z` by `1 + k dxi / |z|` (`dxi = 2 pi / L`,
/// `k = 1, 2, ...`) while the lattice hits the symbol floor. Rescaling keeps
/// `z.z = 0`.
pub fn gz_operator_dodging(z: &CgoVector, spectral: &Spectral, kind: SymbolKind, max_retries: usize) -> Result<GzOperator> {
    let dxi = 2.0 * std::f64::consts::PI / spectral.grid().side;
    let mut last = None;
    for k in 0..=max_retries {
        let scale = 1.0 + k as f64 * dxi / z.norm();
        let zk = if k == 0 {
            *z
        } else {
            z_to_canonical(z.z.map(|c| c * scale))?
        };
        match GzOperator::with_spectral(&zk, spectral.clone(), kind) {
            Ok(op) => return Ok(op),
            Err(e @ Error::SymbolZero { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Settings for power iteration on the normal operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            rel_tol: 1e-6,
            max_iter: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
}

fn weighted(data: &mut [Complex64], w: &[f64]) {
    data.iter_mut().zip(w).for_each(|(d, w)| *d *= *w);
}

fn norm2(data: &[Complex64]) -> f64 {
    data.iter().map(|c| c.norm_sqr()).sum::<f64>()
}

/// `|| left G_z right ||_{L^2 -> L^2}` by power iteration on
/// `right G_z^* left^2 G_z right`, stopped when the Rayleigh quotient moves by
/// less than `rel_tol` relative.
pub fn operator_norm(op: &GzOperator, left: &[f64], right: &[f64], opts: &PowerOptions) -> Result<NormEstimate> {
    let n = op.grid().len();
    assert_eq!(left.len(), n, "left weight length");
    assert_eq!(right.len(), n, "right weight length");
    if left.iter().all(|w| *w == 0.0) || right.iter().all(|w| *w == 0.0) {
        return Ok(NormEstimate { value: 0.0, iterations: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Complex64> = right
        .iter()
        .map(|w| {
            if *w == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            }
        })
        .collect();
    let mut prev = f64::NAN;
    for it in 1..=opts.max_iter {
        let xn = norm2(&x).sqrt();
        if xn == 0.0 {
            return Ok(NormEstimate { value: 0.0, iterations: it });
        }
        x.iter_mut().for_each(|c| *c /= xn);
        let mut y = x.clone();
        weighted(&mut y, right);
        op.apply_in_place(&mut y);
        weighted(&mut y, left);
        let lambda = norm2(&y);
        weighted(&mut y, left);
        op.apply_adjoint_in_place(&mut y);
        weighted(&mut y, right);
        if (lambda - prev).abs() <= opts.rel_tol * lambda {
            return Ok(NormEstimate {
                value: lambda.sqrt(),
                iterations: it,
            });
        }
        prev = lambda;
        x = y;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        context: "power iteration for the weighted G_z norm".into(),
    })
}

/// Neumann-series settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgoOptions {
    /// Target for `||f + v + w G(v f)|| / ||v||`.
    pub tol: f64,
    pub max_iter: usize,
    pub power: PowerOptions,
}

impl Default for CgoOptions {
    fn default() -> Self {
        CgoOptions {
            tol: 1e-12,
            max_iter: 1000,
            power: PowerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgoSolveReport {
    pub z_norm: f64,
    pub iterations: usize,
    /// Estimate of `||w G_z v||`.
    pub contraction_estimate: f64,
    /// `||f + v + w G_z(v f)|| / ||v||`.
    pub residual: f64,
    /// `||r_z||` over the support box of `V`.
    pub r_norm: f64,
    pub f_norm: f64,
    pub v_norm: f64,
}

#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub r: GridField,
    pub f: GridField,
    pub report: CgoSolveReport,
}

/// Solves `f + w G_z (v f) = -v` by direct summation `f <- -v - w G_z(v f)`
/// and returns `r_z = G_z(v f)`.
pub fn solve_cgo(potential: &PotentialSpec, op: &GzOperator, opts: &CgoOptions) -> Result<CgoSolution> {
    let grid = *op.grid();
    solve_cgo_sampled(&potential.sample(&grid), &potential.support.mask(&grid), op, opts)
}

/// [`solve_cgo`] on pre-sampled potential values; `mask` selects the region
/// for `r_norm`.
pub fn solve_cgo_sampled(samples: &[f64], mask: &[bool], op: &GzOperator, opts: &CgoOptions) -> Result<CgoSolution> {
    let grid = *op.grid();
    let n = grid.len();
    let zero = Complex64::new(0.0, 0.0);
    let (v, w) = factor_potential(samples);
    let h3 = grid.cell_volume();
    let v_norm = (v.iter().map(|x| x * x).sum::<f64>() * h3).sqrt();
    if v_norm == 0.0 {
        let report = CgoSolveReport {
            z_norm: op.z().norm(),
            iterations: 0,
            contraction_estimate: 0.0,
            residual: 0.0,
            r_norm: 0.0,
            f_norm: 0.0,
            v_norm: 0.0,
        };
        return Ok(CgoSolution {
            r: GridField::zeros(grid),
            f: GridField::zeros(grid),
            report,
        });
    }
    let contraction = operator_norm(op, &w, &v, &opts.power)?.value;
    if contraction >= 1.0 {
        return Err(Error::NotContractive { estimate: contraction });
    }
    let v_sq = norm2(&v.iter().map(|x| Complex64::new(*x, 0.0)).collect::<Vec<_>>()).sqrt();
    let mut f: Vec<Complex64> = v.iter().map(|x| Complex64::new(-x, 0.0)).collect();
    let mut r = vec![zero; n];
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for it in 0..=opts.max_iter {
        // r = G(v f), next = -v - w r
        r.iter_mut().zip(&f).zip(&v).for_each(|((r, f), v)| *r = f * *v);
        op.apply_in_place(&mut r);
        let mut diff = 0.0;
        let next: Vec<Complex64> = (0..n)
            .map(|m| {
                let g = Complex64::new(-v[m], 0.0) - r[m] * w[m];
                diff += (f[m] - g).norm_sqr();
                g
            })
            .collect();
        let residual = diff.sqrt() / v_sq;
        if residual < opts.tol {
            let f_field = GridField { grid, values: f };
            let r_field = GridField { grid, values: r };
            let report = CgoSolveReport {
                z_norm: op.z().norm(),
                iterations: it,
                contraction_estimate: contraction,
                residual,
                r_norm: r_field.l2_norm_masked(mask),
                f_norm: f_field.l2_norm(),
                v_norm,
            };
            return Ok(CgoSolution {
                r: r_field,
                f: f_field,
                report,
            });
        }
        if residual < best * 0.999 {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 20 {
                break;
            }
        }
        f = next;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        context: format!("Neumann series stalled at residual {best:e}"),
    })
}

/// `e^{i z.x}` on the grid nodes.
pub fn plane_wave(z: &[Complex64; 3], grid: &Grid) -> GridField {
    GridField::from_fn(*grid, |x| {
        let phase = z[0] * x[0] + z[1] * x[1] + z[2] * x[2];
        (Complex64::new(0.0, 1.0) * phase).exp()
    })
}

/// `u_z = e^{i z.x} (1 + r_z)`.
pub fn assemble_solution(z: &CgoVector, r: &GridField) -> GridField {
    let e = plane_wave(&z.z, &r.grid);
    GridField {
        grid: r.grid,
        values: e.values.iter().zip(&r.values).map(|(e, r)| e * (1.0 + r)).collect(),
    }
}

/// Solves for `r_z` and assembles `u_z`.
pub fn cgo_solution(potential: &PotentialSpec, op: &GzOperator, opts: &CgoOptions) -> Result<(GridField, CgoSolveReport)> {
    let sol = solve_cgo(potential, op, opts)?;
    Ok((assemble_solution(op.z(), &sol.r), sol.report))
}

/// `p_z(D) r` through spectral derivatives: `-Laplacian r - 2 i z.grad r`.
pub fn conjugated_laplacian(spectral: &Spectral, z: &[Complex64; 3], r: &GridField) -> GridField {
    let mut out = spectral.neg_laplacian(r);
    for (a, za) in z.iter().enumerate() {
        let d = spectral.derivative(r, a);
        for (o, g) in out.values.iter_mut().zip(&d.values) {
            *o -= 2.0 * Complex64::new(0.0, 1.0) * za * g;
        }
    }
    out
}

/// Relative Schrodinger residual `||(-Laplacian + V) u_z|| / ||V u_z||` over
/// `mask`, evaluated independently of the tabulated multiplier:
/// spectral derivatives for [`SymbolKind::Spectral`], the 7-point stencil
/// on `u_z` (nodes with all neighbours in range) otherwise.
pub fn schrodinger_residual(op: &GzOperator, samples: &[f64], mask: &[bool], r: &GridField) -> f64 {
    let grid = *op.grid();
    let z = &op.z().z;
    let (mut num, mut den) = (0.0, 0.0);
    match op.kind() {
        SymbolKind::Spectral => {
            let pr = conjugated_laplacian(op.spectral(), z, r);
            let e = plane_wave(z, &grid);
            for m in 0..grid.len() {
                if !mask[m] {
                    continue;
                }
                let vu = samples[m] * (1.0 + r.values[m]);
                num += (e.values[m] * (pr.values[m] + vu)).norm_sqr();
                den += (e.values[m] * vu).norm_sqr();
            }
        }
        SymbolKind::FiniteDifference => {
            let u = assemble_solution(op.z(), r);
            let [n0, n1, n2] = grid.n;
            let h2: [f64; 3] = std::array::from_fn(|a| grid.spacing(a).powi(2));
            for i in 1..n0 - 1 {
                for j in 1..n1 - 1 {
                    for k in 1..n2 - 1 {
                        let m = grid.index(i, j, k);
                        if !mask[m] {
                            continue;
                        }
                        let c = u.values[m];
                        let lap = (2.0 * c - u.values[grid.index(i - 1, j, k)] - u.values[grid.index(i + 1, j, k)]) / h2[0]
                            + (2.0 * c - u.values[grid.index(i, j - 1, k)] - u.values[grid.index(i, j + 1, k)]) / h2[1]
                            + (2.0 * c - u.values[grid.index(i, j, k - 1)] - u.values[grid.index(i, j, k + 1)]) / h2[2];
                        num += (lap + samples[m] * c).norm_sqr();
                        den += (samples[m] * c).norm_sqr();
                    }
                }
            }
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// `||grad u_z||` over `mask` with `grad u_z = e^{i z.x}(i z (1 + r) + grad r)`.
pub fn gradient_norm(op: &GzOperator, r: &GridField, mask: &[bool]) -> f64 {
    let grid = *op.grid();
    let z = &op.z().z;
    let e = plane_wave(z, &grid);
    let d: Vec<GridField> = (0..3).map(|a| op.spectral().derivative(r, a)).collect();
    let mut s = 0.0;
    for m in 0..grid.len() {
        if !mask[m] {
            continue;
        }
        for a in 0..3 {
            let g = e.values[m] * (Complex64::new(0.0, 1.0) * z[a] * (1.0 + r.values[m]) + d[a].values[m]);
            s += g.norm_sqr();
        }
    }
    (s * grid.cell_volume()).sqrt()
}

/// Checks `z.z = 0` for the spectral kind or the FD dispersion relation.
pub fn check_harmonic_phase(z: &CgoVector, kind: SymbolKind, grid: &Grid, tol: f64) -> Result<()> {
    let h = [grid.spacing(0), grid.spacing(1), grid.spacing(2)];
    let defect = match kind {
        SymbolKind::Spectral => cdot(&z.z, &z.z),
        SymbolKind::FiniteDifference => fd_dispersion(&z.z, h),
    };
    if defect.norm() > tol * z.norm().powi(2) {
        return Err(Error::DegenerateZ(format!(
            "e^(i z.x) is not harmonic for the {kind:?} operator: defect {defect:e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fundsol::cgo_vector_from_frame;

    fn z_of(s: f64) -> CgoVector {
        let e = [0.6, 0.8, 0.0];
        let f = [0.0, 0.0, 1.0];
        cgo_vector_from_frame(s, e, f).unwrap()
    }

    #[test]
    fn unshifted_lattice_hits_zero_symbol() {
        let grid = Grid::cubic(8, 4.0, false);
        let err = GzOperator::new(&z_of(2.0), grid, SymbolKind::Spectral).unwrap_err();
        assert!(matches!(err, Error::SymbolZero { value, .. } if value == 0.0));
    }

    #[test]
    fn single_mode_is_divided_by_symbol() {
        let grid = Grid::cubic(8, 4.0, true);
        let z = z_of(2.0);
        let op = GzOperator::new(&z, grid, SymbolKind::Spectral).unwrap();
        let xi = [grid.frequency(0, 1), grid.frequency(1, 7), grid.frequency(2, 2)];
        let mode = GridField::from_fn(grid, |x| Complex64::new(0.0, xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2]).exp());
        let out = op.apply(&mode);
        let p = crate::fundsol::conjugated_symbol(crate::fundsol::ConjugatedSymbolParams::Z(z.z), xi);
        for (o, m) in out.values.iter().zip(&mode.values) {
            assert!((o - m / p).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_weights_give_zero_norm() {
        let grid = Grid::cubic(8, 4.0, true);
        let op = GzOperator::new(&z_of(2.0), grid, SymbolKind::Spectral).unwrap();
        let zero = vec![0.0; grid.len()];
        assert_eq!(operator_norm(&op, &zero, &zero, &PowerOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn zero_potential_gives_trivial_solution() {
        let grid = Grid::cubic(8, 4.0, true);
        let op = GzOperator::new(&z_of(2.0), grid, SymbolKind::Spectral).unwrap();
        let sol = solve_cgo(&PotentialSpec::zero(), &op, &CgoOptions::default()).unwrap();
        assert!(sol.r.max_abs() == 0.0 && sol.f.max_abs() == 0.0);
        let (u, _) = cgo_solution(&PotentialSpec::zero(), &op, &CgoOptions::default()).unwrap();
        let e = plane_wave(&op.z().z, &grid);
        assert_eq!(u.values, e.values);
    }

    #[test]
    fn dispersion_of_continuum_z_is_order_h_squared() {
        let z = z_of(3.0);
        let h = [0.05; 3];
        let d = fd_dispersion(&z.z, h);
        assert!(d.norm() < 0.05 * 0.05 * z.norm().powi(4));
        assert!(check_harmonic_phase(&z, SymbolKind::Spectral, &Grid::cubic(8, 1.0, true), 1e-12).is_ok());
    }
}
