//! Periodic box lattices, complex grid fields and 3D FFT based Fourier
//! multipliers.
//!
//! A [`Grid`] is the cube `[-L/2, L/2)^3` sampled at `x_j = -L/2 + j h`.
//! Its dual lattice is either `2 pi k / L` or the half-shifted
//! `2 pi (k + 1/2) / L`, with signed `k` in `[-N/2, N/2 - 1]`. The shifted
//! lattice contains no zero frequency; fields on it are anti-periodic.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

/// Sign and normalization of the continuum Fourier transform:
/// `F f(xi) = int e^{-i x.xi} f(x) dx`, `f(x) = (2 pi)^{-d} int e^{i x.xi} F f(xi) dxi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierConvention {
    pub forward_sign: f64,
    pub inverse_two_pi_power: f64,
}

impl FourierConvention {
    pub const STANDARD: FourierConvention = FourierConvention {
        forward_sign: -1.0,
        inverse_two_pi_power: -1.0,
    };

    /// Prefactor of the inverse transform in dimension `d`.
    pub fn inverse_factor(&self, d: usize) -> f64 {
        (2.0 * PI).powf(self.inverse_two_pi_power * d as f64)
    }
}

/// Periodic lattice on a cube of side `side` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: [usize; 3],
    pub side: f64,
    pub shifted: bool,
}

impl Grid {
    pub fn cubic(n: usize, side: f64, shifted: bool) -> Self {
        Grid {
            n: [n; 3],
            side,
            shifted,
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.side / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing(0) * self.spacing(1) * self.spacing(2)
    }

    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        -0.5 * self.side + j as f64 * self.spacing(axis)
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unravel(idx);
        [self.coord(0, i), self.coord(1, j), self.coord(2, k)]
    }

    /// Signed integer label of FFT bin `m` along an axis of length `n`.
    pub fn signed_bin(n: usize, m: usize) -> i64 {
        if m < n.div_ceil(2) {
            m as i64
        } else {
            m as i64 - n as i64
        }
    }

    /// Lattice frequency of FFT bin `m` along `axis`.
    pub fn frequency(&self, axis: usize, m: usize) -> f64 {
        let n = self.n[axis];
        let shift = if self.shifted { 0.5 } else { 0.0 };
        // With the shift, bin N/2 maps to -(N/2) + 1/2 so the set is symmetric.
        let k = if m < n / 2 || (!self.shifted && m < n.div_ceil(2)) {
            m as f64
        } else {
            m as f64 - n as f64
        };
        2.0 * PI * (k + shift) / self.side
    }

    /// Per-axis frequency tables.
    pub fn frequencies(&self) -> [Vec<f64>; 3] {
        std::array::from_fn(|a| (0..self.n[a]).map(|m| self.frequency(a, m)).collect())
    }

    /// First-derivative symbols; the unshifted Nyquist bin is zeroed.
    pub fn derivative_frequencies(&self) -> [Vec<f64>; 3] {
        std::array::from_fn(|a| {
            (0..self.n[a])
                .map(|m| {
                    if !self.shifted && self.n[a] % 2 == 0 && m == self.n[a] / 2 {
                        0.0
                    } else {
                        self.frequency(a, m)
                    }
                })
                .collect()
        })
    }

    /// Whether a physical point coincides with a lattice node; returns its index.
    pub fn node_at(&self, x: [f64; 3], tol: f64) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let t = (x[a] + 0.5 * self.side) / self.spacing(a);
            let r = t.round();
            if (t - r).abs() > tol || r < 0.0 || r >= self.n[a] as f64 {
                return None;
            }
            ijk[a] = r as usize;
        }
        Some(self.index(ijk[0], ijk[1], ijk[2]))
    }
}

/// Complex samples on a [`Grid`], stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl GridField {
    pub fn zeros(grid: Grid) -> Self {
        GridField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn<F: FnMut([f64; 3]) -> Complex64>(grid: Grid, mut f: F) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        GridField { grid, values }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Self {
        GridField {
            grid,
            values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Continuum L2 norm approximated by the lattice sum `(h^3 sum |f|^2)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// L2 norm over the nodes where `mask` is true.
    pub fn l2_norm_masked(&self, mask: &[bool]) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        (self.grid.cell_volume() * s).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    pub fn scale_by_real(&mut self, w: &[f64]) {
        for (v, &s) in self.values.iter_mut().zip(w) {
            *v *= s;
        }
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Relative l2 distance `|a - b| / |b|` between value arrays.
pub fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Cached FFT plans and modulation tables for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
    /// `e^{-2 pi i s j / N}` per axis (identity for the unshifted lattice).
    pre: [Vec<Complex64>; 3],
    /// `e^{-i xi_m x_0}` per axis.
    origin: [Vec<Complex64>; 3],
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let fwd = std::array::from_fn(|a| planner.plan_fft_forward(grid.n[a]));
        let inv = std::array::from_fn(|a| planner.plan_fft_inverse(grid.n[a]));
        let s = if grid.shifted { 0.5 } else { 0.0 };
        let pre = std::array::from_fn(|a| {
            let n = grid.n[a];
            (0..n)
                .map(|j| Complex64::from_polar(1.0, -2.0 * PI * s * j as f64 / n as f64))
                .collect()
        });
        let origin = std::array::from_fn(|a| {
            let x0 = -0.5 * grid.side;
            (0..grid.n[a])
                .map(|m| Complex64::from_polar(1.0, -grid.frequency(a, m) * x0))
                .collect()
        });
        Spectral {
            grid,
            fwd,
            inv,
            pre,
            origin,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn modulate(&self, data: &mut [Complex64], tables: &[Vec<Complex64>; 3], conj: bool) {
        let [n0, n1, n2] = self.grid.n;
        for i in 0..n0 {
            for j in 0..n1 {
                let c = tables[0][i] * tables[1][j];
                let row = &mut data[(i * n1 + j) * n2..(i * n1 + j + 1) * n2];
                for (k, v) in row.iter_mut().enumerate() {
                    let p = c * tables[2][k];
                    *v *= if conj { p.conj() } else { p };
                }
            }
        }
    }

    fn fft_axes(&self, data: &mut [Complex64], inverse: bool) {
        let [n0, n1, n2] = self.grid.n;
        let plans = if inverse { &self.inv } else { &self.fwd };
        // Last axis: contiguous rows.
        plans[2].process(data);
        // Middle axis: transpose each slab.
        let mut line = vec![Complex64::new(0.0, 0.0); n0.max(n1) * n2];
        for i in 0..n0 {
            let slab = &mut data[i * n1 * n2..(i + 1) * n1 * n2];
            for j in 0..n1 {
                for k in 0..n2 {
                    line[k * n1 + j] = slab[j * n2 + k];
                }
            }
            plans[1].process(&mut line[..n1 * n2]);
            for j in 0..n1 {
                for k in 0..n2 {
                    slab[j * n2 + k] = line[k * n1 + j];
                }
            }
        }
        // First axis: gather planes of fixed j.
        let stride = n1 * n2;
        for j in 0..n1 {
            for k in 0..n2 {
                for i in 0..n0 {
                    line[k * n0 + i] = data[i * stride + j * n2 + k];
                }
            }
            plans[0].process(&mut line[..n0 * n2]);
            for k in 0..n2 {
                for i in 0..n0 {
                    data[i * stride + j * n2 + k] = line[k * n0 + i];
                }
            }
        }
    }

    /// Lattice-shifted DFT without the origin phase, in place.
    pub fn forward_raw(&self, data: &mut [Complex64]) {
        if self.grid.shifted {
            self.modulate(data, &self.pre, false);
        }
        self.fft_axes(data, false);
    }

    /// Inverse of [`Spectral::forward_raw`] including the `1/N^3` factor.
    pub fn inverse_raw(&self, data: &mut [Complex64]) {
        self.fft_axes(data, true);
        let scale = 1.0 / self.grid.len() as f64;
        if self.grid.shifted {
            let [n0, n1, n2] = self.grid.n;
            for i in 0..n0 {
                for j in 0..n1 {
                    let c = (self.pre[0][i] * self.pre[1][j]).conj() * scale;
                    let row = &mut data[(i * n1 + j) * n2..(i * n1 + j + 1) * n2];
                    for (k, v) in row.iter_mut().enumerate() {
                        *v *= c * self.pre[2][k].conj();
                    }
                }
            }
        } else {
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// `F[m] = sum_j f_j e^{-i xi_m . x_j}` in FFT bin order.
    pub fn forward(&self, field: &GridField) -> Vec<Complex64> {
        let mut data = field.values.clone();
        self.forward_raw(&mut data);
        self.modulate(&mut data, &self.origin, false);
        data
    }

    /// `f_j = N^{-3} sum_m F[m] e^{i xi_m . x_j}`.
    pub fn inverse(&self, spectrum: &[Complex64]) -> GridField {
        let mut data = spectrum.to_vec();
        self.modulate(&mut data, &self.origin, true);
        self.inverse_raw(&mut data);
        GridField {
            grid: self.grid,
            values: data,
        }
    }

    /// Continuum transform `int e^{-i x.xi} f dx` sampled on the dual lattice.
    pub fn continuum_forward(&self, field: &GridField) -> Vec<Complex64> {
        let h3 = self.grid.cell_volume();
        self.forward(field).into_iter().map(|v| v * h3).collect()
    }

    /// Continuum inverse `(2 pi)^{-3} int e^{i x.xi} g dxi` as a lattice sum.
    pub fn continuum_inverse(&self, spectrum: &[Complex64]) -> GridField {
        let h3 = self.grid.cell_volume();
        let scaled: Vec<Complex64> = spectrum.iter().map(|v| v / h3).collect();
        self.inverse(&scaled)
    }

    /// Applies a precomputed multiplier (FFT bin order) in place.
    pub fn apply_multiplier_in_place(&self, data: &mut [Complex64], multiplier: &[Complex64]) {
        self.forward_raw(data);
        for (v, m) in data.iter_mut().zip(multiplier) {
            *v *= m;
        }
        self.inverse_raw(data);
    }

    /// Tabulates `symbol(xi)` over all lattice frequencies in FFT bin order.
    pub fn tabulate<F: FnMut([f64; 3]) -> Complex64>(&self, mut symbol: F) -> Vec<Complex64> {
        let f = self.grid.frequencies();
        let mut out = Vec::with_capacity(self.grid.len());
        for &a in &f[0] {
            for &b in &f[1] {
                for &c in &f[2] {
                    out.push(symbol([a, b, c]));
                }
            }
        }
        out
    }

    pub fn apply<F: FnMut([f64; 3]) -> Complex64>(&self, field: &GridField, symbol: F) -> GridField {
        let m = self.tabulate(symbol);
        let mut data = field.values.clone();
        self.apply_multiplier_in_place(&mut data, &m);
        GridField {
            grid: self.grid,
            values: data,
        }
    }

    /// Spectral partial derivative `d/dx_axis`.
    pub fn derivative(&self, field: &GridField, axis: usize) -> GridField {
        let d = self.grid.derivative_frequencies();
        let [n0, n1, n2] = self.grid.n;
        let mut m = Vec::with_capacity(self.grid.len());
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let xi = [d[0][i], d[1][j], d[2][k]][axis];
                    m.push(Complex64::new(0.0, xi));
                }
            }
        }
        let mut data = field.values.clone();
        self.apply_multiplier_in_place(&mut data, &m);
        GridField {
            grid: self.grid,
            values: data,
        }
    }

    /// Spectral `-Laplacian` (symbol `|xi|^2`).
    pub fn neg_laplacian(&self, field: &GridField) -> GridField {
        self.apply(field, |xi| Complex64::new(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2], 0.0))
    }
}

const MAGIC: &[u8; 4] = b"CGOF";

/// Writes the flat binary grid format: magic `CGOF`, three `u32` sizes,
/// `f64` box side, `u8` shift flag, then `(re, im)` `f64` pairs row-major,
/// all little-endian.
pub fn write_grid_binary(path: &Path, dims: [usize; 3], side: f64, shifted: bool, values: &[Complex64]) -> Result<()> {
    if dims.iter().product::<usize>() != values.len() {
        return Err(Error::Io(format!(
            "value count {} does not match dims {:?}",
            values.len(),
            dims
        )));
    }
    let mut buf = Vec::with_capacity(21 + 16 * values.len());
    buf.extend_from_slice(MAGIC);
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&side.to_le_bytes());
    buf.push(shifted as u8);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Contents of a binary grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub dims: [usize; 3],
    pub side: f64,
    pub shifted: bool,
    pub values: Vec<Complex64>,
}

pub fn read_grid_binary(path: &Path) -> Result<GridDump> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 25 || &bytes[..4] != MAGIC {
        return Err(Error::Io("not a CGOF grid file".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dims = [u32_at(4), u32_at(8), u32_at(12)];
    let side = f64_at(16);
    let shifted = bytes[24] != 0;
    let count: usize = dims.iter().product();
    if bytes.len() != 25 + 16 * count {
        return Err(Error::Io(format!(
            "expected {} payload bytes, found {}",
            16 * count,
            bytes.len() - 25
        )));
    }
    let values = (0..count)
        .map(|i| Complex64::new(f64_at(25 + 16 * i), f64_at(33 + 16 * i)))
        .collect();
    Ok(GridDump {
        dims,
        side,
        shifted,
        values,
    })
}

impl GridField {
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_grid_binary(path, self.grid.n, self.grid.side, self.grid.shifted, &self.values)
    }
}
