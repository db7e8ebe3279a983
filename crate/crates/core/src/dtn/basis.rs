use super::DiscreteDomain;
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisDescriptor {
    Constant,
    /// `cos(pi k s) cos(pi l t)` on the nodes owned by `face`
    /// (faces ordered `x0 = lo, x0 = hi, x1 = lo, ...`).
    FaceCosine { face: u8, k: u32, l: u32 },
    Node { boundary_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBasis {
    pub label: String,
    pub descriptors: Vec<BasisDescriptor>,
    /// Values on boundary nodes, one vector per element.
    #[serde(skip)]
    pub traces: Vec<Vec<Complex64>>,
}

/// Face owning a boundary node: the first face (in the fixed order) on
/// which the node lies.
pub fn owner_face(dom: &DiscreteDomain, idx: usize) -> Option<u8> {
    let ijk = dom.unravel(idx);
    for axis in 0..3 {
        if ijk[axis] == 0 {
            return Some(2 * axis as u8);
        }
        if ijk[axis] == dom.n {
            return Some(2 * axis as u8 + 1);
        }
    }
    None
}

fn face_coords(dom: &DiscreteDomain, idx: usize, face: u8) -> (f64, f64) {
    let ijk = dom.unravel(idx);
    let axis = (face / 2) as usize;
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let n = dom.n as f64;
    (ijk[others[0]] as f64 / n, ijk[others[1]] as f64 / n)
}

impl BoundaryBasis {
    /// Constant plus face cosines up to `order` per direction; the `(0, 0)`
    /// mode of face 0 is dropped (it is spanned by the others and the constant).
    pub fn face_fourier(dom: &DiscreteDomain, order: u32) -> Self {
        let bidx = dom.boundary_indices();
        let owners: Vec<u8> = bidx.iter().map(|&b| owner_face(dom, b).expect("boundary node")).collect();
        let mut descriptors = vec![BasisDescriptor::Constant];
        let mut traces = vec![vec![Complex64::new(1.0, 0.0); bidx.len()]];
        for face in 0..6u8 {
            for k in 0..=order {
                for l in 0..=order {
                    if face == 0 && k == 0 && l == 0 {
                        continue;
                    }
                    descriptors.push(BasisDescriptor::FaceCosine { face, k, l });
                    traces.push(
                        bidx.iter()
                            .zip(&owners)
                            .map(|(&b, &o)| {
                                if o != face {
                                    return Complex64::new(0.0, 0.0);
                                }
                                let (s, t) = face_coords(dom, b, face);
                                Complex64::new((PI * k as f64 * s).cos() * (PI * l as f64 * t).cos(), 0.0)
                            })
                            .collect(),
                    );
                }
            }
        }
        BoundaryBasis {
            label: format!("face_fourier(order={order})"),
            descriptors,
            traces,
        }
    }

    /// One indicator per boundary node.
    pub fn nodal(dom: &DiscreteDomain) -> Self {
        let nb = dom.boundary_indices().len();
        BoundaryBasis {
            label: "nodal".into(),
            descriptors: (0..nb).map(|b| BasisDescriptor::Node { boundary_index: b }).collect(),
            traces: (0..nb)
                .map(|b| {
                    let mut t = vec![Complex64::new(0.0, 0.0); nb];
                    t[b] = Complex64::new(1.0, 0.0);
                    t
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Boundary values of `sum_i c_i phi_i`.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let nb = self.traces.first().map_or(0, |t| t.len());
        let mut out = vec![Complex64::new(0.0, 0.0); nb];
        for (c, t) in coeffs.iter().zip(&self.traces) {
            for (o, v) in out.iter_mut().zip(t) {
                *o += c * v;
            }
        }
        out
    }

    /// Least-squares coefficients of `trace` (nodal `l^2` inner product) and
    /// the relative residual `||trace - P trace|| / ||trace||`.
    pub fn project(&self, trace: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let d = self.len();
        if d == 0 {
            return Ok((Vec::new(), if trace.iter().all(|c| c.norm() == 0.0) { 0.0 } else { 1.0 }));
        }
        let mut gram = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let g: f64 = self.traces[i].iter().zip(&self.traces[j]).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
                gram[i * d + j] = g;
                gram[j * d + i] = g;
            }
        }
        let rhs: Vec<Complex64> = self.traces.iter().map(|t| t.iter().zip(trace).map(|(a, b)| a.conj() * b).sum()).collect();
        let coeffs = solve_dense(d, gram, rhs)?;
        let fit = self.synthesize(&coeffs);
        let num: f64 = fit.iter().zip(trace).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = trace.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        Ok((coeffs, if den == 0.0 { num } else { num / den }))
    }
}

/// Gaussian elimination with partial pivoting for a real matrix and complex
/// right-hand side.
fn solve_dense(d: usize, mut a: Vec<f64>, mut b: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&x, &y| a[x * d + col].abs().total_cmp(&a[y * d + col].abs()))
            .expect("non-empty");
        if a[piv * d + col].abs() <= 1e-14 * scale {
            return Err(Error::BasisMismatch("boundary basis is linearly dependent".into()));
        }
        if piv != col {
            for k in 0..d {
                a.swap(piv * d + k, col * d + k);
            }
            b.swap(piv, col);
        }
        for row in col + 1..d {
            let f = a[row * d + col] / a[col * d + col];
            if f == 0.0 {
                continue;
            }
            for k in col..d {
                a[row * d + k] -= f * a[col * d + k];
            }
            let bc = b[col];
            b[row] -= bc * f;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); d];
    for row in (0..d).rev() {
        let mut s = b[row];
        for k in row + 1..d {
            s -= x[k] * a[row * d + k];
        }
        x[row] = s / a[row * d + row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_basis_is_independent_and_spans_constant() {
        let dom = DiscreteDomain::unit(6);
        let basis = BoundaryBasis::face_fourier(&dom, 2);
        assert_eq!(basis.len(), 6 * 9);
        let one = vec![Complex64::new(1.0, 0.0); dom.boundary_indices().len()];
        let (c, res) = basis.project(&one).unwrap();
        assert!(res < 1e-12);
        assert!((c[0] - 1.0).norm() < 1e-10);
    }

    #[test]
    fn nodal_projection_is_exact() {
        let dom = DiscreteDomain::unit(3);
        let basis = BoundaryBasis::nodal(&dom);
        let t: Vec<Complex64> = dom.boundary_trace(|x| Complex64::new(x[0] * x[1], x[2]));
        let (c, res) = basis.project(&t).unwrap();
        assert!(res < 1e-14);
        assert_eq!(c.len(), t.len());
    }
}
