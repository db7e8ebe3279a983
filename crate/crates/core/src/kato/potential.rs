//! Potentials described by a serializable formula tree.

use crate::error::{Error, Result};
use crate::fourier::{Grid, GridField};
use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl SupportBox {
    pub fn empty() -> Self {
        SupportBox { lo: [0.0; 3], hi: [0.0; 3] }
    }

    pub fn cube(center: [f64; 3], half: f64) -> Self {
        SupportBox {
            lo: std::array::from_fn(|a| center[a] - half),
            hi: std::array::from_fn(|a| center[a] + half),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.hi[a] <= self.lo[a])
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        (0..3).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }

    pub fn dilate(&self, by: f64) -> Self {
        if self.is_empty() {
            return *self;
        }
        SupportBox {
            lo: std::array::from_fn(|a| self.lo[a] - by),
            hi: std::array::from_fn(|a| self.hi[a] + by),
        }
    }

    pub fn union(&self, other: &SupportBox) -> Self {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        SupportBox {
            lo: std::array::from_fn(|a| self.lo[a].min(other.lo[a])),
            hi: std::array::from_fn(|a| self.hi[a].max(other.hi[a])),
        }
    }

    pub fn diameter(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..3).map(|a| (self.hi[a] - self.lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn max_extent(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..3).map(|a| self.hi[a] - self.lo[a]).fold(0.0, f64::max)
    }

    /// Largest `|x_a|` over the box, per axis.
    pub fn max_abs_coord(&self) -> f64 {
        (0..3).map(|a| self.lo[a].abs().max(self.hi[a].abs())).fold(0.0, f64::max)
    }

    /// Grid mask of nodes inside the box.
    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.len()).map(|m| self.contains(grid.point(m))).collect()
    }
}

/// Formula tree of a potential. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Formula {
    Zero,
    /// `A exp(1 - 1 / (1 - |x - c|^2 / R^2))` inside the ball, peak value `A`.
    Bump {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `height` on the closed ball.
    Ball {
        height: f64,
        radius: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    /// `|x'|^{-2} |log |x'||^{-delta}` with `x' = (x_2, x_3)`, cut off
    /// smoothly between `|x| = 1/2` and `|x| = 3/4`.
    LogSingular { delta: f64 },
    /// Gaussian `A exp(-|x - c|^2 / (2 sigma^2))` truncated at `cutoff` sigmas.
    Gaussian {
        amplitude: f64,
        sigma: f64,
        #[serde(default)]
        center: [f64; 3],
        #[serde(default = "default_cutoff")]
        cutoff: f64,
    },
    Scaled { factor: f64, inner: Box<Formula> },
    Sum { terms: Vec<Formula> },
    /// `V 1_{|V| <= level}` when `keep_small`, else `V 1_{|V| > level}`.
    Truncated { inner: Box<Formula>, level: f64, keep_small: bool },
    /// `V * phi_delta` with the standard bump mollifier.
    Mollified { inner: Box<Formula>, delta: f64 },
}

fn default_cutoff() -> f64 {
    8.0
}

/// Smooth step: 1 for `t <= 0`, 0 for `t >= 1`.
fn smooth_cutoff(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        b / (a + b)
    }
}

fn dist2(x: [f64; 3], c: [f64; 3]) -> f64 {
    (0..3).map(|a| (x[a] - c[a]).powi(2)).sum()
}

/// Unit-mass mollifier profile `C exp(-1 / (1 - |y|^2))` on the unit ball.
pub const MOLLIFIER_NORMALIZATION: f64 = 2.267_116_739_608_326; // 1 / int exp(-1/(1-|y|^2)) dy

pub fn mollifier_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        MOLLIFIER_NORMALIZATION * (-1.0 / (1.0 - r2)).exp()
    }
}

impl Formula {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            Formula::Zero => 0.0,
            Formula::Bump { amplitude, radius, center } => {
                let q = dist2(x, *center) / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
            Formula::Ball { height, radius, center } => {
                if dist2(x, *center) <= radius * radius {
                    *height
                } else {
                    0.0
                }
            }
            Formula::LogSingular { delta } => {
                let rho = (x[1] * x[1] + x[2] * x[2]).sqrt();
                let r = (x[0] * x[0] + rho * rho).sqrt();
                if r >= 0.75 {
                    return 0.0;
                }
                if rho == 0.0 {
                    return f64::INFINITY;
                }
                rho.powi(-2) * rho.ln().abs().powf(-delta) * smooth_cutoff((r - 0.5) / 0.25)
            }
            Formula::Gaussian {
                amplitude,
                sigma,
                center,
                cutoff,
            } => {
                let q = dist2(x, *center) / (sigma * sigma);
                if q > cutoff * cutoff {
                    0.0
                } else {
                    amplitude * (-0.5 * q).exp()
                }
            }
            Formula::Scaled { factor, inner } => factor * inner.eval(x),
            Formula::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
            Formula::Truncated { inner, level, keep_small } => {
                let v = inner.eval(x);
                if (v.abs() <= *level) == *keep_small {
                    v
                } else {
                    0.0
                }
            }
            Formula::Mollified { inner, delta } => mollify_at(inner, *delta, x),
        }
    }

    pub fn support(&self) -> SupportBox {
        match self {
            Formula::Zero => SupportBox::empty(),
            Formula::Bump { radius, center, .. } | Formula::Ball { radius, center, .. } => SupportBox::cube(*center, *radius),
            Formula::LogSingular { .. } => SupportBox::cube([0.0; 3], 0.75),
            Formula::Gaussian { sigma, center, cutoff, .. } => SupportBox::cube(*center, sigma * cutoff),
            Formula::Scaled { factor, inner } => {
                if *factor == 0.0 {
                    SupportBox::empty()
                } else {
                    inner.support()
                }
            }
            Formula::Sum { terms } => terms.iter().fold(SupportBox::empty(), |b, t| b.union(&t.support())),
            Formula::Truncated { inner, .. } => inner.support(),
            Formula::Mollified { inner, delta } => inner.support().dilate(*delta),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Formula::Zero => true,
            Formula::Bump { amplitude, .. } | Formula::Gaussian { amplitude, .. } => *amplitude == 0.0,
            Formula::Ball { height, .. } => *height == 0.0,
            Formula::Scaled { factor, inner } => *factor == 0.0 || inner.is_zero(),
            Formula::Sum { terms } => terms.iter().all(|t| t.is_zero()),
            Formula::Truncated { inner, .. } | Formula::Mollified { inner, .. } => inner.is_zero(),
            Formula::LogSingular { .. } => false,
        }
    }

    /// An upper bound for `sup |V|` when one is known in closed form.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            Formula::Zero => Some(0.0),
            Formula::Bump { amplitude, .. } | Formula::Gaussian { amplitude, .. } => Some(amplitude.abs()),
            Formula::Ball { height, .. } => Some(height.abs()),
            Formula::LogSingular { .. } => None,
            Formula::Scaled { factor, inner } => inner.sup_bound().map(|s| s * factor.abs()),
            Formula::Sum { terms } => terms.iter().map(|t| t.sup_bound()).sum(),
            Formula::Truncated { inner, level, keep_small } => {
                if *keep_small {
                    Some(inner.sup_bound().map_or(*level, |s| s.min(*level)))
                } else {
                    inner.sup_bound()
                }
            }
            Formula::Mollified { inner, .. } => inner.sup_bound(),
        }
    }
}

/// Product Gauss rule for the mollifier on the unit ball, built once.
fn mollifier_rule() -> &'static [([f64; 3], f64)] {
    use std::sync::OnceLock;
    static RULE: OnceLock<Vec<([f64; 3], f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let (rn, rw) = crate::quad::gauss_legendre(8);
        let (cn, cw) = crate::quad::gauss_legendre(8);
        let nphi = 12;
        let mut rule = Vec::with_capacity(8 * 8 * nphi);
        let mut total = 0.0;
        for (&ri, &wri) in rn.iter().zip(&rw) {
            let rho = 0.5 * (ri + 1.0);
            let wr = 0.5 * wri * rho * rho * mollifier_profile(rho * rho);
            for (&ct, &wc) in cn.iter().zip(&cw) {
                let st = (1.0 - ct * ct).sqrt();
                for k in 0..nphi {
                    let ph = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / nphi as f64;
                    let w = wr * wc * 2.0 * std::f64::consts::PI / nphi as f64;
                    total += w;
                    rule.push(([rho * st * ph.cos(), rho * st * ph.sin(), rho * ct], w));
                }
            }
        }
        // Renormalize so the discrete mollifier has unit mass exactly.
        rule.iter_mut().for_each(|(_, w)| *w /= total);
        rule
    })
}

fn mollify_at(inner: &Formula, delta: f64, x: [f64; 3]) -> f64 {
    if !inner.support().dilate(delta).contains(x) {
        return 0.0;
    }
    mollifier_rule()
        .iter()
        .map(|(y, w)| {
            let v = inner.eval([x[0] - delta * y[0], x[1] - delta * y[1], x[2] - delta * y[2]]);
            if v.is_finite() {
                w * v
            } else {
                0.0
            }
        })
        .sum()
}

/// A potential with a label and its support box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub label: String,
    pub formula: Formula,
    pub support: SupportBox,
}

impl PotentialSpec {
    pub fn new(label: impl Into<String>, formula: Formula) -> Self {
        let support = formula.support();
        PotentialSpec {
            label: label.into(),
            formula,
            support,
        }
    }

    pub fn zero() -> Self {
        PotentialSpec::new("zero", Formula::Zero)
    }

    pub fn bump(amplitude: f64, radius: f64, center: [f64; 3]) -> Self {
        PotentialSpec::new(
            format!("bump(A={amplitude},R={radius})"),
            Formula::Bump { amplitude, radius, center },
        )
    }

    pub fn ball_indicator(radius: f64) -> Self {
        PotentialSpec::new(
            format!("ball(R={radius})"),
            Formula::Ball {
                height: 1.0,
                radius,
                center: [0.0; 3],
            },
        )
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        if self.support.is_empty() || !self.support.contains(x) {
            return 0.0;
        }
        self.formula.eval(x)
    }

    pub fn is_zero(&self) -> bool {
        self.formula.is_zero()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PotentialSpec::new(
            format!("{}*{}", factor, self.label),
            Formula::Scaled {
                factor,
                inner: Box::new(self.formula.clone()),
            },
        )
    }

    pub fn plus(&self, other: &PotentialSpec) -> Self {
        PotentialSpec::new(
            format!("{}+{}", self.label, other.label),
            Formula::Sum {
                terms: vec![self.formula.clone(), other.formula.clone()],
            },
        )
    }

    /// Real samples on grid nodes; non-finite values (a singular line hit
    /// exactly) are replaced by zero.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|m| {
                let v = self.eval(grid.point(m));
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn sample_field(&self, grid: &Grid) -> GridField {
        GridField::from_real(*grid, &self.sample(grid))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut p: PotentialSpec = serde_json::from_str(s).map_err(|e| Error::Io(e.to_string()))?;
        p.support = p.formula.support();
        Ok(p)
    }
}

/// `v = |V|^{1/2}` and `w = sgn(V) |V|^{1/2}` from samples.
pub fn factor_potential(samples: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v: Vec<f64> = samples.iter().map(|s| s.abs().sqrt()).collect();
    let w: Vec<f64> = samples.iter().zip(&v).map(|(s, r)| s.signum() * r).collect();
    (v, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_peak_and_support() {
        let b = PotentialSpec::bump(10.0, 0.5, [0.0; 3]);
        assert!((b.eval([0.0; 3]) - 10.0).abs() < 1e-14);
        assert_eq!(b.eval([0.5, 0.0, 0.0]), 0.0);
        assert!(b.eval([0.3, 0.1, 0.0]) > 0.0);
    }

    #[test]
    fn log_singular_value() {
        let p = PotentialSpec::new("ex", Formula::LogSingular { delta: 3.0 });
        let rho = (-2.0f64).exp();
        let v = p.eval([0.1, rho, 0.0]);
        assert!((v - 4f64.exp() / 8.0).abs() < 1e-12);
        assert!((v - 6.8245).abs() < 1e-3);
        assert_eq!(p.eval([0.8, 0.0, 0.1]), 0.0);
    }

    #[test]
    fn mollifier_normalization() {
        // Radial integral of the profile, 4 pi int_0^1 r^2 exp(-1/(1-r^2)) dr.
        let q = crate::quad::integrate_real(
            |r| 4.0 * std::f64::consts::PI * r * r * mollifier_profile(r * r),
            0.0,
            1.0,
            &crate::quad::QuadOptions::default(),
        )
        .unwrap();
        assert!((q.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let p = PotentialSpec::bump(2.0, 0.3, [0.1, 0.0, -0.1]).plus(&PotentialSpec::ball_indicator(0.2));
        let back = PotentialSpec::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn factorization() {
        let (v, w) = factor_potential(&[4.0, -9.0, 0.0]);
        assert_eq!(v, vec![2.0, 3.0, 0.0]);
        assert_eq!(w, vec![2.0, -3.0, 0.0]);
    }

    #[test]
    fn mollified_keeps_mass_of_constant() {
        let p = PotentialSpec::new(
            "m",
            Formula::Mollified {
                inner: Box::new(Formula::Ball {
                    height: 3.0,
                    radius: 1.0,
                    center: [0.0; 3],
                }),
                delta: 0.1,
            },
        );
        assert!((p.eval([0.0; 3]) - 3.0).abs() < 1e-12);
        assert_eq!(p.eval([1.2, 0.0, 0.0]), 0.0);
    }
}
