//! Run configuration: one TOML file per run, validated before any compute.

use cgolab::cgo::SymbolKind;
use cgolab::kato::Formula;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// A configuration problem, with the 1-based line of the offending key when
/// it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.file, l, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Source text kept for locating keys in validation messages.
pub struct Source {
    pub name: String,
    pub text: String,
}

impl Source {
    pub fn read(path: Option<&Path>) -> Result<Source, ConfigError> {
        match path {
            None => Ok(Source {
                name: "<defaults>".into(),
                text: String::new(),
            }),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                    file: p.display().to_string(),
                    line: None,
                    message: format!("cannot read config: {e}"),
                })?;
                Ok(Source {
                    name: p.display().to_string(),
                    text,
                })
            }
        }
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, ConfigError> {
        toml::from_str(&self.text).map_err(|e| {
            let line = e.span().map(|s| self.text[..s.start.min(self.text.len())].matches('\n').count() + 1);
            ConfigError {
                file: self.name.clone(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    /// Line of `key` inside `[section]` (or the top level for `""`).
    pub fn locate(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(h) = line.strip_prefix('[') {
                current = h.trim_start_matches('[').trim_end_matches(']').trim().to_string();
                if section == current && key.is_empty() {
                    return Some(i + 1);
                }
                continue;
            }
            if current == section {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        None
    }

    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.name.clone(),
            line: self.locate(section, key),
            message: message.into(),
        }
    }
}

fn positive(src: &Source, section: &str, key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(src.error(section, key, format!("`{key}` must be positive and finite, got {v}")))
    }
}

fn non_negative(src: &Source, section: &str, key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(src.error(section, key, format!("`{key}` must be non-negative and finite, got {v}")))
    }
}

fn range(src: &Source, key: &str, r: [f64; 2]) -> Result<(), ConfigError> {
    if r[0] < r[1] && r.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(src.error("", key, format!("`{key}` must be an increasing pair, got {r:?}")))
    }
}

/// `verify-fundsol`: sampled check of `|E_tau(x)| |x| <= 3 sqrt 2 / (4 pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FundsolConfig {
    pub tau: Vec<f64>,
    pub samples_per_tau: usize,
    pub x1_range: [f64; 2],
    pub r_range: [f64; 2],
    pub seed: u64,
    /// Absolute accuracy of each `E_tau` evaluation.
    pub quad_tol: f64,
    /// Slack allowed on the bound.
    pub tolerance: f64,
}

impl Default for FundsolConfig {
    fn default() -> Self {
        FundsolConfig {
            tau: vec![0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            samples_per_tau: 2000,
            x1_range: [-10.0, 10.0],
            r_range: [1e-2, 10.0],
            seed: 0,
            quad_tol: 1e-9,
            tolerance: 1e-3,
        }
    }
}

impl FundsolConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        non_negative(src, "", "tolerance", self.tolerance)?;
        positive(src, "", "quad_tol", self.quad_tol)?;
        if let Some(t) = self.tau.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(src.error("", "tau", format!("every tau must be non-negative, got {t}")));
        }
        range(src, "x1_range", self.x1_range)?;
        range(src, "r_range", self.r_range)?;
        positive(src, "", "r_range", self.r_range[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleChoice {
    #[default]
    Default,
    Coarse,
}

/// `kato-norm`: norm, modulus and an optional mollification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KatoConfig {
    pub potential: Option<Formula>,
    pub grid_half: usize,
    pub dilate: f64,
    pub tol: f64,
    pub rule: RuleChoice,
    pub modulus_radii: Vec<f64>,
    /// Widths for the mollification table; empty skips it.
    pub mollify: Vec<f64>,
}

impl Default for KatoConfig {
    fn default() -> Self {
        KatoConfig {
            potential: None,
            grid_half: 16,
            dilate: 1.0,
            tol: 1e-3,
            rule: RuleChoice::Default,
            modulus_radii: (1..=10).map(|k| 2f64.powi(-k)).collect(),
            mollify: Vec::new(),
        }
    }
}

impl KatoConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        if self.potential.is_none() {
            return Err(src.error("", "", "missing potential descriptor: add a [potential] table"));
        }
        if self.grid_half == 0 {
            return Err(src.error("", "grid_half", "`grid_half` must be at least 1"));
        }
        non_negative(src, "", "dilate", self.dilate)?;
        positive(src, "", "tol", self.tol)?;
        for &r in &self.modulus_radii {
            positive(src, "", "modulus_radii", r)?;
        }
        for &d in &self.mollify {
            positive(src, "", "mollify", d)?;
        }
        Ok(())
    }
}

/// `cgo-decay`: CGO solves over a `|z|` schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CgoConfig {
    pub n: usize,
    pub side: f64,
    pub potential: Formula,
    pub z_norms: Vec<f64>,
    /// `z = (|z| / sqrt 2) (e + i f)` with `e`, `f` orthonormal.
    pub e: [f64; 3],
    pub f: [f64; 3],
    pub symbol: SymbolKind,
    /// Radius of the ball `U` for `||r_z||_{L^2(U)}` and the weighted norm.
    pub u_radius: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub operator_norm: bool,
    pub seed: u64,
    /// Largest accepted ratio of successive `||r_z||_{L^2(U)}`.
    pub max_ratio: f64,
}

impl Default for CgoConfig {
    fn default() -> Self {
        CgoConfig {
            n: 64,
            side: 4.0,
            potential: Formula::Bump {
                amplitude: 10.0,
                radius: 0.5,
                center: [0.0; 3],
            },
            z_norms: vec![8.0, 16.0, 32.0, 64.0],
            e: [1.0, 0.0, 0.0],
            f: [0.0, 1.0, 0.0],
            symbol: SymbolKind::Spectral,
            u_radius: 1.0,
            tol: 1e-12,
            max_iter: 1000,
            operator_norm: true,
            seed: 0,
            max_ratio: 0.8,
        }
    }
}

impl CgoConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        if self.n < 8 {
            return Err(src.error("", "n", format!("grid needs at least 8 nodes per axis, got {}", self.n)));
        }
        positive(src, "", "side", self.side)?;
        positive(src, "", "u_radius", self.u_radius)?;
        positive(src, "", "tol", self.tol)?;
        positive(src, "", "max_ratio", self.max_ratio)?;
        for &z in &self.z_norms {
            positive(src, "", "z_norms", z)?;
        }
        let support = self.potential.support();
        let reach = support.max_abs_coord().max(self.u_radius);
        if !support.is_empty() && reach > 0.25 * self.side {
            return Err(src.error(
                "",
                "side",
                format!(
                    "box side {} is too small for padding: the potential and U reach |x| = {reach}, which must stay within side/4",
                    self.side
                ),
            ));
        }
        let h = self.side / self.n as f64;
        if !support.is_empty() && support.max_extent() < 4.0 * h {
            return Err(src.error("", "n", format!("grid spacing {h} does not resolve the potential support")));
        }
        let dot: f64 = (0..3).map(|a| self.e[a] * self.f[a]).sum();
        let ne: f64 = self.e.iter().map(|x| x * x).sum();
        let nf: f64 = self.f.iter().map(|x| x * x).sum();
        if (ne - 1.0).abs() > 1e-12 || (nf - 1.0).abs() > 1e-12 || dot.abs() > 1e-12 {
            return Err(src.error("", "f", "`e` and `f` must be orthonormal"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    #[default]
    FaceFourier,
    Nodal,
}

/// `dtn-forward`: discrete DtN matrix of one potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtnConfig {
    pub n_box: usize,
    /// `[-1/2, 1/2]^3` when true, `[0, 1]^3` otherwise.
    pub centered: bool,
    pub potential: Formula,
    pub basis: BasisChoice,
    pub order: u32,
    pub solver_tol: f64,
    /// Accepted `max |M - M^T|` relative to `max |M|`.
    pub symmetry_tol: f64,
}

impl Default for DtnConfig {
    fn default() -> Self {
        DtnConfig {
            n_box: 16,
            centered: true,
            potential: Formula::Zero,
            basis: BasisChoice::FaceFourier,
            order: 2,
            solver_tol: 1e-12,
            symmetry_tol: 1e-8,
        }
    }
}

impl DtnConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        if self.n_box < 2 {
            return Err(src.error("", "n_box", "`n_box` must be at least 2"));
        }
        positive(src, "", "solver_tol", self.solver_tol)?;
        positive(src, "", "symmetry_tol", self.symmetry_tol)
    }
}

/// Shared `[setup]` table of the reconstruction commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetupConfig {
    pub n_box: usize,
    pub padding: usize,
    pub symbol: SymbolKind,
    pub s_min: f64,
    pub max_doublings: usize,
    pub extra_doublings: usize,
    pub contraction_gate: f64,
    pub max_amplification: f64,
    pub cgo_tol: f64,
    pub seed: u64,
}

impl Default for SetupConfig {
    fn default() -> Self {
        SetupConfig {
            n_box: 32,
            padding: 2,
            symbol: SymbolKind::FiniteDifference,
            s_min: 4.0,
            max_doublings: 3,
            extra_doublings: 1,
            contraction_gate: 0.25,
            max_amplification: 1e8,
            cgo_tol: 1e-12,
            seed: 0,
        }
    }
}

impl SetupConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        if self.n_box < 4 {
            return Err(src.error("setup", "n_box", "`n_box` must be at least 4"));
        }
        if self.padding < 2 {
            return Err(src.error("setup", "padding", "`padding` must be at least 2"));
        }
        positive(src, "setup", "s_min", self.s_min)?;
        positive(src, "setup", "contraction_gate", self.contraction_gate)?;
        positive(src, "setup", "max_amplification", self.max_amplification)?;
        positive(src, "setup", "cgo_tol", self.cgo_tol)
    }
}

fn check_potential(src: &Source, name: &str, v: &Option<Formula>) -> Result<(), ConfigError> {
    let Some(f) = v else {
        return Err(src.error("", "", format!("missing potential descriptor: add a [{name}] table")));
    };
    let s = f.support();
    if !s.is_empty() && s.max_abs_coord() >= 0.5 {
        return Err(src.error(name, "", format!("[{name}] must be supported inside the open box (-1/2, 1/2)^3")));
    }
    Ok(())
}

/// `reconstruct`: Fourier modes of `V1 - V2` from the two DtN maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub setup: SetupConfig,
    pub v1: Option<Formula>,
    pub v2: Option<Formula>,
    pub radius: f64,
    /// Period of the frequency lattice; defaults to 1.5 times the CGO grid side.
    pub frequency_side: Option<f64>,
    pub taper: f64,
    pub output_n: usize,
    /// Accepted relative band-limited error when `V1 != V2`.
    pub error_threshold: f64,
    /// Accepted reconstruction norm relative to `V1` when `V1 == V2`.
    pub control_threshold: f64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            setup: SetupConfig::default(),
            v1: None,
            v2: Some(Formula::Zero),
            radius: 4.0,
            frequency_side: None,
            taper: 0.5,
            output_n: 24,
            error_threshold: 0.2,
            control_threshold: 0.01,
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        self.setup.validate(src)?;
        check_potential(src, "v1", &self.v1)?;
        check_potential(src, "v2", &self.v2)?;
        non_negative(src, "", "radius", self.radius)?;
        if let Some(l) = self.frequency_side {
            positive(src, "", "frequency_side", l)?;
        }
        if !(0.0..=1.0).contains(&self.taper) {
            return Err(src.error("", "taper", "`taper` must lie in [0, 1]"));
        }
        if self.output_n < 2 {
            return Err(src.error("", "output_n", "`output_n` must be at least 2"));
        }
        positive(src, "", "error_threshold", self.error_threshold)?;
        positive(src, "", "control_threshold", self.control_threshold)
    }
}

/// `convergence-study`: one frequency over an `s` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub setup: SetupConfig,
    pub v1: Option<Formula>,
    pub v2: Option<Formula>,
    pub xi: [f64; 3],
    pub s_list: Vec<f64>,
    /// Error entries below this count as converged for `V1 == V2`.
    pub zero_tol: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            setup: SetupConfig::default(),
            v1: None,
            v2: Some(Formula::Zero),
            xi: [2.0, 0.0, 0.0],
            s_list: vec![4.0, 8.0, 16.0],
            zero_tol: 1e-9,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        self.setup.validate(src)?;
        check_potential(src, "v1", &self.v1)?;
        check_potential(src, "v2", &self.v2)?;
        let half = self.xi.iter().map(|x| x * x).sum::<f64>().sqrt() / 2.0;
        for &s in &self.s_list {
            if !(s > half) {
                return Err(src.error("", "s_list", format!("every s must exceed |xi| / 2 = {half}, got {s}")));
            }
        }
        positive(src, "", "zero_tol", self.zero_tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(text: &str) -> Source {
        Source {
            name: "t.toml".into(),
            text: text.into(),
        }
    }

    #[test]
    fn negative_tolerance_points_at_its_line() {
        let s = src("tau = [1.0]\n\ntolerance = -1\n");
        let c: FundsolConfig = s.parse().unwrap();
        let e = c.validate(&s).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("t.toml:3:"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let s = src("tau = [1.0]\nsamples = 3\n");
        let e = s.parse::<FundsolConfig>().unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn sections_are_tracked() {
        let s = src("radius = 4\n[setup]\nn_box = 2\n[v1]\nkind = \"bump\"\namplitude = 1.0\nradius = 0.3\n");
        let c: ReconstructConfig = s.parse().unwrap();
        let e = c.validate(&s).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert_eq!(s.locate("v1", "radius"), Some(7));
        assert_eq!(s.locate("", "radius"), Some(1));
    }

    #[test]
    fn missing_potential_is_an_error() {
        let s = src("radius = 3\n");
        let c: ReconstructConfig = s.parse().unwrap();
        assert!(c.validate(&s).unwrap_err().message.contains("missing potential"));
    }
}
