use crate::config::*;
use crate::output::{num, Output};
use anyhow::{Context, Result};
use cgolab::cgo::{operator_norm, schrodinger_residual, solve_cgo, CgoOptions, GzOperator, PowerOptions};
use cgolab::dtn::{dtn_matrix, BoundaryBasis, DirichletOptions, DirichletSolver, DiscreteDomain, SolverOptions};
use cgolab::fourier::{Grid, Spectral};
use cgolab::fundsol::{cgo_vector_from_frame, verify_pointwise_bound, SampleSpec};
use cgolab::kato::{kato_norm, mollify, Formula, KatoOptions, PotentialSpec, SphereRule};
use cgolab::reconstruct::*;
use cgolab::Complex64;
use serde_json::json;

/// What a command hands back to the driver for the manifest.
pub struct Finished {
    pub passed: bool,
    pub summary: serde_json::Value,
}

fn spec_of(f: &Formula) -> PotentialSpec {
    let label = serde_json::to_value(f)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(String::from))
        .unwrap_or_else(|| "potential".into());
    PotentialSpec::new(label, f.clone())
}

pub fn verify_fundsol(cfg: &FundsolConfig, out: &mut Output) -> Result<Finished> {
    let spec = SampleSpec {
        samples_per_tau: cfg.samples_per_tau,
        x1_range: cfg.x1_range,
        r_range: cfg.r_range,
        seed: cfg.seed,
        tol: cfg.quad_tol,
    };
    let rep = verify_pointwise_bound(&cfg.tau, &spec, cfg.tolerance)?;
    out.stage("evaluate");
    let rows: Vec<Vec<String>> = rep
        .samples
        .iter()
        .map(|s| vec![num(s.tau), num(s.x1), num(s.r), num(s.value), num(s.ratio)])
        .collect();
    out.csv("samples.csv", &["tau", "x1", "r", "value", "ratio"], &rows, "sampled |E_tau(x)| |x|")?;
    out.json("report.json", &rep, "bound report")?;
    Ok(Finished {
        passed: rep.passed,
        summary: json!({
            "sample_count": rep.sample_count,
            "max_ratio": rep.max_ratio,
            "upper_bound": rep.upper_bound,
            "upper_ok": rep.upper_ok,
            "lower_ok": rep.lower_ok,
        }),
    })
}

pub fn kato(cfg: &KatoConfig, out: &mut Output) -> Result<Finished> {
    let v = spec_of(cfg.potential.as_ref().context("potential")?);
    let opts = KatoOptions {
        grid_half: cfg.grid_half,
        dilate: cfg.dilate,
        tol: cfg.tol,
        rule: match cfg.rule {
            RuleChoice::Default => SphereRule::default(),
            RuleChoice::Coarse => SphereRule::coarse(),
        },
        modulus_radii: cfg.modulus_radii.clone(),
        ..KatoOptions::default()
    };
    let rep = kato_norm(&v, &opts)?;
    out.stage("norm");
    let monotone = rep.modulus.windows(2).all(|w| w[1].1 <= w[0].1) && rep.modulus.iter().all(|m| m.1 <= rep.norm);
    let rows: Vec<Vec<String>> = rep.modulus.iter().map(|&(r, e)| vec![num(r), num(e)]).collect();
    out.csv("modulus.csv", &["r", "eta"], &rows, "Kato modulus eta(r)")?;

    let mut contraction = true;
    let mut mrows = Vec::new();
    for &d in &cfg.mollify {
        let m = mollify(&v, d);
        let nm = kato_norm(&m, &opts)?.norm;
        let diff = kato_norm(&v.plus(&m.scaled(-1.0)), &opts)?.norm;
        contraction &= nm <= rep.norm * (1.0 + 1e-3);
        mrows.push(vec![num(d), num(nm), num(diff), num(diff / rep.norm.max(f64::MIN_POSITIVE))]);
    }
    if !cfg.mollify.is_empty() {
        out.stage("mollify");
        out.csv(
            "mollify.csv",
            &["delta", "norm_mollified", "norm_difference", "relative_difference"],
            &mrows,
            "Kato norms of V_delta and V - V_delta",
        )?;
    }
    out.json("report.json", &rep, "Kato norm report")?;
    Ok(Finished {
        passed: monotone && contraction,
        summary: json!({
            "norm": rep.norm,
            "argmax": rep.argmax,
            "modulus_monotone": monotone,
            "mollification_contracts": contraction,
        }),
    })
}

pub fn cgo_decay(cfg: &CgoConfig, out: &mut Output) -> Result<Finished> {
    let grid = Grid::cubic(cfg.n, cfg.side, true);
    let spectral = Spectral::new(grid);
    let v = spec_of(&cfg.potential);
    let samples = v.sample(&grid);
    let mask: Vec<bool> = samples.iter().map(|s| *s != 0.0).collect();
    let ball: Vec<f64> = (0..grid.len())
        .map(|m| {
            let p = grid.point(m);
            if p.iter().map(|x| x * x).sum::<f64>() <= cfg.u_radius * cfg.u_radius {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let h3 = (cfg.side / cfg.n as f64).powi(3);
    let power = PowerOptions {
        seed: cfg.seed,
        ..PowerOptions::default()
    };
    let opts = CgoOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        power,
    };
    let mut rows = Vec::new();
    let mut r_u = Vec::new();
    let mut residual_ok = true;
    for &zn in &cfg.z_norms {
        let z = cgo_vector_from_frame(zn / 2f64.sqrt(), cfg.e, cfg.f)?;
        let op = GzOperator::with_spectral(&z, spectral.clone(), cfg.symbol)?;
        let sol = solve_cgo(&v, &op, &opts)?;
        let rn = (sol.r.values.iter().zip(&ball).map(|(r, w)| w * r.norm_sqr()).sum::<f64>() * h3).sqrt();
        let schr = if v.is_zero() { 0.0 } else { schrodinger_residual(&op, &samples, &mask, &sol.r) };
        let onorm = if cfg.operator_norm {
            num(operator_norm(&op, &ball, &ball, &power)?.value)
        } else {
            String::new()
        };
        let rep = &sol.report;
        residual_ok &= v.is_zero() || (rep.residual <= cfg.tol.max(1e-10) && rep.f_norm <= 2.0 * rep.v_norm * (1.0 + 1e-6));
        r_u.push(rn);
        rows.push(vec![
            num(zn),
            rep.iterations.to_string(),
            num(rep.contraction_estimate),
            num(rep.residual),
            num(rn),
            num(rep.f_norm),
            num(rep.v_norm),
            num(schr),
            onorm,
        ]);
        out.stage(&format!("z={zn}"));
    }
    let decreasing = v.is_zero() || r_u.windows(2).all(|w| w[1] < cfg.max_ratio * w[0]);
    out.csv(
        "decay.csv",
        &["z_norm", "iterations", "contraction", "residual", "r_norm_u", "f_norm", "v_norm", "schrodinger_residual", "operator_norm"],
        &rows,
        "CGO diagnostics per |z|",
    )?;
    Ok(Finished {
        passed: residual_ok && decreasing,
        summary: json!({ "r_norm_u": r_u, "residual_ok": residual_ok, "r_decreasing": decreasing }),
    })
}

pub fn dtn_forward(cfg: &DtnConfig, out: &mut Output) -> Result<Finished> {
    let dom = if cfg.centered {
        DiscreteDomain::centered(cfg.n_box)
    } else {
        DiscreteDomain::unit(cfg.n_box)
    };
    let v = spec_of(&cfg.potential);
    let opts = DirichletOptions {
        solver: SolverOptions {
            tol: cfg.solver_tol,
            ..SolverOptions::default()
        },
        ..DirichletOptions::default()
    };
    let solver = DirichletSolver::new(&v, dom, &opts)?;
    out.stage("factor");
    let basis = match cfg.basis {
        BasisChoice::FaceFourier => BoundaryBasis::face_fourier(&dom, cfg.order),
        BasisChoice::Nodal => BoundaryBasis::nodal(&dom),
    };
    let m = dtn_matrix(&solver, &basis)?;
    out.stage("assemble");
    let scale = m.entries.iter().fold(0.0f64, |a, c| a.max(c.norm()));
    let asym = m.max_asymmetry() / scale.max(f64::MIN_POSITIVE);
    std::fs::write(out_path(out, "dtn.json"), m.to_json()? + "\n")?;
    out.index_existing("dtn.json", "json", "DtN matrix in the boundary basis")?;
    let passed = asym <= cfg.symmetry_tol;
    let summary = json!({
        "dim": m.dim(),
        "relative_asymmetry": asym,
        "lambda_min": solver.lambda_min(),
        "direct_solver": solver.uses_direct(),
    });
    out.json("summary.json", &summary, "DtN summary")?;
    Ok(Finished { passed, summary })
}

fn out_path(out: &Output, name: &str) -> std::path::PathBuf {
    out.root().join(name)
}

struct Pipeline {
    setup: ReconstructionSetup,
    v1: PotentialSpec,
    v2: PotentialSpec,
    d1: DirichletSolver,
    d2: DirichletSolver,
    opts: ReconstructOptions,
}

impl Pipeline {
    fn new(s: &SetupConfig, v1: &Formula, v2: &Formula) -> Result<Self> {
        let setup = ReconstructionSetup::new(s.n_box, s.padding)?;
        let (v1, v2) = (spec_of(v1), spec_of(v2));
        let d = DirichletOptions::default();
        let d1 = DirichletSolver::new(&v1, setup.domain, &d)?;
        let d2 = DirichletSolver::new(&v2, setup.domain, &d)?;
        let mut opts = ReconstructOptions {
            kind: s.symbol,
            s_min: s.s_min,
            max_doublings: s.max_doublings,
            extra_doublings: s.extra_doublings,
            contraction_gate: s.contraction_gate,
            max_amplification: s.max_amplification,
            ..ReconstructOptions::default()
        };
        opts.cgo.tol = s.cgo_tol;
        opts.cgo.power.seed = s.seed;
        Ok(Pipeline { setup, v1, v2, d1, d2, opts })
    }

    fn ctx(&self) -> Result<ModeContext<'_>> {
        Ok(ModeContext::new(&self.setup, &self.v1, &self.v2, &self.d1, &self.d2, TraceBasis::Nodal, self.opts.clone())?)
    }
}

fn c_cols(c: Option<Complex64>) -> [String; 2] {
    match c {
        Some(c) => [num(c.re), num(c.im)],
        None => [String::new(), String::new()],
    }
}

pub fn reconstruct(cfg: &ReconstructConfig, out: &mut Output) -> Result<Finished> {
    let p = Pipeline::new(&cfg.setup, cfg.v1.as_ref().context("v1")?, cfg.v2.as_ref().context("v2")?)?;
    out.stage("factor");
    let ctx = p.ctx()?;
    let side = cfg.frequency_side.unwrap_or_else(|| p.setup.frequency_side());
    let xis = frequency_lattice(side, cfg.radius);
    let window = Window {
        radius: cfg.radius,
        taper: cfg.taper,
    };
    let grid = Grid::cubic(cfg.output_n, side, false);
    let res = reconstruct_potential(&ctx, &xis, window, &grid)?;
    out.stage("modes");
    let truth: Vec<Complex64> = xis.iter().map(|&xi| ctx.volumetric_mode(xi)).collect();
    let zero = PotentialSpec::zero();
    let v1_ctx = ModeContext::new(&p.setup, &p.v1, &zero, &p.d1, &p.d1, TraceBasis::Nodal, p.opts.clone())?;
    let v1_modes: Vec<ModeEntry> = res
        .modes
        .iter()
        .map(|m| ModeEntry {
            value: v1_ctx.volumetric_mode(m.xi),
            ..*m
        })
        .collect();
    let zeros = vec![Complex64::new(0.0, 0.0); xis.len()];
    let v1_norm = band_limited_error(&v1_modes, &zeros);
    let rec_norm = band_limited_error(&res.modes, &zeros);
    let truth_is_zero = truth.iter().all(|t| t.norm() == 0.0);
    let error = band_limited_error(&res.modes, &truth);
    let relative_to_v1 = if v1_norm > 0.0 { rec_norm / v1_norm } else { rec_norm };
    let passed = if truth_is_zero { relative_to_v1 < cfg.control_threshold } else { error < cfg.error_threshold };

    let rows: Vec<Vec<String>> = res
        .modes
        .iter()
        .zip(&res.records)
        .zip(&truth)
        .map(|((m, r), t)| {
            let mut row = vec![num(m.xi[0]), num(m.xi[1]), num(m.xi[2]), num(m.weight)];
            row.push(r.s.map(num).unwrap_or_default());
            row.extend(c_cols(r.estimate));
            row.extend([num(m.value.re), num(m.value.im), num(t.re), num(t.im)]);
            row
        })
        .collect();
    out.csv(
        "modes.csv",
        &["xi1", "xi2", "xi3", "weight", "s", "estimate_re", "estimate_im", "mode_re", "mode_im", "truth_re", "truth_im"],
        &rows,
        "mode table: raw estimate, symmetrized mode and reference",
    )?;
    out.json("modes.json", &res.records, "per-mode s schedule with CGO and pairing diagnostics")?;
    out.grid("potential.cgof", &res.potential, "band-limited reconstruction of V1 - V2")?;
    Ok(Finished {
        passed,
        summary: json!({
            "modes": xis.len(),
            "failed": res.failed,
            "frequency_side": side,
            "relative_error": if truth_is_zero { serde_json::Value::Null } else { json!(error) },
            "reconstruction_norm_relative_to_v1": relative_to_v1,
            "control": truth_is_zero,
        }),
    })
}

pub fn convergence(cfg: &ConvergenceConfig, out: &mut Output) -> Result<Finished> {
    let p = Pipeline::new(&cfg.setup, cfg.v1.as_ref().context("v1")?, cfg.v2.as_ref().context("v2")?)?;
    out.stage("factor");
    let ctx = p.ctx()?;
    let rows = convergence_study(&ctx, cfg.xi, &cfg.s_list);
    out.stage("study");
    let zero = rows.first().is_some_and(|r| r.truth.norm() == 0.0);
    let passed = if zero {
        rows.iter().all(|r| r.estimate.is_some_and(|e| e.norm() <= cfg.zero_tol))
    } else {
        rows.iter().all(|r| r.error.is_some()) && rows.windows(2).all(|w| w[1].error < w[0].error)
    };
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![num(r.s)];
            row.extend(c_cols(r.estimate));
            row.extend([num(r.truth.re), num(r.truth.im)]);
            row.push(r.error.map(num).unwrap_or_default());
            row.extend([num(r.r_norm[0]), num(r.r_norm[1]), num(r.contraction[0]), num(r.contraction[1])]);
            row.push(r.bias_bound.map(num).unwrap_or_default());
            row.push(r.error_message.clone().unwrap_or_default());
            row
        })
        .collect();
    out.csv(
        "study.csv",
        &["s", "estimate_re", "estimate_im", "truth_re", "truth_im", "error", "r_norm_z1", "r_norm_z2", "contraction_z1", "contraction_z2", "bias_bound", "message"],
        &table,
        "error and CGO diagnostics against s",
    )?;
    Ok(Finished {
        passed,
        summary: json!({ "xi": cfg.xi, "errors": rows.iter().map(|r| r.error).collect::<Vec<_>>() }),
    })
}
