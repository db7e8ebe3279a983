use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cgolab"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: Option<&str>, dir: &Path) -> Output {
    let mut c = bin();
    c.arg(cmd).arg("--out").arg(dir.join("out")).arg("--threads").arg("1");
    if let Some(text) = config {
        let path = dir.join("cfg.toml");
        std::fs::write(&path, text).unwrap();
        c.arg("--config").arg(path);
    }
    c.output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("out/manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bundled_configs_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let cmd = [
            ("verify", "verify-fundsol"),
            ("kato", "kato-norm"),
            ("cgo", "cgo-decay"),
            ("dtn", "dtn-forward"),
            ("reconstruct", "reconstruct"),
            ("convergence", "convergence-study"),
        ]
        .iter()
        .find(|(p, _)| stem.starts_with(p))
        .map(|(_, c)| *c)
        .unwrap_or_else(|| panic!("no subcommand for {stem}"));
        let o = bin().arg(cmd).arg("--check").arg("-c").arg(&path).output().unwrap();
        assert!(o.status.success(), "{stem}: {}", stderr(&o));
        let echo: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(echo.is_object());
        seen += 1;
    }
    assert!(seen >= 6);
}

#[test]
fn fundsol_defaults_pass_and_are_indexed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("verify-fundsol", None, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("out/samples.csv"));
    assert_eq!(header, ["tau", "x1", "r", "value", "ratio"]);
    assert_eq!(rows.len(), 12000);
    let m = manifest(tmp.path());
    assert_eq!(m["command"], "verify-fundsol");
    assert_eq!(m["passed"], true);
    assert_eq!(m["threads"], 1);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["samples.csv", "report.json"]);
    assert!(!tmp.path().join("out/.manifest.json.tmp").exists());
}

#[test]
fn empty_tau_list_gives_empty_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("verify-fundsol", Some("tau = []\n"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (_, rows) = csv_rows(&tmp.path().join("out/samples.csv"));
    assert!(rows.is_empty());
}

#[test]
fn negative_tolerance_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("verify-fundsol", Some("seed = 3\ntolerance = -1.0\n"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("cfg.toml:2:"), "{e}");
    assert!(!tmp.path().join("out/manifest.json").exists());
}

#[test]
fn unknown_key_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("kato-norm", Some("grid_half = 8\n\n[potential]\nkind = \"ball\"\nheight = 1.0\nradius = 1.0\nwidth = 2.0\n"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("cfg.toml:") && e.contains("width"), "{e}");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("verify-fundsol").arg("-c").arg(tmp.path().join("nope.toml")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_thread_count_rejected() {
    let o = bin().arg("verify-fundsol").arg("--threads").arg("0").arg("--check").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cgo_decay_zero_potential_has_zero_remainders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "n = 16\nside = 4.0\nz_norms = [4.0, 8.0]\noperator_norm = false\n\n[potential]\nkind = \"zero\"\n";
    let o = run("cgo-decay", Some(cfg), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("out/decay.csv"));
    assert_eq!(rows.len(), 2);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for r in &rows {
        for name in ["residual", "r_norm_u", "f_norm", "v_norm", "schrodinger_residual"] {
            assert_eq!(r[col(name)].parse::<f64>().unwrap(), 0.0, "{name}");
        }
        assert_eq!(r[col("operator_norm")], "");
    }
}

#[test]
fn cgo_support_too_large_for_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "n = 16\nside = 4.0\n\n[potential]\nkind = \"bump\"\namplitude = 1.0\nradius = 1.5\n";
    let o = run("cgo-decay", Some(cfg), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too small"), "{}", stderr(&o));
}

#[test]
fn reconstruct_requires_v1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("reconstruct", Some("radius = 2.0\n"), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("v1"), "{}", stderr(&o));
}

#[test]
fn dtn_forward_small_box() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "n_box = 6\nbasis = \"nodal\"\n\n[potential]\nkind = \"bump\"\namplitude = 4.0\nradius = 0.3\n";
    let o = run("dtn-forward", Some(cfg), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(tmp.path());
    for f in m["files"].as_array().unwrap() {
        let p = tmp.path().join("out").join(f["path"].as_str().unwrap());
        assert_eq!(std::fs::metadata(p).unwrap().len(), f["bytes"].as_u64().unwrap());
    }
}

/// Every file but the manifest (which holds wall times) is bit-identical
/// across runs, with any thread count.
#[test]
fn kato_outputs_are_deterministic() {
    let cfg = "rule = \"coarse\"\ngrid_half = 8\nmodulus_radii = [0.5, 0.25]\nmollify = [0.25]\n\n[potential]\nkind = \"ball\"\nheight = 1.0\nradius = 1.0\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run("kato-norm", Some(cfg), a.path());
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    let pb = b.path().join("cfg.toml");
    std::fs::write(&pb, cfg).unwrap();
    let ob = bin().arg("kato-norm").arg("-c").arg(&pb).arg("-o").arg(b.path().join("out")).output().unwrap();
    assert_eq!(ob.status.code(), Some(0), "{}", stderr(&ob));

    let m = manifest(a.path());
    let mut listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(a.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    listed.sort();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for name in &listed {
        let x = std::fs::read(a.path().join("out").join(name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    let norm: f64 = serde_json::from_str::<Value>(&std::fs::read_to_string(a.path().join("out/report.json")).unwrap()).unwrap()["norm"]
        .as_f64()
        .unwrap();
    assert!((norm - 2.0 * std::f64::consts::PI).abs() < 0.05 * 2.0 * std::f64::consts::PI, "{norm}");
}
