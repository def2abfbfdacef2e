use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roa_core::bench;
use roa_core::cli::RunConfig;
use roa_core::vsiter::{level_set_certificate, Certificate, IterationConfig};
use roa_core::{DynamicalSystem, Polynomial};

fn roa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("roa runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_VDP: &str = r#"
version = 1
seed = 3

[system]
name = "vdp"
dynamics = ["-x2", "x1 + 5*x2*(x1^2 - 1)"]

[tolerances]
gamma_bisect = 1e-3
beta_bisect = 1e-3
beta_stall = 1e-3
max_iters = 2

[verify]
samples = 300
box_lo = [-3.0, -3.0]
box_hi = [3.0, 3.0]

[[rounds]]
initial_v = "lyapunov"

[[rounds.shapes]]
center_mode = "ray"
theta_deg = 60.0
N = [1.0, 0.0, 0.0, 0.5]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn certificate(sys: &[&str], v: &str, gamma: f64) -> Certificate {
    let system = DynamicalSystem::parse("custom", sys).unwrap();
    let n = system.nvars();
    Certificate {
        v: Polynomial::parse(v, n).unwrap(),
        gamma,
        s0: Polynomial::zero(n),
        shapes: vec![],
        l1: Polynomial::zero(n),
        l2: Polynomial::zero(n),
        round_index: 1,
        iter_index: 1,
        global: false,
        system,
    }
}

#[test]
fn estimate_writes_verified_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL_VDP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = roa(&["--quiet", "estimate", "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["certificate.cert", "round_1.cert", "trace.csv", "timing.csv", "summary.txt"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }
    for f in ["certificate.cert", "trace.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let trace = std::fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    let cert = Certificate::from_text(&std::fs::read_to_string(a.join("certificate.cert")).unwrap()).unwrap();
    assert!(cert.replay(&Default::default()).unwrap().passed());
    assert_eq!(cert.shapes.len(), 1);

    let o = roa(&["--quiet", "verify", s(&a.join("certificate.cert")), "--samples", "300"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn estimate_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let low = SMALL_VDP.replace("[tolerances]", "[degrees]\nv = 6\ns0 = [2, 4]\nsi = [0, 2]\n\n[tolerances]");
    let cfg = write_config(dir.path(), "low.toml", &low);
    let o = roa(&["estimate", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("degrees.si") && err.contains("deg(p_i) + deg(s_i)"), "{err}");

    let cfg = write_config(dir.path(), "unknown.toml", "version = 1\n[system]\npreset = \"ex9\"\n");
    assert_eq!(code(&roa(&["estimate", "--config", s(&cfg)])), 1);
    assert_eq!(code(&roa(&["estimate", "--config", s(&dir.path().join("missing.toml"))])), 1);
    assert_eq!(code(&roa(&["estimate"])), 1);
    assert_eq!(code(&roa(&["frobnicate"])), 1);
    assert_eq!(code(&roa(&["--help"])), 0);
}

#[test]
fn unstable_origin_is_infeasible_at_start() {
    let dir = tempfile::tempdir().unwrap();
    let text = "version = 1\n[system]\ndynamics = [\"x1 - x1^3\", \"-x2\"]\n[[rounds]]\ninitial_v = \"lyapunov\"\n";
    let cfg = write_config(dir.path(), "unstable.toml", text);
    let o = roa(&["--quiet", "estimate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_catches_inflated_level() {
    let dir = tempfile::tempdir().unwrap();
    let sys = DynamicalSystem::parse("vdp", &["-x2", "x1 + 5*x2*(x1^2 - 1)"]).unwrap();
    let cfg = IterationConfig::new(2);
    let v0 = roa_core::lyap::initial_candidate(&sys, &cfg.lyapunov_q).unwrap();
    let mut cert = level_set_certificate(&sys, &v0, &cfg).unwrap();
    let good = dir.path().join("good.cert");
    std::fs::write(&good, cert.to_text()).unwrap();
    let o = roa(&["--quiet", "verify", s(&good), "--samples", "500", "--box", "-3,-3", "3,3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    cert.gamma *= 10.0;
    let bad = dir.path().join("bad.cert");
    std::fs::write(&bad, cert.to_text()).unwrap();
    let report = dir.path().join("report.csv");
    let o = roa(&["--quiet", "verify", s(&bad), "--samples", "500", "--seed", "2", "--out", s(&report)]);
    assert_eq!(code(&o), 3);
    let csv = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "kind,x1,x2,value");
    assert!(rows.len() >= 2);

    assert_eq!(code(&roa(&["verify", s(&dir.path().join("none.cert"))])), 1);
    std::fs::write(dir.path().join("junk.cert"), "not a certificate").unwrap();
    assert_eq!(code(&roa(&["verify", s(&dir.path().join("junk.cert"))])), 1);
}

#[test]
fn boundary_of_unit_circle() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("circle.cert");
    std::fs::write(&cert, certificate(&["-x1", "-x2"], "x1^2 + x2^2", 1.0).to_text()).unwrap();
    let out = dir.path().join("circle.csv");
    let o = roa(&["--quiet", "boundary", s(&cert), "--resolution", "401", "--box", "-2,-2", "2,2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("polyline,x1,x2"));
    let pts: Vec<(usize, f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert!(pts.iter().all(|p| p.0 == pts[0].0));
    assert_eq!((pts[0].1, pts[0].2), (pts[pts.len() - 1].1, pts[pts.len() - 1].2));
    let tol = 2.0 * std::f64::consts::PI / 400.0;
    for (_, x, y) in &pts {
        assert!(((x * x + y * y).sqrt() - 1.0).abs() <= tol);
    }
    let again = roa(&["boundary", s(&cert), "--resolution", "401", "--box", "-2,-2", "2,2"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
}

#[test]
fn boundary_point_cloud_in_three_states() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("ball.cert");
    std::fs::write(&cert, certificate(&["-x1", "-x2", "-x3"], "x1^2 + x2^2 + x3^2", 1.0).to_text()).unwrap();
    let o = roa(&["boundary", s(&cert), "--resolution", "21"]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3"));
    let mut n = 0;
    for l in lines {
        let r: f64 = l.split(',').map(|t| t.parse::<f64>().unwrap().powi(2)).sum::<f64>().sqrt();
        assert!((r - 1.0).abs() < 0.35, "{l}");
        n += 1;
    }
    assert!(n > 50);
}

#[test]
fn compare_reports_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let sys = ["-x1", "-x2"];
    let small = dir.path().join("small.cert");
    let big = dir.path().join("big.cert");
    std::fs::write(&small, certificate(&sys, "x1^2 + x2^2", 0.25).to_text()).unwrap();
    std::fs::write(&big, certificate(&sys, "x1^2 + x2^2", 1.0).to_text()).unwrap();
    let cfg = write_config(
        dir.path(),
        "decay.toml",
        "version = 1\n[system]\ndynamics = [\"-x1\", \"-x2\"]\n[verify]\nsamples = 10\nbox_lo = [-2.0, -2.0]\nbox_hi = [2.0, 2.0]\n[[rounds]]\ninitial_v = \"lyapunov\"\n",
    );
    let o = roa(&["compare", s(&small), s(&big), "--config", s(&cfg), "--resolution", "41"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = out.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["label", "area", "coverage", "violations"]);
    let area = |r: &Vec<&str>| r[1].parse::<f64>().unwrap();
    assert!(area(&rows[1]) < area(&rows[2]));
    assert!((area(&rows[2]) - std::f64::consts::PI).abs() < 0.1);
    let ratio_row = rows.iter().find(|r| r[0] == "small" && r.len() == 3).unwrap();
    let r: f64 = ratio_row[2].parse().unwrap();
    assert!((r - 0.25).abs() < 0.03, "{r}");

    std::fs::write(dir.path().join("other.cert"), certificate(&["-x2", "x1 - x2"], "x1^2 + x2^2", 1.0).to_text()).unwrap();
    let o = roa(&["compare", s(&dir.path().join("other.cert")), "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn list_and_emit_presets() {
    let o = roa(&["list-systems"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&roa(&["--quiet", "list-systems", "--out", s(dir.path())])), 0);
    for name in bench::NAMES {
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.toml"))).unwrap();
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, RunConfig::from_preset(&bench::get(name).unwrap()));
    }
}

#[test]
fn shipped_configs_match_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in bench::NAMES {
        let text = std::fs::read_to_string(root.join(format!("{name}.toml"))).unwrap();
        assert_eq!(text, RunConfig::from_preset(&bench::get(name).unwrap()).to_toml(), "{name}.toml is stale");
    }
}
