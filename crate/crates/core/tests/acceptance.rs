//! End-to-end acceptance checks on the shipped benchmarks.
//!
//! Each criterion prints a single `criterion N: PASS|FAIL ...` line before
//! asserting. Preset runs are shared between criteria.

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use roa_core::bench::{self, BenchmarkPreset};
use roa_core::lyap;
use roa_core::sdp::SdpOptions;
use roa_core::shapes::ShapeFunction;
use roa_core::sos::{monomial_basis, SosExpression, SosProgram};
use roa_core::verify::{
    certified_area, check_certificate, coverage, monte_carlo_volume, oracle_roa_mask, CheckSettings,
    IntegratorSettings, VerificationReport, ViolationKind,
};
use roa_core::vsiter::{
    beta_step, gamma_step, level_set_certificate, run_multiround, run_round, Certificate, DegreeRange, InitialV,
    IterationConfig, Placement, RoundConfig, RoundResult, ShapeSpec,
};
use roa_core::{DynamicalSystem, Polynomial};

const VDP_MIN_COVERAGE: f64 = 0.95;
const VDP_ORACLE_RESOLUTION: usize = 301;
const VDP_MAX_RUNTIME: Duration = Duration::from_secs(30 * 60);
const VDP_REFERENCE_ITERS: [usize; 3] = [78, 46, 5];
const ITER_FACTOR: f64 = 3.0;
const AREA_RESOLUTION: usize = 301;
const EX2_HALF_PLANE: f64 = 0.5;
const EX3_MAX_RUNTIME: Duration = Duration::from_secs(10 * 60);
const EX4_MC_SAMPLES: usize = 100_000;
const EX4_MC_SEED: u64 = 7;
const CHECK_SAMPLES: usize = 10_000;
const CHECK_BAND: f64 = 1e-3;
const LYAP_RESIDUAL: f64 = 1e-10;
const GRAD_FD_ERROR: f64 = 1e-6;
const SOS_NONNEG: f64 = -1e-7;
const SHIFTED_DISK_BETA: f64 = 0.36;
const BISECTION_REL: f64 = 1e-3;

struct Run {
    preset: BenchmarkPreset,
    rounds: Vec<RoundResult>,
    elapsed: Duration,
}

impl Run {
    fn certs(&self) -> Vec<&Certificate> {
        self.rounds.iter().map(|r| &r.certificate).collect()
    }

    fn last(&self) -> &Certificate {
        &self.rounds.last().expect("at least one round").certificate
    }
}

fn run_preset(name: &str) -> Run {
    let preset = bench::get(name).expect("preset exists");
    let t = Instant::now();
    let rounds = run_multiround(&preset.system, &preset.rounds, &preset.config).expect("preset run succeeds");
    let elapsed = t.elapsed();
    for r in &rounds {
        eprintln!(
            "{name} round {}: {} iterations, stop {}, gamma {:.6e}",
            r.round_index,
            r.trace.len(),
            r.stop.as_str(),
            r.certificate.gamma
        );
    }
    eprintln!("{name}: {:.1} s", elapsed.as_secs_f64());
    Run { preset, rounds, elapsed }
}

macro_rules! shared_run {
    ($fn_name:ident, $name:literal) => {
        fn $fn_name() -> &'static Run {
            static CELL: OnceLock<Run> = OnceLock::new();
            CELL.get_or_init(|| run_preset($name))
        }
    };
}

shared_run!(vdp, "vdp");
shared_run!(ex2, "ex2");
shared_run!(ex3, "ex3");
shared_run!(ex4, "ex4");

fn check_settings() -> CheckSettings {
    CheckSettings {
        samples: CHECK_SAMPLES,
        boundary_band: CHECK_BAND,
        ..CheckSettings::default()
    }
}

/// Verification reports for every round certificate of a preset.
fn checks(run: &Run) -> Vec<VerificationReport> {
    run.rounds
        .iter()
        .map(|r| check_certificate(&r.certificate, &run.preset.bounds, &check_settings()).expect("check runs"))
        .collect()
}

fn ex4_checks() -> &'static Vec<VerificationReport> {
    static CELL: OnceLock<Vec<VerificationReport>> = OnceLock::new();
    CELL.get_or_init(|| checks(ex4()))
}

fn report(criterion: u32, ok: bool, detail: &str) {
    println!("criterion {criterion}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn areas(run: &Run) -> Vec<f64> {
    run.rounds
        .iter()
        .map(|r| certified_area(&[&r.certificate], &run.preset.bounds, AREA_RESOLUTION).unwrap())
        .collect()
}

#[test]
fn criterion_1_vdp_coverage() {
    let run = vdp();
    let oracle = oracle_roa_mask(
        &run.preset.system,
        &run.preset.bounds,
        VDP_ORACLE_RESOLUTION,
        &IntegratorSettings::default(),
    )
    .unwrap();
    let cov = coverage(&run.certs(), &oracle).unwrap();
    let iters: Vec<usize> = run.rounds.iter().map(|r| r.trace.len()).collect();
    let iters_ok = iters.len() == VDP_REFERENCE_ITERS.len()
        && iters.iter().zip(VDP_REFERENCE_ITERS).all(|(&got, reference)| {
            let r = got as f64 / reference as f64;
            (1.0 / ITER_FACTOR..=ITER_FACTOR).contains(&r)
        });
    let ok = cov.ratio >= VDP_MIN_COVERAGE && run.elapsed <= VDP_MAX_RUNTIME && iters_ok && cov.violations == 0;
    report(
        1,
        ok,
        &format!(
            "coverage {:.4} (area {:.3} of {:.3}, >= {VDP_MIN_COVERAGE}), oracle-violating cells {}, iterations {iters:?} vs {VDP_REFERENCE_ITERS:?}, runtime {:.0} s",
            cov.ratio,
            cov.estimated_area,
            cov.oracle_area,
            cov.violations,
            run.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_method_ordering() {
    let run = vdp();
    let p = &run.preset;
    let v0 = lyap::initial_candidate(&p.system, &p.config.lyapunov_q).unwrap();

    let no_sf = run_round(
        &p.system,
        &RoundConfig {
            initial_v: InitialV::LyapunovEquation,
            shapes: Vec::new(),
        },
        &p.config,
        &v0,
        1,
    )
    .unwrap();
    let ld = level_set_certificate(&p.system, &v0, &p.config).unwrap();
    let single = run_round(
        &p.system,
        &RoundConfig {
            initial_v: InitialV::LyapunovEquation,
            shapes: vec![ShapeSpec {
                n: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5])),
                placement: Placement::Origin,
            }],
        },
        &p.config,
        &v0,
        1,
    )
    .unwrap();

    let area = |c: &[&Certificate]| certified_area(c, &p.bounds, AREA_RESOLUTION).unwrap();
    let a_no_sf = area(&[&no_sf.certificate]);
    let a_ld = area(&[&ld]);
    let a_single = area(&[&single.certificate]);
    let a_union = area(&run.certs());
    let ok = a_no_sf < a_ld && a_ld < a_single && a_single < a_union;
    report(
        2,
        ok,
        &format!("no-SF {a_no_sf:.3} < LD {a_ld:.3} < single-SF {a_single:.3} < union {a_union:.3}"),
    );
}

/// Smallest `V - gamma` over a fine grid of the half-plane `x1 >= 0.5`
/// (clipped to a wide box) and along the line `x1 = 0.5` itself.
fn min_margin_right_of(cert: &Certificate, x1_min: f64) -> f64 {
    let v = cert.v.compile();
    let mut min = f64::INFINITY;
    let n = 400;
    for i in 0..=n {
        let x1 = x1_min + 10.0 * i as f64 / n as f64;
        for j in 0..=n {
            let x2 = -10.0 + 20.0 * j as f64 / n as f64;
            min = min.min(v.eval(&[x1, x2]) - cert.gamma);
        }
    }
    for j in 0..=20_000 {
        let x2 = -10.0 + 20.0 * j as f64 / 20_000.0;
        min = min.min(v.eval(&[x1_min, x2]) - cert.gamma);
    }
    min
}

#[test]
fn criterion_3_ex2_soundness() {
    let run = ex2();
    let margins: Vec<f64> = run.certs().iter().map(|c| min_margin_right_of(c, EX2_HALF_PLANE)).collect();
    let shown: Vec<String> = margins.iter().map(|m| format!("{m:.3e}")).collect();
    let excluded = run.preset.notes.excluded.iter().all(|x| run.certs().iter().all(|c| !c.contains(x)));
    let a = areas(run);
    let ok = run.rounds.len() == 3 && margins.iter().all(|&m| m > 0.0) && excluded && a[2] > a[1] && a[1] > a[0];
    report(
        3,
        ok,
        &format!(
            "min V - gamma on x1 >= {EX2_HALF_PLANE}: {shown:?}; (1,0) and (0.5,0) excluded: {excluded}; areas 1R {:.3} < 2R {:.3} < 3R {:.3}",
            a[0], a[1], a[2]
        ),
    );
}

#[test]
fn criterion_4_ex3_saddle() {
    let run = ex3();
    let saddle = bench::refine_equilibrium(&run.preset.system, &bench::EX3_SADDLE_PRINTED).expect("saddle refines");
    let values: Vec<f64> = run.certs().iter().map(|c| c.v.eval(&saddle) / c.gamma).collect();
    let a = areas(run);
    let ok = values.iter().all(|&v| v > 1.0) && a.len() == 2 && a[1] > a[0] && run.elapsed <= EX3_MAX_RUNTIME;
    report(
        4,
        ok,
        &format!(
            "saddle ({:.4}, {:.4}) has V/gamma {values:.3?}; areas 1R {:.3} < 2R {:.3}; runtime {:.0} s",
            saddle[0],
            saddle[1],
            a[0],
            a[1],
            run.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_ex4_three_dimensional() {
    let run = ex4();
    let cuboid = run.preset.rounds[1..].iter().all(|r| r.shapes.len() == 14);
    let vols: Vec<f64> = run
        .rounds
        .iter()
        .map(|r| monte_carlo_volume(&[&r.certificate], &run.preset.bounds, EX4_MC_SAMPLES, EX4_MC_SEED))
        .collect();
    let monotone = vols.windows(2).all(|w| w[1] >= w[0]);
    let last = ex4_checks().last().unwrap();
    let not_converged = last.count(ViolationKind::NotConverged);
    let ok = run.rounds.len() == 3 && cuboid && monotone && not_converged == 0 && last.samples == CHECK_SAMPLES;
    report(
        5,
        ok,
        &format!(
            "{} rounds, 14-angle rounds {cuboid}, MC volumes {vols:.4?}, final check {} samples with {not_converged} convergence violations",
            run.rounds.len(),
            last.samples
        ),
    );
}

#[test]
fn criterion_6_certificate_soundness() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, run) in [("vdp", vdp()), ("ex2", ex2()), ("ex3", ex3())] {
        for (k, rep) in checks(run).iter().enumerate() {
            ok &= rep.passed() && rep.samples == CHECK_SAMPLES;
            ok &= rep.shape_samples == CHECK_SAMPLES * run.rounds[k].certificate.shapes.len();
            lines.push(format!("{name} R{}: {} violations", k + 1, rep.violations.len()));
        }
    }
    for (k, rep) in ex4_checks().iter().enumerate() {
        ok &= rep.passed() && rep.samples == CHECK_SAMPLES;
        ok &= rep.shape_samples == CHECK_SAMPLES * ex4().rounds[k].certificate.shapes.len();
        lines.push(format!("ex4 R{}: {} violations", k + 1, rep.violations.len()));
    }
    report(6, ok, &lines.join(", "));
}

/// Central finite difference of `v` along axis `k`.
fn fd(v: &Polynomial, x: &[f64], k: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[k] += h;
    b[k] -= h;
    (v.eval(&a) - v.eval(&b)) / (2.0 * h)
}

fn p(s: &str, n: usize) -> Polynomial {
    Polynomial::parse(s, n).unwrap()
}

#[test]
fn criterion_7_numerical_kernels() {
    let mut ok = true;
    let mut parts = Vec::new();

    // Lyapunov equation residual, computed here from the returned P.
    let mut worst = 0.0f64;
    for name in bench::NAMES {
        let preset = bench::get(name).unwrap();
        let a = lyap::linearize(&preset.system).a;
        let q = DMatrix::identity(a.nrows(), a.nrows());
        let pm = lyap::solve_lyapunov(&a, &q).unwrap();
        let r = (a.transpose() * &pm + &pm * &a + &q).amax();
        worst = worst.max(r);
    }
    ok &= worst <= LYAP_RESIDUAL;
    parts.push(format!("Lyapunov residual {worst:.1e}"));

    // Gradient against central differences on a degree-6 certificate V.
    let v = vdp().last().v.clone();
    let grad = v.grad();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..=10 {
        for j in 0..=10 {
            let x = [-1.0 + 0.2 * i as f64, -1.0 + 0.2 * j as f64];
            for (k, g) in grad.iter().enumerate() {
                worst = worst.max((g.eval(&x) - fd(&v, &x, k, h)).abs());
            }
        }
    }
    ok &= worst <= GRAD_FD_ERROR;
    parts.push(format!("gradient vs FD {worst:.1e}"));

    // Extracted SOS multiplier and the certified identity stay nonnegative.
    let mut prog = SosProgram::new(2);
    let s = prog.add_gram(monomial_basis(2, 0, 2).unwrap()).unwrap();
    let target = p("x1^4 + x1^2*x2^2 + 2*x2^4 + x1^2 + x2^2", 2);
    let mut expr = SosExpression::new(-&target);
    expr.add_product(&s, p("x1^2 + x2^2", 2));
    prog.require_sos("c", expr).unwrap();
    let sol = prog.solve(&SdpOptions::default()).unwrap();
    let extracted = sol.extract(&s).unwrap().polynomial;
    let identity = &(&extracted * &p("x1^2 + x2^2", 2)) - &target;
    let mut min = f64::INFINITY;
    for i in 0..=40 {
        for j in 0..=40 {
            let x = [-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64];
            min = min.min(extracted.eval(&x)).min(identity.eval(&x));
        }
    }
    ok &= sol.is_feasible() && min >= SOS_NONNEG;
    parts.push(format!("SOS extract min {min:.1e}"));

    let motzkin = p("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2);
    let mut prog = SosProgram::new(2);
    prog.require_sos("motzkin", SosExpression::new(motzkin)).unwrap();
    let rejected = !prog.solve(&SdpOptions::default()).unwrap().is_feasible();
    ok &= rejected;
    parts.push(format!("Motzkin rejected {rejected}"));

    let mut cfg = IterationConfig::new(2);
    cfg.deg_v = 2;
    cfg.deg_si = DegreeRange::new(0, 2);
    let disk = p("x1^2 + x2^2", 2);
    let shape = ShapeFunction::new(DMatrix::identity(2, 2), vec![0.4, 0.0]).unwrap();
    let beta = beta_step(&disk, 1.0, &shape, 0, 0.0, &cfg).unwrap().beta;
    let beta_err = (beta - SHIFTED_DISK_BETA).abs() / SHIFTED_DISK_BETA;
    ok &= beta_err <= BISECTION_REL;
    parts.push(format!("shifted disk beta {beta:.5} (rel err {beta_err:.1e})"));

    // x' = -x + x^3 with V = x^2 decreases exactly on x^2 < 1.
    let cubic = DynamicalSystem::parse("cubic", &["-x1 + x1^3"]).unwrap();
    let mut cfg = IterationConfig::new(1);
    cfg.deg_v = 2;
    cfg.gamma_bisect_tol = 1e-4;
    let gamma = gamma_step(&p("x1^2", 1), &cubic, &cfg).unwrap().gamma;
    let gamma_err = (gamma - 1.0).abs();
    ok &= gamma_err <= BISECTION_REL;
    parts.push(format!("cubic gamma {gamma:.5} (rel err {gamma_err:.1e})"));

    report(7, ok, &parts.join(", "));
}

#[test]
fn criterion_8_determinism() {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/ex2.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_roa"))
            .args(["--quiet", "estimate", "--config", config, "--samples", "500", "--out"])
            .arg(d.path())
            .env("RUST_LOG", "warn")
            .output()
            .expect("roa runs");
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files = vec!["certificate.cert".to_string(), "trace.csv".to_string()];
    files.extend((1..=3).map(|k| format!("round_{k}.cert")));
    let mut same = Vec::new();
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        same.push(!a.is_empty() && a == b);
    }
    let ok = same.iter().all(|&s| s);
    report(
        8,
        ok,
        &format!("byte-identical across two runs of configs/ex2.toml: {:?}", files.iter().zip(&same).collect::<Vec<_>>()),
    );
}
