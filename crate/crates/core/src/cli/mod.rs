//! The `roa` command-line tool.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::bench::{self, BenchmarkPreset};
use crate::shapes::{ray_level_intersection, RaySpec};
use crate::verify::{
    self, check_certificate, marching_squares, polylines_csv, straddling_cells, CheckSettings, StateBox,
};
use crate::vsiter::{run_multiround, timing_csv, trace_csv, Certificate, VsError};

pub use config::{
    CenterMode, CenteringName, DegreesSection, MarginsSection, ResolvedRun, RoundSection, RunConfig, ShapeSection,
    SolverSection, SystemSection, TolerancesSection, VerifySection, CONFIG_VERSION, DEFAULT_BOX_RADIUS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

const AFTER_HELP: &str = "\
Exit codes: 0 ok, 1 usage or config error, 2 infeasible at the start, 3 verification failed.

Output files:
  estimate   round_<k>.cert, certificate.cert (last round), trace.csv, timing.csv, summary.txt
             trace.csv   round,iter,gamma,beta_1..beta_n,gamma_sdp_iters,beta_sdp_iters,v_sdp_iters
             timing.csv  round,iter,wall_secs
  verify     violations: kind,x1..xn,value  (kind: not_positive | not_decreasing | shape_outside_<i> | not_converged)
  boundary   2 states: polyline,x1,x2 (closed polylines repeat their first point)
             3 states: x1,x2,x3 (centers of grid cells the level set crosses)
  compare    label,area,coverage,violations followed by pairwise area ratios (row / column)";

#[derive(Debug, Parser)]
#[command(name = "roa", version, about = "Region-of-attraction estimates with polynomial Lyapunov certificates", after_help = AFTER_HELP)]
pub struct Cli {
    /// Suppress progress logging and the printed summary.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the iteration from a config file and verify every round's certificate.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Check a certificate by sampling and simulating trajectories.
    Verify {
        certificate: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Violation report path (default: <certificate>.violations.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sampling box: comma-separated lower corner, then upper corner.
        #[arg(long, num_args = 2, allow_hyphen_values = true, value_names = ["LO", "HI"])]
        r#box: Option<Vec<String>>,
    },
    /// Export the boundary of the certified level set.
    Boundary {
        certificate: PathBuf,
        /// Grid points per axis (default 401 for 2 states, 61 for 3).
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, num_args = 2, allow_hyphen_values = true, value_names = ["LO", "HI"])]
        r#box: Option<Vec<String>>,
    },
    /// Compare certificates of one system against the simulation oracle.
    Compare {
        certificates: Vec<PathBuf>,
        /// Preset name whose dynamics and box the certificates must match.
        #[arg(long, conflicts_with = "config")]
        system: Option<String>,
        /// Take the system and box from a run config instead.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 151)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped benchmark systems; optionally write their configs.
    ListSystems {
        /// Directory to write `<name>.toml` run configs into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if cli.quiet {
        log::set_max_level(log::LevelFilter::Off);
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cli: &Cli) -> CmdResult {
    let quiet = cli.quiet;
    match &cli.command {
        Command::Estimate {
            config,
            out,
            seed,
            samples,
        } => cmd_estimate(config, out.as_deref(), *seed, *samples, quiet),
        Command::Verify {
            certificate,
            samples,
            seed,
            out,
            r#box,
        } => cmd_verify(certificate, *samples, *seed, out.as_deref(), r#box.as_deref(), quiet),
        Command::Boundary {
            certificate,
            resolution,
            out,
            r#box,
        } => cmd_boundary(certificate, *resolution, out.as_deref(), r#box.as_deref(), quiet),
        Command::Compare {
            certificates,
            system,
            config,
            resolution,
            out,
        } => cmd_compare(certificates, system.as_deref(), config.as_deref(), *resolution, out.as_deref(), quiet),
        Command::ListSystems { out } => cmd_list(out.as_deref(), quiet),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn load_certificate(path: &Path) -> Result<Certificate, Failure> {
    Certificate::from_text(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn estimate_failure(e: VsError) -> Failure {
    let code = match e {
        VsError::InfeasibleAtZero
        | VsError::ShapeInfeasible { .. }
        | VsError::NoCertificate
        | VsError::Lyapunov(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

fn check_settings(samples: usize, seed: u64) -> CheckSettings {
    CheckSettings {
        samples,
        seed,
        ..CheckSettings::default()
    }
}

fn cmd_estimate(path: &Path, out: Option<&Path>, seed: Option<u64>, samples: Option<usize>, quiet: bool) -> CmdResult {
    let cfg = RunConfig::from_toml(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let run = cfg
        .resolve()
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let seed = seed.unwrap_or(run.seed);
    let samples = samples.unwrap_or(run.samples);
    if samples == 0 {
        return Err(Failure::usage("--samples must be positive"));
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| run.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;

    let clock = Instant::now();
    let results = run_multiround(&run.system, &run.rounds, &run.config).map_err(estimate_failure)?;
    let elapsed = clock.elapsed().as_secs_f64();

    let rows: Vec<_> = results.iter().flat_map(|r| r.trace.iter().cloned()).collect();
    write(&dir.join("trace.csv"), &trace_csv(&rows))?;
    write(&dir.join("timing.csv"), &timing_csv(&rows))?;
    let mut summary = String::new();
    let _ = writeln!(summary, "system {}", run.system.name());
    let _ = writeln!(summary, "rounds {}", results.len());
    let mut failed = Vec::new();
    for r in &results {
        let cert = &r.certificate;
        let text = cert.to_text();
        write(&dir.join(format!("round_{}.cert", r.round_index)), &text)?;
        let report = check_certificate(cert, &run.bounds, &check_settings(samples, seed))
            .map_err(|e| Failure::usage(e.to_string()))?;
        let size = region_size(&[cert], &run.bounds, seed);
        let _ = writeln!(
            summary,
            "round {}: iterations {} stop {} gamma {} shapes {} {} {:.6} violations {}",
            r.round_index,
            r.trace.len(),
            r.stop.as_str(),
            cert.gamma,
            cert.shapes.len(),
            if cert.nvars() == 2 { "area" } else { "volume" },
            size,
            report.violations.len()
        );
        if !report.passed() {
            let name = format!("violations_round_{}.csv", r.round_index);
            write(&dir.join(&name), &report.to_csv(cert.nvars()))?;
            failed.push(name);
        }
    }
    let last = &results.last().expect("at least one round").certificate;
    write(&dir.join("certificate.cert"), &last.to_text())?;
    let all: Vec<&Certificate> = results.iter().map(|r| &r.certificate).collect();
    let _ = writeln!(
        summary,
        "union {} {:.6}",
        if last.nvars() == 2 { "area" } else { "volume" },
        region_size(&all, &run.bounds, seed)
    );
    let _ = writeln!(summary, "seed {seed} samples {samples}");
    let _ = writeln!(summary, "elapsed_secs {elapsed:.1}");
    write(&dir.join("summary.txt"), &summary)?;
    if !quiet {
        print!("{summary}");
        println!("wrote {}", dir.display());
    }
    if !failed.is_empty() {
        return Err(Failure {
            code: EXIT_VERIFY_FAILED,
            message: format!("verification failed; see {}", failed.join(", ")),
        });
    }
    Ok(())
}

/// Grid area for 2 states, Monte Carlo volume otherwise.
fn region_size(certs: &[&Certificate], bounds: &StateBox, seed: u64) -> f64 {
    if bounds.nvars() == 2 {
        verify::certified_area(certs, bounds, 301).expect("planar box")
    } else {
        verify::monte_carlo_volume(certs, bounds, 100_000, seed)
    }
}

fn parse_box(spec: &[String], n: usize) -> Result<StateBox, Failure> {
    let corner = |s: &str| -> Result<Vec<f64>, Failure> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::usage(format!("--box: bad corner {s:?}")))?;
        if v.len() != n {
            return Err(Failure::usage(format!("--box: expected {n} coordinates in {s:?}")));
        }
        Ok(v)
    };
    StateBox::new(corner(&spec[0])?, corner(&spec[1])?).map_err(|e| Failure::usage(format!("--box: {e}")))
}

fn matching_preset(cert: &Certificate) -> Option<BenchmarkPreset> {
    bench::get(cert.system.name())
        .ok()
        .filter(|p| p.system.field() == cert.system.field())
}

/// Box around the component of `{V <= gamma}` containing the origin, found
/// by ray casting and padded by a quarter.
pub fn level_set_box(cert: &Certificate) -> StateBox {
    let n = cert.nvars();
    let rays: Vec<RaySpec> = if n == 2 {
        (0..720).map(|k| RaySpec::Planar { theta_deg: k as f64 * 0.5 }).collect()
    } else {
        let mut r = Vec::new();
        for i in 0..=36 {
            for j in 0..72 {
                r.push(RaySpec::Spatial {
                    theta_deg: -90.0 + 5.0 * i as f64,
                    psi_deg: 5.0 * j as f64,
                });
            }
        }
        r
    };
    let mut lo = vec![0.0f64; n];
    let mut hi = vec![0.0f64; n];
    for ray in rays {
        let Ok(p) = ray_level_intersection(&cert.v, cert.gamma, &ray) else {
            continue;
        };
        for k in 0..n {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for k in 0..n {
        let pad = 0.25 * (hi[k] - lo[k]).max(1e-3);
        lo[k] -= pad;
        hi[k] += pad;
    }
    StateBox::new(lo, hi).expect("padded box")
}

fn certificate_box(cert: &Certificate, spec: Option<&[String]>) -> Result<StateBox, Failure> {
    if let Some(spec) = spec {
        return parse_box(spec, cert.nvars());
    }
    Ok(match matching_preset(cert) {
        Some(p) => p.bounds,
        None => level_set_box(cert),
    })
}

fn cmd_verify(
    path: &Path,
    samples: usize,
    seed: u64,
    out: Option<&Path>,
    bbox: Option<&[String]>,
    quiet: bool,
) -> CmdResult {
    if samples == 0 {
        return Err(Failure::usage("--samples must be positive"));
    }
    let cert = load_certificate(path)?;
    let bounds = certificate_box(&cert, bbox)?;
    let report =
        check_certificate(&cert, &bounds, &check_settings(samples, seed)).map_err(|e| Failure::usage(e.to_string()))?;
    if !quiet {
        println!(
            "{}: {} samples ({} attempts, {} in the boundary band, {} shape samples), {} violations",
            path.display(),
            report.samples,
            report.attempts,
            report.band_excluded,
            report.shape_samples,
            report.violations.len()
        );
    }
    if report.passed() {
        return Ok(());
    }
    let report_path = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = path.as_os_str().to_owned();
        p.push(".violations.csv");
        PathBuf::from(p)
    });
    write(&report_path, &report.to_csv(cert.nvars()))?;
    Err(Failure {
        code: EXIT_VERIFY_FAILED,
        message: format!(
            "{} violations; report written to {}",
            report.violations.len(),
            report_path.display()
        ),
    })
}

fn cmd_boundary(
    path: &Path,
    resolution: Option<usize>,
    out: Option<&Path>,
    bbox: Option<&[String]>,
    quiet: bool,
) -> CmdResult {
    let cert = load_certificate(path)?;
    let bounds = certificate_box(&cert, bbox)?;
    let csv = match cert.nvars() {
        2 => {
            let lines = marching_squares(&cert.v, cert.gamma, &bounds, resolution.unwrap_or(401))
                .map_err(|e| Failure::usage(e.to_string()))?;
            polylines_csv(&lines)
        }
        3 => {
            let cells = straddling_cells(&cert.v, cert.gamma, &bounds, resolution.unwrap_or(61))
                .map_err(|e| Failure::usage(e.to_string()))?;
            let mut s = String::from("x1,x2,x3\n");
            for c in cells {
                let _ = writeln!(s, "{},{},{}", c[0], c[1], c[2]);
            }
            s
        }
        n => return Err(Failure::usage(format!("boundary export supports 2 or 3 states, found {n}"))),
    };
    match out {
        Some(p) => {
            write(p, &csv)?;
            if !quiet {
                println!("wrote {}", p.display());
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_compare(
    paths: &[PathBuf],
    system: Option<&str>,
    config: Option<&Path>,
    resolution: usize,
    out: Option<&Path>,
    quiet: bool,
) -> CmdResult {
    if paths.is_empty() {
        return Err(Failure::usage("compare needs at least one certificate"));
    }
    let (sys, bounds) = match (system, config) {
        (Some(name), None) => {
            let p = bench::get(name).map_err(Failure::usage)?;
            (p.system, p.bounds)
        }
        (None, Some(path)) => {
            let cfg = RunConfig::from_toml(&read(path)?).map_err(Failure::usage)?;
            let run = cfg.resolve().map_err(Failure::usage)?;
            (run.system, run.bounds)
        }
        _ => return Err(Failure::usage("give --system <preset> or --config <file>")),
    };
    let certs = paths.iter().map(|p| load_certificate(p)).collect::<Result<Vec<_>, _>>()?;
    for (p, c) in paths.iter().zip(&certs) {
        if c.system.field() != sys.field() {
            return Err(Failure::usage(format!("{}: dynamics differ from {}", p.display(), sys.name())));
        }
    }
    let table = compare_table(&sys, &bounds, &certs, &paths.iter().map(|p| label(p)).collect::<Vec<_>>(), resolution)
        .map_err(|e| Failure::usage(e.to_string()))?;
    match out {
        Some(p) => write(p, &table)?,
        None => {}
    }
    if !quiet || out.is_none() {
        print!("{table}");
    }
    Ok(())
}

/// Coverage against the simulation oracle plus pairwise area ratios.
pub fn compare_table(
    sys: &crate::DynamicalSystem,
    bounds: &StateBox,
    certs: &[Certificate],
    labels: &[String],
    resolution: usize,
) -> Result<String, verify::VerifyError> {
    let oracle = verify::oracle_roa_mask(sys, bounds, resolution, &Default::default())?;
    let mut s = String::new();
    let _ = writeln!(s, "# oracle area {} at resolution {resolution}", oracle.area());
    s.push_str("label,area,coverage,violations\n");
    let mut areas = Vec::with_capacity(certs.len());
    for (c, l) in certs.iter().zip(labels) {
        let r = verify::coverage(&[c], &oracle)?;
        let _ = writeln!(s, "{l},{},{},{}", r.estimated_area, r.ratio, r.violations);
        areas.push(r.estimated_area);
    }
    s.push_str("\nratio");
    for l in labels {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for (a, l) in areas.iter().zip(labels) {
        s.push_str(l);
        for b in &areas {
            let r = if *b > 0.0 { a / b } else { f64::INFINITY };
            let _ = write!(s, ",{r}");
        }
        s.push('\n');
    }
    Ok(s)
}

fn cmd_list(out: Option<&Path>, quiet: bool) -> CmdResult {
    let list = bench::list();
    if !quiet || out.is_none() {
        for e in &list {
            println!(
                "{:<4} nvars {}  rounds {}  shapes {:?}  {}",
                e.name, e.nvars, e.rounds, e.shapes_per_round, e.summary
            );
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
        for e in &list {
            let cfg = RunConfig::from_preset(&bench::get(e.name).expect("listed preset"));
            write(&dir.join(format!("{}.toml", e.name)), &cfg.to_toml())?;
        }
    }
    Ok(())
}
