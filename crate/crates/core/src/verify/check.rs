use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::poly::CompiledPoly;
use crate::vsiter::Certificate;

use super::{simulate, IntegratorSettings, StateBox, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSettings {
    pub samples: usize,
    pub seed: u64,
    /// Samples this close to `{V = gamma}` skip the trajectory check.
    pub boundary_band: f64,
    /// The decrease condition is not checked inside this ball.
    pub origin_ball: f64,
    /// Rejection sampling gives up after `samples * max_attempts_factor` draws.
    pub max_attempts_factor: usize,
    pub integrator: IntegratorSettings,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            samples: 10_000,
            seed: 0,
            boundary_band: 1e-3,
            origin_ball: 1e-3,
            max_attempts_factor: 1000,
            integrator: IntegratorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// `V(x) <= 0` away from the origin.
    NotPositive,
    /// `dV/dt >= 0` inside the certified set.
    NotDecreasing,
    /// A point of `{p_i <= beta_i}` lies outside `{V <= gamma}`; holds the 1-based shape index.
    ShapeOutside(usize),
    /// The trajectory from a certified point does not reach the origin.
    NotConverged,
}

impl ViolationKind {
    fn label(&self) -> String {
        match self {
            ViolationKind::NotPositive => "not_positive".into(),
            ViolationKind::NotDecreasing => "not_decreasing".into(),
            ViolationKind::ShapeOutside(i) => format!("shape_{i}_outside"),
            ViolationKind::NotConverged => "not_converged".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub x: Vec<f64>,
    /// `V(x)` for level-set samples, `p_i(x)` for shape samples.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    pub attempts: usize,
    pub band_excluded: usize,
    pub shape_samples: usize,
    pub violations: Vec<Violation>,
    pub seed: u64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    /// Rows `kind,x1,..,xn,value` under a commented summary.
    pub fn to_csv(&self, nvars: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# seed {} samples {} attempts {} band_excluded {} shape_samples {} violations {}",
            self.seed,
            self.samples,
            self.attempts,
            self.band_excluded,
            self.shape_samples,
            self.violations.len()
        );
        s.push_str("kind");
        for k in 1..=nvars {
            let _ = write!(s, ",x{k}");
        }
        s.push_str(",value\n");
        for v in &self.violations {
            s.push_str(&v.kind.label());
            for x in &v.x {
                let _ = write!(s, ",{x}");
            }
            let _ = writeln!(s, ",{}", v.value);
        }
        s
    }
}

fn uniform_in(bounds: &StateBox, rng: &mut ChaCha8Rng, x: &mut [f64]) {
    for (k, xk) in x.iter_mut().enumerate() {
        *xk = rng.random_range(bounds.lo()[k]..bounds.hi()[k]);
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Samples the certified set `{V <= gamma}` inside `bounds` and checks the
/// Lyapunov conditions pointwise, the shape containments, and convergence
/// of the sampled trajectories.
pub fn check_certificate(
    cert: &Certificate,
    bounds: &StateBox,
    settings: &CheckSettings,
) -> Result<VerificationReport, VerifyError> {
    let n = cert.nvars();
    if bounds.nvars() != n {
        return Err(VerifyError::DimensionMismatch {
            expected: n,
            found: bounds.nvars(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let v = cert.v.compile();
    let grad: Vec<CompiledPoly> = cert.v.grad().iter().map(|g| g.compile()).collect();
    let vdot = cert.system.lie_derivative(&cert.v).expect("certificate dimensions agree").compile();
    let field = cert.system.compile();
    let gamma = cert.gamma;

    let mut report = VerificationReport {
        samples: 0,
        attempts: 0,
        band_excluded: 0,
        shape_samples: 0,
        violations: Vec::new(),
        seed: settings.seed,
    };
    let max_attempts = settings.samples.saturating_mul(settings.max_attempts_factor);
    let mut x = vec![0.0; n];
    while report.samples < settings.samples && report.attempts < max_attempts {
        report.attempts += 1;
        uniform_in(bounds, &mut rng, &mut x);
        let vx = v.eval(&x);
        if vx > gamma {
            continue;
        }
        report.samples += 1;
        let r = norm(&x);
        if r > 0.0 && vx <= 0.0 {
            report.violations.push(Violation {
                kind: ViolationKind::NotPositive,
                x: x.clone(),
                value: vx,
            });
        }
        if r > settings.origin_ball && vdot.eval(&x) >= 0.0 {
            report.violations.push(Violation {
                kind: ViolationKind::NotDecreasing,
                x: x.clone(),
                value: vx,
            });
        }
        let g = norm(&grad.iter().map(|p| p.eval(&x)).collect::<Vec<_>>());
        if g > 0.0 && (gamma - vx) / g <= settings.boundary_band {
            report.band_excluded += 1;
            continue;
        }
        if !simulate(&field, &x, &settings.integrator).converged {
            report.violations.push(Violation {
                kind: ViolationKind::NotConverged,
                x: x.clone(),
                value: vx,
            });
        }
    }

    let tol = 1e-9 * gamma.abs().max(1.0);
    for (i, fs) in cert.shapes.iter().enumerate() {
        let l = match fs.shape.matrix().clone().cholesky() {
            Some(c) => c.l(),
            None => continue,
        };
        let lt = l.transpose();
        let scale = fs.beta.max(0.0).sqrt();
        let center = fs.shape.center();
        for _ in 0..settings.samples {
            // uniform point of the unit ball, mapped onto the ellipsoid
            let u = loop {
                let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                if norm(&u) <= 1.0 {
                    break u;
                }
            };
            let y = lt
                .clone()
                .solve_upper_triangular(&nalgebra::DVector::from_vec(u))
                .expect("cholesky factor is nonsingular");
            let p: Vec<f64> = (0..n).map(|k| center[k] + scale * y[k]).collect();
            report.shape_samples += 1;
            let vp = v.eval(&p);
            if vp > gamma + tol {
                report.violations.push(Violation {
                    kind: ViolationKind::ShapeOutside(i + 1),
                    x: p.clone(),
                    value: fs.shape.eval(&p),
                });
            }
        }
    }
    Ok(report)
}
